#include "hdgmm/stiefel.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "hdgmm/rng.hpp"

namespace hdgmm {

namespace {

void check_inputs(const Matrix& S, const Vector& a, double b, const Matrix& X,
                  const char* where) {
    if (S.rows() != S.cols() || S.rows() != X.rows()) {
        throw std::invalid_argument(std::string(where) + ": S must be M x M matching X");
    }
    if (a.size() != X.cols()) {
        throw std::invalid_argument(std::string(where) + ": a must have d entries");
    }
    if (!(b > 0.0)) {
        throw std::invalid_argument(std::string(where) + ": b must be positive");
    }
    for (Index j = 0; j < a.size(); ++j) {
        if (!(a[j] > b)) {
            throw std::invalid_argument(std::string(where) + ": requires a_j > b");
        }
    }
}

double feasibility_error(const Matrix& X) {
    const Index d = X.cols();
    return (X.transpose() * X - Matrix::Identity(d, d)).norm();
}

Vector coefficients(const Vector& a, double b) {
    return 1.0 / a.array() - 1.0 / b;
}

// Backtracks along the curvilinear curve through X in direction Z until the
// objective strictly drops below f (beyond rounding); nullopt when no scale
// helps.
std::optional<std::pair<Matrix, double>> line_search_probe(const Matrix& S, const Vector& a,
                                                           double b, const Matrix& X,
                                                           double f, const Matrix& Z,
                                                           const StiefelSettings& settings) {
    const double margin = 1e-14 * (1.0 + std::abs(f));
    double tau = settings.tau0;
    for (int k = 0; k < 16 && tau >= settings.tau_min; ++k, tau *= settings.backtrack) {
        const auto y = cayley_retract(X, Z, tau);
        if (!y) continue;
        const double f_trial = stiefel_objective(S, a, b, *y);
        if (f_trial < f - margin) return std::make_pair(*y, f_trial);
    }
    return std::nullopt;
}

// Every S-invariant span zeroes the projected gradient, but only the top-d
// span minimizes f; a warm start on a stale eigenbasis therefore sits on a
// saddle that the first-order step cannot leave. At such a point the columns
// of X are (numerically) eigenvectors of S, so the second-order change along
// a tangent direction is predictable: rotating column j toward a unit
// complement direction u changes f by about c_j (u^T S u - x_j^T S x_j)
// sin^2(theta), and rotating columns i, j into each other changes it by
// (c_i - c_j)(r_j - r_i) sin^2(theta) with r the Rayleigh quotients. The
// probe amplifies the leading complement direction by a few power-iteration
// steps, screens all candidate rotations by that predicted gain, and
// line-searches the most promising ones; a couple of raw random tangents
// guard the screening blind spots. Only a strict objective decrease is ever
// accepted, so at the true minimum every probe fails and convergence stands.
std::optional<std::pair<Matrix, double>> probe_escape(const Matrix& S, const Vector& a,
                                                      double b, const Matrix& X, double f,
                                                      const StiefelSettings& settings) {
    const Index m = X.rows();
    const Index d = X.cols();
    const Vector c = coefficients(a, b);
    Vector rays(d);
    for (Index j = 0; j < d; ++j) rays(j) = X.col(j).dot(S * X.col(j));

    struct Candidate {
        double gain;
        Matrix dir;
    };
    std::vector<Candidate> candidates;

    Rng rng(0x9e3779b97f4a7c15ull);
    for (int rep = 0; rep < 2 && d < m; ++rep) {
        Vector u(m);
        for (Index i = 0; i < m; ++i) u(i) = rng.normal();
        u -= X * (X.transpose() * u);
        double norm = u.norm();
        if (!(norm > 0.0)) continue;
        u /= norm;
        for (int t = 0; t < 5; ++t) {
            Vector v = S * u;
            v -= X * (X.transpose() * v);
            norm = v.norm();
            if (!(norm > 0.0)) break;
            u = v / norm;
        }
        const double lambda_u = u.dot(S * u);
        for (Index j = 0; j < d; ++j) {
            const double gain = c(j) * (lambda_u - rays(j));
            if (gain < 0.0) {
                Matrix z = Matrix::Zero(m, d);
                z.col(j) = u;
                candidates.push_back({gain, std::move(z)});
            }
        }
    }
    for (Index i = 0; i + 1 < d; ++i) {
        for (Index j = i + 1; j < d; ++j) {
            const double gain = (c(i) - c(j)) * (rays(j) - rays(i));
            if (gain < 0.0) {
                Matrix z = Matrix::Zero(m, d);
                z.col(i) = X.col(j);
                z.col(j) = -X.col(i);
                candidates.push_back({gain, std::move(z)});
            }
        }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& lhs, const Candidate& rhs) {
                         return lhs.gain < rhs.gain;
                     });
    int attempts = 0;
    for (const Candidate& cand : candidates) {
        if (++attempts > 8) break;
        if (auto hit = line_search_probe(S, a, b, X, f, cand.dir, settings)) return hit;
    }

    for (int p = 0; p < 2; ++p) {
        Matrix z(m, d);
        for (Index i = 0; i < m; ++i) {
            for (Index j = 0; j < d; ++j) z(i, j) = rng.normal();
        }
        z -= X * (X.transpose() * z);
        const double zn = z.norm();
        if (!(zn > 0.0)) continue;
        z /= zn;
        if (auto hit = line_search_probe(S, a, b, X, f, z, settings)) return hit;
    }
    return std::nullopt;
}

} // namespace

double stiefel_objective(const Matrix& S, const Vector& a, double b, const Matrix& X) {
    check_inputs(S, a, b, X, "stiefel_objective");
    if (feasibility_error(X) > 1e-8) {
        throw std::invalid_argument("stiefel_objective: X is not orthonormal");
    }
    const Vector c = coefficients(a, b);
    double f = 0.0;
    for (Index j = 0; j < X.cols(); ++j) {
        f += c[j] * X.col(j).dot(S * X.col(j));
    }
    return f;
}

Matrix stiefel_gradient(const Matrix& S, const Vector& a, double b, const Matrix& X) {
    check_inputs(S, a, b, X, "stiefel_gradient");
    const Vector c = coefficients(a, b);
    return 2.0 * (S * X) * c.asDiagonal();
}

std::optional<Matrix> cayley_retract(const Matrix& X, const Matrix& G, double tau) {
    const Index d = X.cols();
    Matrix U(X.rows(), 2 * d);
    U.leftCols(d) = G;
    U.rightCols(d) = X;
    Matrix V(X.rows(), 2 * d);
    V.leftCols(d) = X;
    V.rightCols(d) = -G;

    Matrix inner = Matrix::Identity(2 * d, 2 * d) + (tau / 2.0) * (V.transpose() * U);
    Eigen::FullPivLU<Matrix> lu(inner);
    if (!lu.isInvertible()) return std::nullopt;
    return X - tau * (U * lu.solve(V.transpose() * X));
}

StiefelResult stiefel_optimize(const Matrix& S, const Vector& a, double b,
                               const Matrix& X0, const StiefelSettings& settings) {
    check_inputs(S, a, b, X0, "stiefel_optimize");
    if (feasibility_error(X0) > 1e-8) {
        throw std::invalid_argument("stiefel_optimize: X0 is not orthonormal");
    }
    if (!(settings.backtrack > 0.0 && settings.backtrack < 1.0) ||
        !(settings.tau_min < settings.tau0)) {
        throw std::invalid_argument("stiefel_optimize: invalid settings");
    }

    StiefelResult result;
    Matrix X = X0;
    double f = stiefel_objective(S, a, b, X);
    result.max_feasibility_error = feasibility_error(X);

    for (int it = 0; it < settings.max_iter; ++it) {
        const Matrix G = stiefel_gradient(S, a, b, X);
        const Matrix P = G - X * (G.transpose() * X); // projected gradient
        const double p_sq = P.squaredNorm();
        result.grad_norm = std::sqrt(p_sq);
        if (result.grad_norm <= settings.grad_tol) {
            const auto escape = probe_escape(S, a, b, X, f, settings);
            if (!escape) {
                result.status = StiefelStatus::Converged;
                result.basis = X;
                result.iterations = it;
                return result;
            }
            X = escape->first;
            f = escape->second;
            result.max_feasibility_error =
                std::max(result.max_feasibility_error, feasibility_error(X));
            continue;
        }

        double tau = settings.tau0;
        bool accepted = false;
        while (tau >= settings.tau_min) {
            const auto y = cayley_retract(X, G, tau);
            if (y) {
                const double f_trial = stiefel_objective(S, a, b, *y);
                if (f_trial <= f - settings.armijo_c1 * tau * p_sq) {
                    X = *y;
                    f = f_trial;
                    accepted = true;
                    result.max_feasibility_error =
                        std::max(result.max_feasibility_error, feasibility_error(X));
                    break;
                }
            }
            tau *= settings.backtrack;
        }
        if (!accepted) {
            result.status = StiefelStatus::Stalled;
            result.basis = X;
            result.iterations = it;
            return result;
        }
    }

    const Matrix G = stiefel_gradient(S, a, b, X);
    result.grad_norm = (G - X * (G.transpose() * X)).norm();
    result.status = result.grad_norm <= settings.grad_tol ? StiefelStatus::Converged
                                                          : StiefelStatus::MaxIter;
    result.basis = X;
    result.iterations = settings.max_iter;
    return result;
}

Vector principal_angles(const Matrix& X, const Matrix& Y) {
    if (X.rows() != Y.rows() || X.cols() != Y.cols()) {
        throw std::invalid_argument("principal_angles: frames must have equal shape");
    }
    if (feasibility_error(X) > 1e-8 || feasibility_error(Y) > 1e-8) {
        throw std::invalid_argument("principal_angles: inputs must be orthonormal");
    }
    Eigen::JacobiSVD<Matrix> svd(X.transpose() * Y);
    Vector sv = svd.singularValues(); // descending
    Vector angles(sv.size());
    for (Index j = 0; j < sv.size(); ++j) {
        angles[j] = std::acos(std::min(1.0, std::max(0.0, sv[j])));
    }
    return angles; // ascending since singular values are descending
}

} // namespace hdgmm
