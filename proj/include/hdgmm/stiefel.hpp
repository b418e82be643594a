#ifndef HDGMM_STIEFEL_HPP
#define HDGMM_STIEFEL_HPP

#include <optional>

#include "hdgmm/model.hpp"

namespace hdgmm {

struct StiefelSettings {
    int max_iter = 50;
    double grad_tol = 1e-7;   // on the projected gradient norm
    double armijo_c1 = 1e-4;
    double backtrack = 0.5;   // step shrink factor
    double tau0 = 1e-2;       // trial step at each iteration
    double tau_min = 1e-14;   // below this the line search is declared stalled
};

// f(X) = sum_j (1/a_j - 1/b) x_j^T S x_j over orthonormal M x d frames.
// The coefficients are negative (a_j > b), so minimizers align the columns
// with the leading eigenvectors of S.
double stiefel_objective(const Matrix& S, const Vector& a, double b, const Matrix& X);

// Euclidean gradient 2 S X diag(1/a_j - 1/b).
Matrix stiefel_gradient(const Matrix& S, const Vector& a, double b, const Matrix& X);

// Curvilinear update Y(tau) = X - tau U (I + (tau/2) V^T U)^{-1} V^T X with
// U = [G | X], V = [X | -G]. Exactly orthogonality-preserving and needs only
// a 2d x 2d solve. Returns nullopt when the inner system is singular; the
// caller should shrink tau.
std::optional<Matrix> cayley_retract(const Matrix& X, const Matrix& G, double tau);

enum class StiefelStatus { Converged, MaxIter, Stalled };

struct StiefelResult {
    Matrix basis;
    int iterations = 0;
    double grad_norm = 0.0;
    StiefelStatus status = StiefelStatus::Converged;
    double max_feasibility_error = 0.0; // max |X^T X - I|_F over all iterates
};

// Monotone curvilinear search: backtracks tau by `backtrack` from tau0 until
// the Armijo decrease f(Y(tau)) <= f(X) - c1 tau |P|^2 holds, where
// P = G - X G^T X is the projected gradient. A vanishing P also occurs on
// stale (non-leading) eigenbases of S, so before declaring convergence the
// solver probes fixed tangent directions for a strictly lower objective and
// restarts from any improving frame; only at a minimum do all probes fail.
// Deterministic for fixed inputs.
StiefelResult stiefel_optimize(const Matrix& S, const Vector& a, double b,
                               const Matrix& X0, const StiefelSettings& settings = {});

// Canonical angles between the spans of two orthonormal frames, ascending.
Vector principal_angles(const Matrix& X, const Matrix& Y);

} // namespace hdgmm

#endif
