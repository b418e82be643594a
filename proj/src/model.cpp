#include "hdgmm/model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "hdgmm/parallel.hpp"

namespace hdgmm {

namespace {

constexpr double kLog2Pi = 1.8378770664093453; // log(2*pi)

void check_dim(const Component& comp, const Vector& y, const char* where) {
    if (y.size() != comp.ambient_dim()) {
        throw std::invalid_argument(std::string(where) + ": observation has dimension " +
                                    std::to_string(y.size()) + ", expected " +
                                    std::to_string(comp.ambient_dim()));
    }
}

} // namespace

Component::Component(double weight, Vector mean, Vector signal_variances,
                     double noise_variance, Matrix basis)
    : weight_(weight),
      mean_(std::move(mean)),
      signal_variances_(std::move(signal_variances)),
      noise_variance_(noise_variance),
      basis_(std::move(basis)) {
    const Index m = mean_.size();
    const Index d = signal_variances_.size();
    if (d < 1 || d > m - 1) {
        throw std::invalid_argument("Component: need 1 <= d <= M-1, got d=" +
                                    std::to_string(d) + ", M=" + std::to_string(m));
    }
    if (basis_.rows() != m || basis_.cols() != d) {
        throw std::invalid_argument("Component: basis must be M x d");
    }
    if (!(weight_ > 0.0) || weight_ > 1.0) {
        throw std::invalid_argument("Component: weight must lie in (0, 1]");
    }
    for (Index j = 0; j + 1 < d; ++j) {
        if (signal_variances_[j] < signal_variances_[j + 1]) {
            throw std::invalid_argument("Component: signal variances must be descending");
        }
    }
    // Floor on the tail eigenvalue; the quadratic form divides by it.
    const double floor = 1e-12 * std::max(signal_variances_[0], 1.0);
    if (noise_variance_ < floor) noise_variance_ = floor;
    if (!(signal_variances_[d - 1] > noise_variance_)) {
        throw std::invalid_argument("Component: requires a_d > b > 0 (got a_d=" +
                                    std::to_string(signal_variances_[d - 1]) +
                                    ", b=" + std::to_string(noise_variance_) + ")");
    }
    const double ortho_err = (basis_.transpose() * basis_ -
                              Matrix::Identity(d, d)).norm();
    if (ortho_err > kOrthoTol) {
        throw std::invalid_argument("Component: basis columns not orthonormal (|W^T W - I| = " +
                                    std::to_string(ortho_err) + ")");
    }
}

HdGmmModel::HdGmmModel(std::vector<Component> components)
    : components_(std::move(components)) {
    if (components_.empty()) {
        throw std::invalid_argument("HdGmmModel: needs at least one component");
    }
    const Index m = components_.front().ambient_dim();
    const Index d = components_.front().reduced_dim();
    double total = 0.0;
    for (const auto& c : components_) {
        if (c.ambient_dim() != m || c.reduced_dim() != d) {
            throw std::invalid_argument("HdGmmModel: components disagree on (M, d)");
        }
        total += c.weight();
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw std::invalid_argument("HdGmmModel: weights sum to " + std::to_string(total));
    }
}

Matrix covariance_dense(const Component& comp) {
    const Vector spike = comp.signal_variances().array() - comp.noise_variance();
    Matrix sigma = comp.basis() * spike.asDiagonal() * comp.basis().transpose();
    sigma.diagonal().array() += comp.noise_variance();
    return sigma;
}

double mahalanobis_sq(const Component& comp, const Vector& y) {
    check_dim(comp, y, "mahalanobis_sq");
    const Vector diff = y - comp.mean();
    const Vector z = comp.basis().transpose() * diff;
    double quad = 0.0;
    for (Index j = 0; j < z.size(); ++j) {
        quad += z[j] * z[j] / comp.signal_variances()[j];
    }
    const double residual = diff.squaredNorm() - z.squaredNorm();
    return quad + std::max(residual, 0.0) / comp.noise_variance();
}

double log_det_cov(const Component& comp) {
    const Index m = comp.ambient_dim();
    const Index d = comp.reduced_dim();
    double acc = 0.0;
    for (Index j = 0; j < d; ++j) acc += std::log(comp.signal_variances()[j]);
    return acc + static_cast<double>(m - d) * std::log(comp.noise_variance());
}

double log_component_density(const Component& comp, const Vector& y) {
    const double m = static_cast<double>(comp.ambient_dim());
    return -0.5 * (m * kLog2Pi + log_det_cov(comp) + mahalanobis_sq(comp, y));
}

void log_weighted_densities(const HdGmmModel& model, const Vector& y, Vector& out) {
    const Index k_count = model.component_count();
    out.resize(k_count);
    for (Index k = 0; k < k_count; ++k) {
        const Component& c = model.component(k);
        out[k] = std::log(c.weight()) + log_component_density(c, y);
    }
}

double log_sum_exp(const Vector& v) {
    const double shift = v.maxCoeff();
    if (!std::isfinite(shift)) return shift;
    double acc = 0.0;
    for (Index i = 0; i < v.size(); ++i) acc += std::exp(v[i] - shift);
    return shift + std::log(acc);
}

Vector responsibilities(const HdGmmModel& model, const Vector& y) {
    Vector logs;
    log_weighted_densities(model, y, logs);
    const double lse = log_sum_exp(logs);
    Vector r(logs.size());
    for (Index k = 0; k < logs.size(); ++k) r[k] = std::exp(logs[k] - lse);
    return r;
}

double log_likelihood(const HdGmmModel& model, const Matrix& data, int threads) {
    if (data.cols() != model.ambient_dim()) {
        throw std::invalid_argument("log_likelihood: data has " + std::to_string(data.cols()) +
                                    " columns, expected " + std::to_string(model.ambient_dim()));
    }
    const Index n = data.rows();
    Vector per_row(n);
    parallel_chunks(n, threads, [&](Index begin, Index end) {
        Vector logs;
        for (Index i = begin; i < end; ++i) {
            log_weighted_densities(model, data.row(i).transpose(), logs);
            per_row[i] = log_sum_exp(logs);
        }
    });
    double total = 0.0;
    for (Index i = 0; i < n; ++i) total += per_row[i];
    return total;
}

} // namespace hdgmm
