#ifndef HDGMM_MODEL_HPP
#define HDGMM_MODEL_HPP

#include <Eigen/Core>
#include <vector>

namespace hdgmm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// One mixture component with a spiked covariance spectrum: d leading
// eigenvalues a_1 >= ... >= a_d and one repeated tail eigenvalue b, so that
//   Sigma = W diag(a - b) W^T + b I
// with W the M x d orthonormal basis of the leading eigenspace. Only W is
// stored; the trailing eigenvectors are never needed.
class Component {
public:
    Component(double weight, Vector mean, Vector signal_variances,
              double noise_variance, Matrix basis);

    double weight() const { return weight_; }
    const Vector& mean() const { return mean_; }
    const Vector& signal_variances() const { return signal_variances_; }
    double noise_variance() const { return noise_variance_; }
    const Matrix& basis() const { return basis_; }

    Index ambient_dim() const { return mean_.size(); }
    Index reduced_dim() const { return signal_variances_.size(); }

    static constexpr double kOrthoTol = 1e-10;

private:
    double weight_;
    Vector mean_;
    Vector signal_variances_; // a, descending
    double noise_variance_;   // b, a_d > b > 0 after flooring
    Matrix basis_;            // W, M x d, orthonormal columns
};

class HdGmmModel {
public:
    explicit HdGmmModel(std::vector<Component> components);

    Index component_count() const { return static_cast<Index>(components_.size()); }
    Index ambient_dim() const { return components_.front().ambient_dim(); }
    Index reduced_dim() const { return components_.front().reduced_dim(); }
    const Component& component(Index k) const { return components_[static_cast<std::size_t>(k)]; }
    const std::vector<Component>& components() const { return components_; }

private:
    std::vector<Component> components_;
};

// Dense covariance W diag(a-b) W^T + b I. Materializes an M x M matrix, so
// this is for validation and small problems; the density path below never
// calls it.
Matrix covariance_dense(const Component& comp);

// (y - mu)^T Sigma^{-1} (y - mu) through the factored form, O(Md) time and
// O(M + d) working memory.
double mahalanobis_sq(const Component& comp, const Vector& y);

// log|Sigma| = sum_j log a_j + (M - d) log b.
double log_det_cov(const Component& comp);

// Log Gaussian density at y (weight not included).
double log_component_density(const Component& comp, const Vector& y);

// log(pi_k) + log N(y; mu_k, Sigma_k) for every component, written into out.
void log_weighted_densities(const HdGmmModel& model, const Vector& y, Vector& out);

// max-shifted log(sum(exp(v))).
double log_sum_exp(const Vector& v);

// Posterior assignment probabilities r_k(y), computed in log space.
Vector responsibilities(const HdGmmModel& model, const Vector& y);

// Total data log-likelihood; rows of data are observations. Per-row terms
// are summed in row order regardless of thread count.
double log_likelihood(const HdGmmModel& model, const Matrix& data, int threads = 1);

} // namespace hdgmm

#endif
