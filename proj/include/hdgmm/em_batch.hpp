#ifndef HDGMM_EM_BATCH_HPP
#define HDGMM_EM_BATCH_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hdgmm/model.hpp"

namespace hdgmm {

// Responsibility-weighted sums per component: n_k, sum r_ik y_i and
// sum r_ik y_i y_i^T. Everything the M-step needs.
struct WeightedMoments {
    std::vector<double> mass;
    std::vector<Vector> first_moment;
    std::vector<Matrix> scatter;

    Index component_count() const { return static_cast<Index>(mass.size()); }
};

struct FitTrace {
    std::vector<double> log_likelihood;
    int iterations = 0;
    bool converged = false;
};

struct BatchConfig {
    int max_iter = 200;
    double rel_tol = 1e-7;
    std::uint64_t seed = 0;
    int threads = 1;
    double floor_b = 1e-12;
    Index subsample_cap = 50000; // initialization subsample size
};

// Raised when a component's responsibility mass collapses.
class DegenerateComponentError : public std::runtime_error {
public:
    DegenerateComponentError(Index component, int iteration, const std::string& what)
        : std::runtime_error(what), component(component), iteration(iteration) {}
    Index component;
    int iteration; // -1 when outside an EM loop
};

// Responsibility matrix (row i = r(y_i)) and the data log-likelihood.
std::pair<Matrix, double> e_step(const HdGmmModel& model, const Matrix& data,
                                 int threads = 1);

WeightedMoments accumulate_moments(const Matrix& data, const Matrix& responsibilities,
                                   int threads = 1);

// Spectral parameter extraction shared by the batch and online M-steps:
// top-d eigenpairs of a covariance matrix (descending, columns
// sign-normalized so the largest-magnitude entry is positive) and the tail
// variance b = (trace - sum_j a_j)/(M - d) clamped into
// [floor_b, a_d - floor_b].
struct SpikedSpectrum {
    Matrix basis;
    Vector signal_variances;
    double noise_variance = 0.0;
};
SpikedSpectrum spectral_from_scatter(const Matrix& covariance, Index d, double floor_b);

// Closed-form M-step from weighted moments. Throws DegenerateComponentError
// when a component's mass falls below 1e-8 * N.
HdGmmModel m_step(const WeightedMoments& moments, double n_total, Index d,
                  double floor_b = 1e-12);

// Seeded k-means++ with a fixed number of Lloyd iterations on a capped
// subsample, followed by one hard-assignment M-step. Deterministic per seed.
HdGmmModel init_model(const Matrix& data, Index K, Index d, std::uint64_t seed,
                      Index subsample_cap = 50000, double floor_b = 1e-12);

std::pair<HdGmmModel, FitTrace> fit_batch(const Matrix& data, Index K, Index d,
                                          const BatchConfig& config = {});

// Free parameter count: (K-1) weights, K*M means, K*d*(M-(d+1)/2) basis
// orientation parameters and K*(d+1) spectrum values.
std::uint64_t param_count(Index K, Index M, Index d);

double bic(const HdGmmModel& model, const Matrix& data, int threads = 1);

struct BicCell {
    Index K = 0;
    Index d = 0;
    double log_likelihood = 0.0;
    std::uint64_t params = 0;
    double bic = 0.0;
    bool ok = false;
    std::string error;
};

struct BicScanResult {
    std::vector<BicCell> cells;
    Index best_K = 0;
    Index best_d = 0;
    bool has_best = false;
};

// Fits every (K, d) pair with a shared seed; failed cells are recorded and
// excluded from the argmin.
BicScanResult bic_scan(const Matrix& data, const std::vector<Index>& k_grid,
                       const std::vector<Index>& d_grid, const BatchConfig& config = {});

} // namespace hdgmm

#endif
