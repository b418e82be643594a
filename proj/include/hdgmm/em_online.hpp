#ifndef HDGMM_EM_ONLINE_HPP
#define HDGMM_EM_ONLINE_HPP

#include <cstdint>
#include <functional>
#include <optional>

#include "hdgmm/em_batch.hpp"
#include "hdgmm/model.hpp"
#include "hdgmm/stiefel.hpp"

namespace hdgmm {

// Running expected sufficient statistics, one triple per component:
// s0 (mass), s1 (first moment) and S2 (second-moment matrix). Updated as a
// convex combination with per-batch increments, so after any number of
// updates starting from normalized statistics sum_k s0_k stays 1.
struct SuffStats {
    std::vector<double> s0;
    std::vector<Vector> s1;
    std::vector<Matrix> S2;
    std::uint64_t step = 0;

    SuffStats() = default;
    SuffStats(Index K, Index M);

    Index component_count() const { return static_cast<Index>(s0.size()); }
};

enum class BasisUpdate { Eigen, Stiefel };

struct OnlineConfig {
    double alpha = 0.6;          // step exponent, must lie in (0.5, 1]
    double t0 = 0.0;             // step offset
    Index batch_size = 256;
    Index n_burn = -1;           // records before the first M-step; -1 -> 10*K*d
    BasisUpdate mode = BasisUpdate::Eigen;
    StiefelSettings stiefel;
    double s0_floor = 1e-6;      // below this a component keeps its parameters
    double floor_b = 1e-12;
    int threads = 1;
    Index eval_every = 0;        // batches between held-out evaluations (0 = off)
    const Matrix* holdout = nullptr;
    Index checkpoint_every = 0;  // batches between checkpoint emissions (0 = off)
    std::function<void(std::uint64_t batch, const HdGmmModel&, const SuffStats&)>
        checkpoint_sink;
};

// Abstract chunked record source. next() returns up to max_records rows or
// nullopt at end of stream.
class ChunkSource {
public:
    virtual ~ChunkSource() = default;
    virtual std::optional<Matrix> next(Index max_records) = 0;
};

// In-memory source over a row-major data matrix.
class MatrixSource : public ChunkSource {
public:
    explicit MatrixSource(const Matrix& data) : data_(data) {}
    std::optional<Matrix> next(Index max_records) override;
    void reset() { cursor_ = 0; }

private:
    const Matrix& data_;
    Index cursor_ = 0;
};

// Batch-averaged expected statistics (1/B) sum_i r_ik (1, y_i, y_i y_i^T)
// under the given model.
SuffStats expected_stats(const HdGmmModel& model, const Matrix& batch, int threads = 1);

// gamma_t = (t + t0)^(-alpha).
double step_size(std::uint64_t t, const OnlineConfig& config);

// stats <- stats + gamma (increment - stats), fieldwise; advances the step
// counter.
void sa_update(SuffStats& stats, const SuffStats& increment, double gamma);

struct OnlineDiagnostics {
    std::uint64_t starvation_events = 0;
};

// M-step from running statistics. Components whose mass sits below
// s0_floor keep their previous parameters (counted in diagnostics). The
// basis is refreshed either by the spectral rule or by a warm-started
// curvilinear solve with one repeat of the (basis, spectrum) alternation.
HdGmmModel m_step_online(const SuffStats& stats, const HdGmmModel& previous,
                         const OnlineConfig& config,
                         OnlineDiagnostics* diagnostics = nullptr);

// Natural parameters of one component in factored form. The quadratic block
// 1/2 sum_j (1/b - 1/a_j) w_j w_j^T is kept as (coefficients, basis) and
// never materialized densely.
struct NaturalParams {
    Vector linear;        // sum_j (1/a_j - 1/b) w_j (w_j^T mu) + mu / b
    Vector quad_coeffs;   // 1/2 (1/b - 1/a_j)
    Matrix quad_basis;    // W
    double quad_scalar;   // -1/(2b), paired with y^T y
};

NaturalParams phi(const Component& comp);

// Log partition: 1/2 sum_j [(1/a_j - 1/b)(w_j^T mu)^2 + log a_j]
//                + mu^T mu/(2b) + (M-d)/2 log b.
double psi(const Component& comp);

// <s(y), phi> with s(y) = [y, vec(y y^T), y^T y].
double suffstat_dot(const NaturalParams& params, const Vector& y);

struct OnlineFitResult {
    HdGmmModel model;
    FitTrace trace; // held-out log-likelihood per evaluation when enabled
    std::uint64_t batches = 0;
    std::uint64_t records = 0;
    std::uint64_t starvation_events = 0;
    SuffStats stats; // final running statistics, for checkpointing
};

// Streaming fit: per mini-batch expected statistics, stochastic
// approximation update, then (after burn-in) an online M-step. Working
// memory is O(K M^2 + B M) regardless of stream length. Throws if the
// stream ends before n_burn records.
OnlineFitResult fit_online(ChunkSource& source, const OnlineConfig& config,
                           const HdGmmModel& init,
                           const SuffStats* resume = nullptr);

} // namespace hdgmm

#endif
