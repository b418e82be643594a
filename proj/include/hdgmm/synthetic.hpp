#ifndef HDGMM_SYNTHETIC_HPP
#define HDGMM_SYNTHETIC_HPP

#include <cstdint>
#include <vector>

#include "hdgmm/dictionary.hpp"
#include "hdgmm/model.hpp"
#include "hdgmm/rng.hpp"

namespace hdgmm {

// Inclusive linear grid axis with `count` points from lo to hi.
struct GridAxis {
    double lo = 0.0;
    double hi = 0.0;
    Index count = 0;
};

// Parameter grid for the toy signal family, labelled (T1, T2, df).
struct GridSpec {
    GridAxis t1{0.2, 3.0, 25};
    GridAxis t2{0.02, 0.3, 20};
    GridAxis df{-50.0, 50.0, 40};

    Index count() const { return t1.count * t2.count * df.count; }
};

// 25 x 20 x 40 = 20,000 records.
GridSpec default_grid();

std::vector<double> grid_points(const GridAxis& axis);

// Toy relaxation-style signal family:
//   s_i(t_j) = (1 - exp(-TR/T1_i)) * exp(-t_j/T2_i) * cos(2 pi df_i t_j)
// with t_j = j*dt, j = 1..M. Rows iterate T1 (outer), T2, df (inner).
// Labels are the grid tuples. Note the T1 factor is a per-signal constant,
// so it scales amplitude only and cancels under normalization.
Dictionary gen_synthetic_dictionary(const GridSpec& grid, Index time_points = 64,
                                    double dt = 0.004, double tr = 4.0);

struct SampleResult {
    Matrix data;                  // N x M
    std::vector<Index> component; // true generating component per row
};

// Resumable mixture sampler: pick k ~ Categorical(pi) by CDF inversion,
// then y = mu_k + W_k diag(sqrt(a_k - b_k)) e_d + sqrt(b_k) e_M with
// standard normal e; this realizes Sigma_k exactly. One generator state
// persists across draw() calls, so the concatenated output depends only on
// the seed, not on how draws are blocked. Holds a reference to the model.
class HdgmmSampler {
public:
    HdgmmSampler(const HdGmmModel& model, std::uint64_t seed);

    SampleResult draw(Index n);

private:
    const HdGmmModel& model_;
    std::vector<double> cdf_;
    Rng rng_;
};

// One-shot draw of N records; deterministic per seed.
SampleResult sample_hdgmm(const HdGmmModel& model, Index n, std::uint64_t seed);

struct RandomModelConfig {
    double separation = 8.0;    // distance of each mean from the origin
    double top_variance = 4.0;  // a_1
    double decay = 0.6;         // a_j = a_1 * decay^(j-1)
    double noise_variance = 0.1; // b
};

// Well-separated random mixture for simulation studies: random unit
// directions scaled to `separation` as means, random orthonormal bases,
// a shared geometric spectrum, near-uniform weights. Deterministic per seed.
HdGmmModel random_model(Index K, Index M, Index d, std::uint64_t seed,
                        const RandomModelConfig& config = {});

} // namespace hdgmm

#endif
