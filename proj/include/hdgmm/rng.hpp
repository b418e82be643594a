#ifndef HDGMM_RNG_HPP
#define HDGMM_RNG_HPP

#include <cstdint>
#include <random>

namespace hdgmm {

// Seeded generator with fixed output sequences. All variate transforms are
// implemented here rather than via <random> distributions, whose output is
// implementation-defined; files produced from the same seed must be
// byte-identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller, one spare cached.
    double normal();

    // Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n);

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace hdgmm

#endif
