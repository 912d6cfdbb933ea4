#pragma once

#include <cstdint>
#include <random>

namespace tigs {

/// Deterministic uniform generator. The 53-bit mapping is fixed here rather
/// than going through std::uniform_real_distribution, whose output is
/// implementation-defined across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Rejection sampling keeps the draw unbiased.
        std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() / n * n;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace tigs
