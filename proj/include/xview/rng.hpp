#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "xview/matrix.hpp"

namespace xview {

// PCG32 (O'Neill's pcg32, XSH-RR variant): 64-bit LCG state with an
// output permutation, plus a per-instance stream selector. Integer and
// uniform draws are bit-exact across platforms; we do not rely on any
// implementation-defined std:: distribution.
class Rng {
  public:
    explicit Rng(uint64_t seed, uint64_t stream = 0) { reseed(seed, stream); }

    void reseed(uint64_t seed, uint64_t stream = 0) {
        state_ = 0u;
        inc_ = (stream << 1u) | 1u;
        next_u32();
        state_ += seed;
        next_u32();
        have_cached_normal_ = false;
    }

    uint32_t next_u32() {
        uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
        uint32_t rot = static_cast<uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
    }

    uint64_t next_u64() {
        uint64_t hi = next_u32();
        uint64_t lo = next_u32();
        return (hi << 32) | lo;
    }

    // Uniform double in [0, 1), 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform double in (0, 1] (safe as a log argument).
    double uniform_pos() { return 1.0 - uniform(); }

    // Unbiased integer in [0, n) by rejection sampling.
    uint64_t below(uint64_t n) {
        if (n == 0) throw contract_error("Rng::below(0)");
        uint64_t threshold = (0 - n) % n;  // 2^64 mod n
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller; the second value of each pair is cached.
    double normal() {
        if (have_cached_normal_) {
            have_cached_normal_ = false;
            return cached_normal_;
        }
        double u1 = uniform_pos();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        cached_normal_ = r * std::sin(theta);
        have_cached_normal_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Fisher-Yates with our own bounded draws (std::shuffle's algorithm is
    // unspecified by the standard).
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    uint64_t state_ = 0;
    uint64_t inc_ = 1;
    bool have_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

inline Matrix random_normal_matrix(int rows, int cols, Rng& rng, double stddev = 1.0, double mean = 0.0) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = rng.normal(mean, stddev);
    return m;
}

inline Matrix random_uniform_matrix(int rows, int cols, Rng& rng, double lo = 0.0, double hi = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = lo + (hi - lo) * rng.uniform();
    return m;
}

}  // namespace xview
