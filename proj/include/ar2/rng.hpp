#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace ar2 {

// Counter-based deterministic RNG built on splitmix64. Streams are derived by
// hashing (seed, stream id) pairs, so per-image noise is independent of batch
// order and identical across runs and platforms.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(mix(seed ^ 0x9e3779b97f4a7c15ull)) {}

    static uint64_t mix(uint64_t z) {
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Derives an independent stream seed, e.g. derive_seed(seed, image_index).
    static uint64_t derive_seed(uint64_t seed, uint64_t stream) {
        return mix(seed) ^ mix(stream * 0xda942042e4dd58b5ull + 1);
    }
    static uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b) {
        return derive_seed(mix(seed) ^ mix(a + 0x632be59bd9b4e019ull), b);
    }
    static Rng derive(uint64_t seed, uint64_t stream) {
        return Rng(derive_seed(seed, stream));
    }
    static Rng derive(uint64_t seed, uint64_t a, uint64_t b) {
        return Rng(derive_seed(seed, a, b));
    }

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    uint64_t uniform_int(uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller (rejection-free, fixed consumption).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        // Guard against log(0).
        if (u1 < 1e-300) u1 = 1e-300;
        double r = std::sqrt(-2.0 * std::log(u1));
        double t = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(t);
        have_spare_ = true;
        return r * std::cos(t);
    }

    // Poisson sample by Knuth's product method. Large rates are split into
    // chunks of <= 32 so exp(-rate) stays well inside double range.
    uint64_t poisson(double rate) {
        uint64_t total = 0;
        while (rate > 32.0) {
            total += poisson_small(32.0);
            rate -= 32.0;
        }
        return total + poisson_small(rate);
    }

    // In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = size_t(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t poisson_small(double rate) {
        if (rate <= 0.0) return 0;
        const double limit = std::exp(-rate);
        double prod = 1.0;
        uint64_t k = 0;
        do {
            ++k;
            prod *= uniform();
        } while (prod > limit);
        return k - 1;
    }

    uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace ar2
