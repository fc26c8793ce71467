#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "flowsr/tensor.hpp"

namespace flowsr {

/// Seeded random stream. Normal deviates use an explicit Box-Muller transform
/// (rather than std::normal_distribution) so sequences depend only on the
/// mt19937_64 output, which the standard pins down exactly. Independent
/// streams for parallel work are derived from (seed, index...) via
/// splitmix64 so results do not depend on scheduling.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    static std::uint64_t mix(std::uint64_t x) {
        // splitmix64 finalizer
        x += 0x9E3779B97F4A7C15ull;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
        return x ^ (x >> 31);
    }

    static Rng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
        std::uint64_t s = mix(seed);
        s = mix(s ^ a);
        s = mix(s ^ b);
        s = mix(s ^ c);
        return Rng(s);
    }

    std::uint64_t next_u64() { return eng_(); }

    /// Uniform in [0,1).
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0,n).
    std::int64_t uniform_int(std::int64_t n) {
        // Lemire's multiply-shift; deterministic and unbiased enough for sampling offsets.
        const std::uint64_t x = eng_();
        return static_cast<std::int64_t>((static_cast<unsigned __int128>(x) * static_cast<std::uint64_t>(n)) >> 64);
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    Tensor normal_tensor(const std::vector<int>& shape, double stddev = 1.0) {
        Tensor t(shape);
        for (std::int64_t i = 0; i < t.size(); ++i) t[i] = stddev * normal();
        return t;
    }

    Tensor uniform_tensor(const std::vector<int>& shape, double lo, double hi) {
        Tensor t(shape);
        for (std::int64_t i = 0; i < t.size(); ++i) t[i] = uniform(lo, hi);
        return t;
    }

    /// In-place Fisher-Yates shuffle (stdlib std::shuffle is not pinned across
    /// library implementations).
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_int(static_cast<std::int64_t>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace flowsr
