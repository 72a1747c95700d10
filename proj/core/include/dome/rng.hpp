#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace dome {

/// Deterministic random source.  All stochastic pieces of the library
/// (initialization, dropout, shuffling) draw from an Rng so two runs with the
/// same seed produce bit-identical results on any platform.  std::mt19937_64
/// has a portable, standard-mandated output sequence; the distributions are
/// hand-rolled because the standard library's are not.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1).  Uses the top 53 bits so every value is an
    /// exactly representable multiple of 2^-53.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller.  One cached value per pair.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) {
        return mean + stddev * normal();
    }

    /// Uniform integer in [0, n).  Rejection sampling keeps it unbiased.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return x % n;
    }

    /// Fisher-Yates shuffle (std::shuffle's draws are not portable).
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j =
                static_cast<std::size_t>(uniform_int(static_cast<std::uint64_t>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Child stream for a named purpose.  Mixes the tag into the parent seed
    /// with FNV-1a so distinct tags give independent streams and drawing from
    /// a child does not perturb the parent's sequence.
    Rng child(const std::string& tag) const {
        std::uint64_t h = 14695981039346656037ull;
        auto mix = [&h](std::uint64_t byte) {
            h ^= byte;
            h *= 1099511628211ull;
        };
        for (int i = 0; i < 8; ++i) mix((seed_ >> (8 * i)) & 0xff);
        for (unsigned char c : tag) mix(c);
        return Rng(h);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace dome
