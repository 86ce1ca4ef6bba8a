#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>

namespace grove {

/// One step of the splitmix64 sequence. Used for seed expansion and for
/// deriving independent substream seeds from (master seed, stream tag, index).
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Derive a seed for an independent substream. The constants are stream tags;
/// identical (base, tag, index) always yields the same seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag, std::uint64_t index = 0) {
    std::uint64_t s = base;
    std::uint64_t a = splitmix64(s);
    s ^= tag * 0x9e3779b97f4a7c15ull;
    std::uint64_t b = splitmix64(s);
    s ^= index + 0x632be59bd9b4e019ull;
    std::uint64_t c = splitmix64(s);
    return a ^ (b + (c << 1));
}

// Stream tags for the seed derivation scheme. Keeping them in one place makes
// the derived streams documented and testable.
inline constexpr std::uint64_t kStreamWestonRow = 0x01;
inline constexpr std::uint64_t kStreamBootstrap = 0x02;
inline constexpr std::uint64_t kStreamSubsample = 0x03;
inline constexpr std::uint64_t kStreamBlbWeights = 0x04;
inline constexpr std::uint64_t kStreamTreeGrow = 0x05;
inline constexpr std::uint64_t kStreamImportance = 0x06;
inline constexpr std::uint64_t kStreamOnlineTree = 0x07;
inline constexpr std::uint64_t kStreamPermute = 0x08;

/// xoshiro256** with splitmix64 seeding. One documented generator for the whole
/// library; the state is four words plus the Box-Muller cache, so online
/// checkpoints can serialize and resume it exactly.
class Rng {
public:
    using result_type = std::uint64_t;

    Rng() : Rng(0) {}

    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
        if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<std::uint64_t>::max(); }

    std::uint64_t operator()() { return next_u64(); }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Unbiased uniform integer in [0, bound). Lemire's multiply-shift with a
    /// rejection step, so the result does not depend on platform division quirks.
    std::uint64_t next_below(std::uint64_t bound) {
        if (bound == 0) throw std::invalid_argument("Rng::next_below: bound must be positive");
        unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * bound;
        auto low = static_cast<std::uint64_t>(m);
        if (low < bound) {
            const std::uint64_t threshold = (0 - bound) % bound;
            while (low < threshold) {
                m = static_cast<unsigned __int128>(next_u64()) * bound;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Standard normal via Box-Muller. The second variate of each pair is
    /// cached; the cache is part of the serializable state.
    double normal() {
        if (have_gauss_) {
            have_gauss_ = false;
            return gauss_;
        }
        double u1 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        gauss_ = r * std::sin(theta);
        have_gauss_ = true;
        return r * std::cos(theta);
    }

    /// Poisson count by Knuth's product method, O(lambda) per draw. Additivity
    /// splits large means into chunks so the product never underflows.
    std::uint64_t poisson(double lambda) {
        if (!(lambda >= 0.0)) throw std::invalid_argument("Rng::poisson: lambda must be >= 0");
        std::uint64_t total = 0;
        while (lambda > 30.0) {
            total += poisson_small(30.0);
            lambda -= 30.0;
        }
        return total + poisson_small(lambda);
    }

    /// Binomial(n, p). Small means use inversion by repeated Bernoulli counting;
    /// large means delegate to the standard library's exact rejection sampler,
    /// driven by this generator so the draw stays seed-reproducible.
    std::uint64_t binomial(std::uint64_t n, double p) {
        if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("Rng::binomial: p out of [0,1]");
        if (n == 0 || p == 0.0) return 0;
        if (p == 1.0) return n;
        const double mean = static_cast<double>(n) * p;
        if (mean <= 32.0 && n <= (1ull << 40)) {
            // Count of uniforms below p, done as a geometric-jump scan so the
            // expected cost is O(n*p) instead of O(n).
            const double log_q = std::log1p(-p);
            std::uint64_t hits = 0;
            double scanned = 0.0;
            for (;;) {
                double u = next_double();
                while (u <= 0.0) u = next_double();
                scanned += std::floor(std::log(u) / log_q) + 1.0;
                if (scanned > static_cast<double>(n)) return hits;
                ++hits;
            }
        }
        std::binomial_distribution<std::uint64_t> dist(n, p);
        return dist(*this);
    }

    std::array<std::uint64_t, 4> state() const { return state_; }
    bool has_cached_gauss() const { return have_gauss_; }
    double cached_gauss() const { return gauss_; }

    void restore(const std::array<std::uint64_t, 4>& s, bool have_gauss, double gauss) {
        state_ = s;
        have_gauss_ = have_gauss;
        gauss_ = gauss;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t poisson_small(double lambda) {
        const double limit = std::exp(-lambda);
        std::uint64_t k = 0;
        double prod = next_double();
        while (prod > limit) {
            ++k;
            prod *= next_double();
        }
        return k;
    }

    std::array<std::uint64_t, 4> state_{};
    bool have_gauss_ = false;
    double gauss_ = 0.0;
};

}  // namespace grove
