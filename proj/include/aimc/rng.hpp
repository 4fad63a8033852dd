#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

namespace aimc {

// Deterministic random source. mt19937_64 output is pinned by the standard;
// the normal transform is done here (Box-Muller) instead of
// std::normal_distribution so that streams are bit-identical across
// standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), eng_(seed) {}

    // [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive range
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo + 1);
        return lo + static_cast<std::int64_t>(eng_() % span);
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform(); // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = two_pi * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    // exp(sigma_ln * z) with z optionally truncated at +-truncate sigmas
    double lognormal(double sigma_ln, double truncate = 0.0) {
        double z = normal();
        if (truncate > 0.0) z = std::clamp(z, -truncate, truncate);
        return std::exp(sigma_ln * z);
    }

    std::uint64_t raw() { return eng_(); }

    std::uint64_t seed() const { return seed_; }

    // Independent child stream, e.g. one per image in a batch. Derived from
    // the construction seed only, so forks are order-independent.
    Rng fork(std::uint64_t stream_id) const {
        std::uint64_t s = seed_ + 0x9e3779b97f4a7c15ULL * (stream_id + 1);
        s ^= s >> 30;
        s *= 0xbf58476d1ce4e5b9ULL;
        s ^= s >> 27;
        return Rng(s);
    }

private:
    static constexpr double two_pi = 6.283185307179586476925286766559;

    std::uint64_t seed_;
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace aimc
