#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace cellspan {

// Seeded generator producing identical streams on every platform.
// std::uniform_real_distribution / std::normal_distribution are
// implementation-defined, so doubles are constructed directly from
// mt19937_64 output instead.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Box-Muller without spare caching, so the stream depends only on the
    // call sequence. Consumes exactly two engine draws.
    double normal() {
        const double u1 = 1.0 - uniform(); // (0, 1], keeps log finite
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double sd) {
        return mean + sd * normal();
    }

    std::uint64_t raw() { return eng_(); }

private:
    std::mt19937_64 eng_;
};

} // namespace cellspan
