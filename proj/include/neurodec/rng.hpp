#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace neurodec {

/// Deterministic random source. mt19937_64 output is fixed by the standard and
/// all distribution transforms are implemented here, so identical seeds produce
/// identical streams on every toolchain.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    /// Uniform double in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    /// Exponential with the given rate (events per unit time).
    double exponential(double rate) {
        double u = uniform();
        while (u <= 0.0) u = uniform();
        return -std::log(u) / rate;
    }

    /// Poisson count, Knuth's product method (adequate for the small means used here).
    int poisson(double mean) {
        if (mean <= 0.0) return 0;
        int count = 0;
        double limit = std::exp(-mean);
        // Split large means to keep the product above double underflow.
        while (mean > 500.0) {
            count += poisson(500.0);
            mean -= 500.0;
        }
        limit = std::exp(-mean);
        double product = uniform();
        while (product > limit) {
            ++count;
            product *= uniform();
        }
        return count;
    }

    /// Uniform integer in [0, bound).
    std::uint64_t integer(std::uint64_t bound) {
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(bound)) % bound;
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace neurodec
