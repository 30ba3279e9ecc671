#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace stbln {

/// Seeded generator with distribution code of our own, so the same seed
/// yields the same stream regardless of the standard library in use.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)); }

    double normal(double mean = 0.0, double stddev = 1.0) {
        if (has_spare_) {
            has_spare_ = false;
            return mean + stddev * spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        constexpr double two_pi = 6.283185307179586476925286766559;
        spare_ = r * std::sin(two_pi * u2);
        has_spare_ = true;
        return mean + stddev * r * std::cos(two_pi * u2);
    }

    /// Independent child stream derived from this one.
    Rng split() { return Rng(next_u64() ^ 0x9E3779B97F4A7C15ULL); }

    std::string state() const {
        std::ostringstream os;
        os << engine_ << ' ' << has_spare_ << ' ';
        os.precision(17);
        os << std::hexfloat << spare_;
        return os.str();
    }

    void restore(const std::string& s) {
        std::istringstream is(s);
        is >> engine_ >> has_spare_;
        std::string spare;
        is >> spare;
        spare_ = std::strtod(spare.c_str(), nullptr);
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace stbln
