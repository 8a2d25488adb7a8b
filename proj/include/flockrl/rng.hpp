#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace flockrl {

// splitmix64, used to derive well-separated seeds from (seed, stream, index)
// tuples so that per-episode randomness is stateless and resumable.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t seed_combine(std::uint64_t seed, std::string_view stream,
                                  std::uint64_t index = 0) {
    std::uint64_t h = splitmix64(seed);
    for (char c : stream) h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
    return splitmix64(h ^ index);
}

// mt19937_64 with hand-rolled distributions. The standard pins down the
// engine but not the distributions, and bitwise reproducibility of training
// runs is a hard requirement, so uniform/normal mappings live here.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1)
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // uniform integer in [0, n), n >= 1 (Lemire's multiply-shift, debiased)
    std::uint64_t uniform_index(std::uint64_t n) {
        std::uint64_t x = engine_();
        __uint128_t m = static_cast<__uint128_t>(x) * static_cast<__uint128_t>(n);
        std::uint64_t l = static_cast<std::uint64_t>(m);
        if (l < n) {
            std::uint64_t t = -n % n;
            while (l < t) {
                x = engine_();
                m = static_cast<__uint128_t>(x) * static_cast<__uint128_t>(n);
                l = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    // Marsaglia polar method; second value cached.
    double normal(double mean = 0.0, double stddev = 1.0) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + stddev * spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform01() - 1.0;
            v = 2.0 * uniform01() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double r = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * r;
        have_spare_ = true;
        return mean + stddev * u * r;
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace flockrl
