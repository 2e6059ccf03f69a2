#pragma once

#include <cstdint>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

namespace ltgnn {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Independent stream keyed by (seed, a, b, c). Parallel and serial runs of
/// the same configuration draw from identical streams.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t a = 0,
                                   std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t s = seed;
    std::uint64_t k = splitmix64(s);
    s ^= a * 0xd1342543de82ef95ULL;
    k ^= splitmix64(s);
    s ^= b * 0xaf251af3b0f025b5ULL;
    k ^= splitmix64(s);
    s ^= c * 0x9e6c63d0676a9a99ULL;
    k ^= splitmix64(s);
    return std::mt19937_64(k);
}

/// Unbiased draw from [0, n). Hand-rolled so sequences do not depend on the
/// standard library's uniform_int_distribution.
inline std::uint64_t uniform_below(std::mt19937_64& g, std::uint64_t n) {
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() -
        std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = g();
    } while (x >= limit);
    return x % n;
}

inline double uniform_unit(std::mt19937_64& g) {
    return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller; one value per call, deterministic.
class NormalSampler {
public:
    explicit NormalSampler(std::mt19937_64& g) : g_(g) {}

    double operator()() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform_unit(g_);
        } while (u1 <= 0.0);
        const double u2 = uniform_unit(g_);
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

private:
    std::mt19937_64& g_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

template <class T>
void fisher_yates_shuffle(std::vector<T>& v, std::mt19937_64& g) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(uniform_below(g, i));
        std::swap(v[i - 1], v[j]);
    }
}

/// Floyd's algorithm: k distinct values from [0, n) in O(k) draws,
/// independent of n. Output is sorted ascending.
inline void sample_distinct(std::mt19937_64& g, std::uint64_t n, std::uint64_t k,
                            std::vector<std::uint32_t>& out) {
    out.clear();
    for (std::uint64_t j = n - k; j < n; ++j) {
        std::uint32_t t = static_cast<std::uint32_t>(uniform_below(g, j + 1));
        bool present = false;
        for (std::uint32_t s : out) {
            if (s == t) {
                present = true;
                break;
            }
        }
        out.push_back(present ? static_cast<std::uint32_t>(j) : t);
    }
    std::sort(out.begin(), out.end());
}

} // namespace ltgnn
