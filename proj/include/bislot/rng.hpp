#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace bislot {

namespace detail {

// splitmix64 finalizer; full-avalanche mix of a 64-bit word.
inline uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace detail

// Combine ids into a stream identifier (used to derive independent substreams).
inline uint64_t stream_of(uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    return detail::mix64(detail::mix64(detail::mix64(a) ^ b) ^ c);
}

// Counter-based generator: output i is a pure function of (seed, stream_id, i),
// so identical (seed, stream, draw sequence) is bit-reproducible and distinct
// streams are decorrelated by the mixer.
class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t stream_id = 0)
        : key_(detail::mix64(seed ^ detail::mix64(stream_id * 0xda942042e4dd58b5ULL))),
          stream_id_(stream_id) {}

    uint64_t stream_id() const { return stream_id_; }

    uint64_t next_u64() { return detail::mix64(key_ ^ (++counter_ * 0x9e3779b97f4a7c15ULL)); }

    // Uniform on [0,1) with 53 random bits.
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on (0,1]; safe for log().
    double uniform_pos() { return double((next_u64() >> 11) + 1) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased-enough integer draw via 128-bit multiply; n > 0.
    uint64_t uniform_int(uint64_t n) {
        return uint64_t((__uint128_t(next_u64()) * n) >> 64);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal, Box-Muller with one cached value.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform_pos();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    std::vector<double> normal_vec(size_t n) {
        std::vector<double> out(n);
        for (auto& v : out) v = normal();
        return out;
    }

    // Deterministic Fisher-Yates (std::shuffle is implementation-defined).
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = size_t(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t key_;
    uint64_t stream_id_;
    uint64_t counter_ = 0;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace bislot
