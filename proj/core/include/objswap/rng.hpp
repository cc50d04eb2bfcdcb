#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace objswap {

// xoshiro256++ with splitmix64 seeding. Self-contained so that seeded runs
// are bit-reproducible across platforms and standard-library versions.
class Rng {
public:
    explicit Rng(uint64_t seed) { reseed(seed); }
    Rng(uint64_t seed, const std::string& stream_name) { reseed(seed ^ fnv1a(stream_name)); }
    Rng(uint64_t seed, uint64_t stream_index) { reseed(seed ^ (0x9e3779b97f4a7c15ULL * (stream_index + 1))); }

    void reseed(uint64_t seed) {
        uint64_t x = seed;
        for (auto& s : s_)
            s = splitmix64(x);
        has_gauss_ = false;
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const uint64_t t      = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0,1).
    double uniform() { return (double)(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), n > 0. Unbiased (rejection).
    uint64_t uniform_index(uint64_t n) {
        uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold)
                return r % n;
        }
    }

    int uniform_int(int lo, int hi) {  // inclusive range [lo, hi]
        return lo + (int)uniform_index((uint64_t)(hi - lo + 1));
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller (cached pair).
    double normal() {
        if (has_gauss_) {
            has_gauss_ = false;
            return gauss_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r  = std::sqrt(-2.0 * std::log(u1));
        double a  = 6.283185307179586476925286766559 * u2;
        gauss_     = r * std::sin(a);
        has_gauss_ = true;
        return r * std::cos(a);
    }

    void fill_normal(std::vector<double>& out) {
        for (auto& v : out)
            v = normal();
    }

    // Derive an independent child stream; deterministic in (this stream state excluded): based
    // only on the parent's seed material consumed at call time.
    Rng fork(const std::string& name) { return Rng(next_u64() ^ fnv1a(name)); }

    static uint64_t fnv1a(const std::string& s) {
        uint64_t h = 1469598103934665603ULL;
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        return h;
    }

private:
    static uint64_t splitmix64(uint64_t& x) {
        uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
        z          = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z          = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    uint64_t s_[4] = {};
    bool has_gauss_ = false;
    double gauss_   = 0.0;
};

}  // namespace objswap
