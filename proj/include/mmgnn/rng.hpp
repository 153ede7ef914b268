#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace mmgnn {

/// Deterministic splittable random stream. Every source of randomness in the
/// project flows from one root seed; components fork substreams by name so a
/// new call site never perturbs existing streams. Distributions are
/// hand-rolled (not <random> distributions) so sequences are identical across
/// standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : base_(seed), state_(mix(seed ^ 0x9e3779b97f4a7c15ull)) {
        if (state_ == 0) state_ = 0x106689d45497fdb5ull;
    }

    /// Child stream keyed by (this stream's seed, name); independent of how
    /// much the parent has been consumed.
    Rng fork(std::string_view name) const { return Rng(mix(base_ ^ fnv1a(name))); }

    std::uint64_t next_u64() {
        // xorshift64* — tiny, fast, passes the statistical tests this project needs
        std::uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545f4914f6cdd1dull;
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; draws two uniforms per call, no cached
    /// spare (keeps the stream position independent of call parity).
    double normal() {
        double u1 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    /// Uniform integer in [0, n); rejection sampling, no modulo bias.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t bound = n * ((~0ull) / n);
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= bound);
        return x % n;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ull;
        }
        return h;
    }

    static std::uint64_t mix(std::uint64_t x) {
        // splitmix64 finalizer
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    std::uint64_t base_;
    std::uint64_t state_;
};

}  // namespace mmgnn
