#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace pgv {

// Deterministic splitmix64-based generator. All randomness in the project flows
// through this class so that runs are bit-reproducible across platforms; the
// standard <random> distributions are implementation-defined and are not used.
//
// Draw order contract: callers document the order in which they consume values;
// fork() derives an independent stream from the construction seed and a label,
// so forked streams do not depend on how much the parent has already drawn.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint32_t next_u32() { return static_cast<std::uint32_t>(next_u64() >> 32); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    float uniform_float(float lo, float hi) {
        return lo + static_cast<float>(uniform()) * (hi - lo);
    }

    // Uniform integer in [0, n), n >= 1. Lemire's multiply-shift (deterministic,
    // no rejection loop for our small n).
    int uniform_int(int n) {
        auto r = static_cast<std::uint64_t>(next_u32());
        return static_cast<int>((r * static_cast<std::uint64_t>(n)) >> 32);
    }

    bool coin() { return uniform() < 0.5; }

    // Standard normal via Box-Muller; the second value of each pair is cached.
    float normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        u1 = u1 < 1e-300 ? 1e-300 : u1;
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        cached_ = static_cast<float>(r * std::sin(a));
        have_cached_ = true;
        return static_cast<float>(r * std::cos(a));
    }

    // Fisher-Yates, descending index order.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            int j = uniform_int(i + 1);
            std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
        }
    }

    // Sample k distinct values from [0, n) in draw order (partial Fisher-Yates).
    std::vector<int> sample_without_replacement(int n, int k) {
        std::vector<int> idx(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
        if (k > n) k = n;
        std::vector<int> out;
        out.reserve(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) {
            int j = i + uniform_int(n - i);
            std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
            out.push_back(idx[static_cast<std::size_t>(i)]);
        }
        return out;
    }

    // Independent stream keyed by (construction seed, label).
    Rng fork(std::string_view label) const {
        std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
        for (char c : label) {
            h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
            h *= 0x100000001b3ull;
        }
        return Rng(seed_ ^ (h | 1ull));
    }

    Rng fork(std::string_view label, std::uint64_t index) const {
        Rng base = fork(label);
        return Rng(base.seed_ + 0x9e3779b97f4a7c15ull * (index + 1));
    }

private:
    std::uint64_t seed_;
    std::uint64_t state_;
    bool have_cached_ = false;
    float cached_ = 0.0f;
};

}  // namespace pgv
