#pragma once

#include <cassert>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace sc2 {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// One independent random stream. Backed by mt19937_64, whose output sequence
/// is fixed by the standard, so draws are identical across platforms. Bounded
/// draws avoid std::uniform_int_distribution on purpose: its algorithm is
/// implementation-defined and would break cross-machine reproducibility.
class RandomStream {
public:
    explicit RandomStream(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    bool coin() { return (next_u64() & 1ULL) != 0; }

    /// Unbiased draw in [0, n). Lemire multiply-then-reject.
    size_t uniform_index(size_t n) {
        assert(n > 0);
        uint64_t range = static_cast<uint64_t>(n);
        uint64_t x = next_u64();
        __uint128_t m = static_cast<__uint128_t>(x) * range;
        uint64_t low = static_cast<uint64_t>(m);
        if (low < range) {
            uint64_t threshold = (0 - range) % range;
            while (low < threshold) {
                x = next_u64();
                m = static_cast<__uint128_t>(x) * range;
                low = static_cast<uint64_t>(m);
            }
        }
        return static_cast<size_t>(m >> 64);
    }

    double unit_real() { return (next_u64() >> 11) * 0x1.0p-53; }

    template <typename T>
    void shuffle(std::vector<T>& values) {
        for (size_t i = values.size(); i > 1; --i) {
            std::swap(values[i - 1], values[uniform_index(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

/// Derives independent, reproducible random streams from one master seed.
/// Streams are keyed by (purpose, item), so two runs with the same master
/// seed produce identical draws for the same key no matter in which order
/// the streams are created or consumed.
class DeterminismContext {
public:
    explicit DeterminismContext(uint64_t master_seed) : seed_(master_seed) {}

    uint64_t master_seed() const { return seed_; }

    uint64_t derive(std::string_view purpose, std::string_view item = {}) const {
        uint64_t h = 0xcbf29ce484222325ULL ^ seed_;
        auto fold = [&h](std::string_view s) {
            for (unsigned char c : s) {
                h ^= c;
                h *= 0x100000001b3ULL;
            }
            // field terminator so ("ab","c") and ("a","bc") differ
            h ^= 0x1f;
            h *= 0x100000001b3ULL;
        };
        fold(purpose);
        fold(item);
        return splitmix64(splitmix64(h));
    }

    RandomStream stream(std::string_view purpose, std::string_view item = {}) const {
        return RandomStream(derive(purpose, item));
    }

    /// Child context, e.g. one per evaluation round. Adding more rounds never
    /// perturbs the seeds of earlier ones.
    DeterminismContext child(std::string_view purpose, uint64_t index) const {
        return DeterminismContext(derive(purpose, std::to_string(index)));
    }

private:
    uint64_t seed_;
};

} // namespace sc2
