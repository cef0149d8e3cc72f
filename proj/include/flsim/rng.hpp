#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace flsim {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Named, order-sensitive seed derivation: every random stream in a run is
// addressed by (master_seed, tag, indices...), so sub-streams never collide.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) {
    std::uint64_t s = master ^ fnv1a64(tag);
    return splitmix64(s);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t a) {
    std::uint64_t s = derive_seed(master, tag) ^ (a * 0x9e3779b97f4a7c15ULL + 0x7f4a7c15ULL);
    return splitmix64(s);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t a,
                                 std::uint64_t b) {
    std::uint64_t s = derive_seed(master, tag, a) ^ (b * 0xbf58476d1ce4e5b9ULL + 0x1ce4e5b9ULL);
    return splitmix64(s);
}

// mt19937_64 with hand-rolled distributions. The standard pins the raw engine
// output but not the library distributions, and reproducibility across
// toolchains is part of the contract here.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform in [0, n)
    std::size_t uniform_index(std::size_t n) {
        if (n <= 1) return 0;
        std::uint64_t mask = ~0ULL >> std::countl_zero(static_cast<std::uint64_t>(n - 1));
        for (;;) {
            std::uint64_t v = next_u64() & mask;
            if (v < n) return static_cast<std::size_t>(v);
        }
    }

    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices from [0, n), in selection order
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        std::vector<std::size_t> out;
        out.reserve(k);
        for (std::size_t i = 0; i < k && i < n; ++i) {
            std::size_t j = i + uniform_index(n - i);
            std::swap(pool[i], pool[j]);
            out.push_back(pool[i]);
        }
        return out;
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace flsim
