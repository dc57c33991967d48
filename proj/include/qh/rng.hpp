#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace qh {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// xoshiro256++ keyed by a list of 64-bit words. One instance per
// (seed, tag, path, component) stream, so draws depend only on the key and
// the in-stream position, never on scheduling or batch layout.
class Rng {
public:
    explicit Rng(std::initializer_list<std::uint64_t> key) {
        std::uint64_t acc = 0x6A09E667F3BCC909ULL;
        for (std::uint64_t k : key) {
            acc ^= k + 0x9E3779B97F4A7C15ULL + (acc << 6) + (acc >> 2);
            (void)splitmix64(acc);
        }
        for (auto& w : s_) w = splitmix64(acc);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform on (0,1]
    double next_uniform() {
        return 1.0 - static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // standard normal via Box-Muller; pairs are cached so consecutive calls
    // consume one uniform pair per two normals
    double next_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = next_uniform();
        const double u2 = next_uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t s_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// stable sub-seed for a named stage of a multi-stage run
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stage) {
    std::uint64_t s = seed ^ (0xD6E8FEB86659FD93ULL * (stage + 1));
    (void)splitmix64(s);
    return splitmix64(s);
}

// stream tags keep the independent uses of one experiment seed disjoint
namespace stream_tag {
inline constexpr std::uint64_t kTrain = 0x1001;
inline constexpr std::uint64_t kEval = 0x1002;
inline constexpr std::uint64_t kMc = 0x1003;
inline constexpr std::uint64_t kInit = 0x1004;
inline constexpr std::uint64_t kStrategy = 0x1005;
}  // namespace stream_tag

}  // namespace qh
