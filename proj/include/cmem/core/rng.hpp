#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace cmem {

/// Philox4x32-10 block function (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t kMul0 = 0xD2511F53u;
    constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
        ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
               static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

/// Counter-based stream for one (seed, path, step, stream) coordinate. Every
/// draw is a pure function of those four numbers and the draw index, so paths
/// can be generated in any order or on any thread.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t path, std::uint64_t step, std::uint32_t stream = 0)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          step_(static_cast<std::uint32_t>(step)),
          path_lo_(static_cast<std::uint32_t>(path)),
          path_hi_stream_((static_cast<std::uint32_t>(path >> 32) << 8) ^ stream) {}

    /// Uniform on the open interval (0, 1) with 53 random bits.
    double uniform() {
        if (used_ >= 2) refill();
        const std::uint64_t hi = block_[2 * used_];
        const std::uint64_t lo = block_[2 * used_ + 1];
        ++used_;
        const std::uint64_t bits = ((hi << 32) | lo) >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    /// Poisson count by inversion; large means are split into chunks of at most 10.
    unsigned poisson(double mean) {
        unsigned total = 0;
        while (mean > 10.0) {
            total += poisson_small(10.0);
            mean -= 10.0;
        }
        return total + poisson_small(mean);
    }

private:
    unsigned poisson_small(double mean) {
        if (mean <= 0.0) return 0;
        const double u = uniform();
        double p = std::exp(-mean);
        double cdf = p;
        unsigned k = 0;
        while (u > cdf && k < 1000) {
            ++k;
            p *= mean / k;
            cdf += p;
        }
        return k;
    }

    void refill() {
        block_ = philox4x32({draw_, step_, path_lo_, path_hi_stream_}, key_);
        ++draw_;
        used_ = 0;
    }

    std::array<std::uint32_t, 2> key_;
    std::uint32_t step_;
    std::uint32_t path_lo_;
    std::uint32_t path_hi_stream_;
    std::uint32_t draw_ = 0;
    std::array<std::uint32_t, 4> block_{};
    unsigned used_ = 2;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace cmem
