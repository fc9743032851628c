#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace mvfbm {

enum class StreamPurpose : std::uint64_t { initial_state = 1, driving_noise = 2, probe = 3 };

// Derives one independent generator seed per (replication, particle, purpose)
// from a base seed by chaining the SplitMix64 finalizer.
class SeedScheme {
public:
    explicit SeedScheme(std::uint64_t base_seed) : base_(base_seed) {}

    std::uint64_t base_seed() const noexcept { return base_; }

    std::uint64_t derive(std::uint64_t replication, std::uint64_t particle, StreamPurpose purpose) const noexcept {
        std::uint64_t h = mix(base_ ^ 0x6a09e667f3bcc909ULL);
        h = mix(h ^ replication);
        h = mix(h ^ particle);
        h = mix(h ^ static_cast<std::uint64_t>(purpose));
        return h;
    }

    std::mt19937_64 stream(std::uint64_t replication, std::uint64_t particle, StreamPurpose purpose) const {
        return std::mt19937_64(derive(replication, particle, purpose));
    }

    std::vector<double> normals(std::uint64_t replication, std::uint64_t particle, StreamPurpose purpose,
                                std::size_t count) const {
        auto gen = stream(replication, particle, purpose);
        std::normal_distribution<double> dist(0.0, 1.0);
        std::vector<double> out(count);
        for (double& x : out) x = dist(gen);
        return out;
    }

    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t base_;
};

}  // namespace mvfbm
