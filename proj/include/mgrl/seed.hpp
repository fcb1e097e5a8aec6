#pragma once

#include <cstdint>

namespace mgrl {

// splitmix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Named seed streams fanned out from the single master seed.
enum class SeedStream : std::uint64_t {
    Profiles = 1,
    EvalProfiles = 2,
    GridAgent = 3,
    ProsumerAgent = 4,
    Sweep = 5,
    GradCheck = 6,
};

// seed = splitmix64(splitmix64(master ^ stream) + index)
constexpr std::uint64_t derive_seed(std::uint64_t master, SeedStream stream, std::uint64_t index = 0) noexcept {
    return splitmix64(splitmix64(master ^ (static_cast<std::uint64_t>(stream) * 0xD1B54A32D192ED03ULL)) + index);
}

} // namespace mgrl
