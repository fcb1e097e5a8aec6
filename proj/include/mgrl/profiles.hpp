#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace mgrl {

struct ProsumerSpec;

// Per-slot PV and consumption series. Rows are slots, columns are prosumers.
struct ProfileSet {
    Eigen::MatrixXd pv;           // kW
    Eigen::MatrixXd consumption;  // kW
    Eigen::VectorXd consumer;     // kW, the non-generating consumer

    Eigen::Index slots() const { return consumer.size(); }
    Eigen::Index num_prosumers() const { return pv.cols(); }
};

// The single validation path for every ProfileSet, whether read from disk or synthesized.
// With specs given, also checks pv <= pv_peak and that |pv - consumption| fits the injection bound.
void validate_profiles(const ProfileSet& profiles, Eigen::Index expected_slots,
                       std::span<const ProsumerSpec> specs = {});

// Reads `slot,pv_1..pv_Np,cons_1..cons_Np,consumer`.
ProfileSet load_csv(const std::filesystem::path& path, Eigen::Index num_prosumers, Eigen::Index slots);
void save_csv(const std::filesystem::path& path, const ProfileSet& profiles);

// Half-sine between sunrise and sunset peaking at the midpoint, zero outside.
Eigen::VectorXd synth_pv(double peak, int sunrise_slot, int sunset_slot, int slots);

// Base load, an evening bump on slots 17..21, and seeded uniform jitter of at most 10% of base.
Eigen::VectorXd synth_load(double base, double evening_peak, int slots, std::uint64_t seed);

struct SyntheticProsumer {
    double load_base = 0.5;
    double load_evening_peak = 1.5;
    int sunrise_slot = 6;
    int sunset_slot = 18;
};

struct SyntheticProfileParams {
    std::vector<SyntheticProsumer> prosumers;
    double consumer_base = 3.0;
    double consumer_evening_peak = 2.0;
};

// One prosumer's seed is derived from (seed, j); the consumer uses index Np.
ProfileSet synth_profiles(const SyntheticProfileParams& params, std::span<const ProsumerSpec> specs, int slots,
                          std::uint64_t seed);

} // namespace mgrl
