#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "mgrl/profiles.hpp"

namespace mgrl {

struct TimeGrid {
    Eigen::Index slots_per_episode = 24;
    double slot_hours = 1.0;

    void validate() const;
};

struct ProsumerSpec {
    double pv_peak = 4.0;       // kW
    double ess_capacity = 6.0;  // kWh
    double p_batt_max = 2.0;    // kW, symmetric
    double p_inj_max = 4.0;     // kW
    double soc_min = 0.1;
    double soc_max = 0.95;
    double soc_init = 0.5;

    void validate() const;
};

enum class GeneratorRole { Baseline, Reserve };

// Linear cost curve: F = dispatch * dt * marginal_cost.
struct GeneratorSpec {
    double p_min = 0.0;
    double p_max = 10.0;
    double marginal_cost = 0.03;  // $/kWh
    GeneratorRole role = GeneratorRole::Baseline;

    void validate() const;
};

struct MarketConfig {
    Eigen::VectorXd sell_price;             // $/kWh per slot
    std::vector<double> buy_price_ladder;   // $/kWh, strictly increasing
    bool enforce_buy_below_sell = true;

    void validate(const TimeGrid& grid) const;
    // Fixed price used by the conventional scenario and before the grid agent has acted.
    std::size_t midpoint_index() const { return (buy_price_ladder.size() - 1) / 2; }
};

struct ProsumerPhysicalState {
    double soc = 0.5;
    double pv_now = 0.0;
    double consumption_now = 0.0;
};

struct GridObservation {
    Eigen::VectorXd generator_costs;    // $ this slot
    Eigen::VectorXd prosumer_payments;  // $ paid to each prosumer this slot
    double total_demand = 0.0;          // kW
    Eigen::Index slot = 0;              // slot the observation belongs to
};

struct ProsumerObservation {
    double soc = 0.0;
    double pv_now = 0.0;
    double consumption_now = 0.0;
    double buy_price_now = 0.0;
    Eigen::Index slot = 0;
};

struct GridAction {
    std::size_t ladder_index = 0;
};

enum class ProsumerAction : int { Charge = 0, Idle = 1, Discharge = 2 };
inline constexpr int kNumProsumerActions = 3;

struct PowerFlow {
    double requested_p_batt = 0.0;  // kW, >0 charges
    double p_batt = 0.0;
    double p_inj = 0.0;             // kW, >0 sells
    double new_soc = 0.0;
};

struct Dispatch {
    Eigen::VectorXd power;  // kW per generator
    Eigen::VectorXd costs;  // $ per generator
    double reserve_energy = 0.0;  // kWh
    double curtailed = 0.0;       // kW
};

struct ProsumerReward {
    double reward = 0.0;
    int rho = 0;
};

struct SlotOutcome {
    Eigen::Index slot = 0;
    double buy_price = 0.0;
    double sell_price = 0.0;
    double consumer_load = 0.0;
    double total_demand = 0.0;  // consumer load + prosumer purchases

    Eigen::VectorXd requested_p_batt;
    Eigen::VectorXd p_batt;
    Eigen::VectorXd p_inj;            // physical injection, pv - consumption - p_batt
    Eigen::VectorXd delivered_inj;    // p_inj after pro-rata curtailment of surplus
    Eigen::VectorXd soc;              // after the slot

    Eigen::VectorXd dispatch;
    Eigen::VectorXd generator_costs;
    double reserve_energy = 0.0;
    double curtailed_injection = 0.0;

    double grid_reward = 0.0;
    Eigen::VectorXd prosumer_rewards;
    Eigen::VectorXi rho;
    double balance_residual = 0.0;
};

ProsumerPhysicalState checked_state(const ProsumerSpec& spec, const ProsumerPhysicalState& state);

// Applies the command, clipped in order by SoC headroom, p_batt_max, then p_inj_max.
PowerFlow prosumer_power_flow(const ProsumerSpec& spec, const ProsumerPhysicalState& state, ProsumerAction action,
                              double dt);

// Merit-order dispatch. A negative net demand leaves units at p_min and reports the surplus as curtailed.
Dispatch dispatch_generation(double net_demand, std::span<const GeneratorSpec> gens, double dt);

double grid_reward(double total_demand, double sell_price, const Eigen::Ref<const Eigen::VectorXd>& costs,
                   const Eigen::Ref<const Eigen::VectorXd>& injections, double buy_price, double dt);

// Selling pays buy_price; buying costs sell_price (negative reward).
ProsumerReward prosumer_reward(double p_inj, double buy_price, double sell_price, double dt);

class Microgrid {
public:
    struct Observations {
        GridObservation grid;
        std::vector<ProsumerObservation> prosumers;
    };

    struct StepResult {
        SlotOutcome outcome;
        Observations observations;
        bool done = false;
    };

    Microgrid(TimeGrid time_grid, std::vector<ProsumerSpec> prosumers, std::vector<GeneratorSpec> generators,
              MarketConfig market);

    Observations reset(ProfileSet profiles);
    StepResult step(GridAction grid_action, std::span<const ProsumerAction> prosumer_actions);

    const TimeGrid& time_grid() const { return time_grid_; }
    const std::vector<ProsumerSpec>& prosumer_specs() const { return prosumers_; }
    const std::vector<GeneratorSpec>& generator_specs() const { return generators_; }
    const MarketConfig& market() const { return market_; }
    const ProfileSet& profiles() const { return profiles_; }

    std::size_t num_prosumers() const { return prosumers_.size(); }
    std::size_t num_generators() const { return generators_.size(); }
    Eigen::Index slot() const { return slot_; }
    bool done() const { return done_; }
    ProsumerPhysicalState physical_state(std::size_t j) const;

private:
    Observations observe(double buy_price, GridObservation grid) const;

    TimeGrid time_grid_;
    std::vector<ProsumerSpec> prosumers_;
    std::vector<GeneratorSpec> generators_;
    MarketConfig market_;

    ProfileSet profiles_;
    Eigen::VectorXd soc_;
    Eigen::Index slot_ = 0;
    bool done_ = true;
};

} // namespace mgrl
