#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "mgrl/agents.hpp"
#include "mgrl/config.hpp"
#include "mgrl/microgrid.hpp"

namespace mgrl {

struct EpisodeMetrics {
    Eigen::VectorXd bills;        // $ per prosumer: purchases minus sales, -U_j(T)
    double grid_profit = 0.0;     // $ M(T)
    double reserve_energy = 0.0;  // kWh
    double grid_return = 0.0;     // discounted
    Eigen::VectorXd prosumer_returns;
};

enum class EpisodeMode { Train, Eval, Baseline };

struct EpisodeLog {
    std::vector<SlotOutcome> slots;
    std::vector<std::size_t> grid_actions;
    std::vector<std::vector<ProsumerAction>> prosumer_actions;
};

struct EpisodeResult {
    EpisodeMetrics metrics;
    EpisodeLog log;
};

// Grid agent plus one agent per prosumer, with the state normalizations they were trained under.
struct AgentSet {
    GridNorms grid_norms;
    ProsumerNorms prosumer_norms;
    DqnAgent grid;
    std::vector<DqnAgent> prosumers;
};

GridNorms grid_norms_for(const RunConfig& config);
ProsumerNorms prosumer_norms_for(const RunConfig& config);
AgentSet make_agents(const RunConfig& config);

// Charge on surplus PV until full, discharge on deficit until empty, otherwise idle.
ProsumerAction conventional_policy(const ProsumerPhysicalState& state, const ProsumerSpec& spec);

Microgrid make_environment(const RunConfig& config);
ProfileSet episode_profiles(const RunConfig& config, std::uint64_t seed);
// Resets SoC and the slot index with the profiles for `seed`.
Microgrid::Observations reset_episode(Microgrid& env, const RunConfig& config, std::uint64_t seed);

// Runs a freshly reset environment to the end of the episode. `agents` may be null only in baseline mode.
EpisodeResult run_episode(Microgrid& env, Microgrid::Observations obs, AgentSet* agents, EpisodeMode mode,
                          double epsilon = 0.0);

// Recomputes M(T) = V(P^dm) - sum F - sum C_j from the slot log.
double grid_profit_from_log(const EpisodeLog& log, double slot_hours);

struct CurveRow {
    int episode = 0;
    Eigen::VectorXd bills;
    double grid_profit = 0.0;
    double reserve_energy = 0.0;
    double epsilon_grid = 0.0;
    double epsilon_prosumer = 0.0;
};

struct TrainResult {
    std::vector<CurveRow> curve;
    std::optional<EpisodeMetrics> final_metrics;
    AgentSet agents;
};

using ProgressFn = std::function<void(const CurveRow&)>;

// Writes metrics.csv and agent checkpoints under out_dir when given.
TrainResult train(const RunConfig& config, const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                  const ProgressFn& progress = {});

// Columns: episode, bill_1..bill_N, grid_profit, reserve_kwh, epsilon_grid, epsilon_prosumer; 4 decimals.
void write_metrics_csv(const std::filesystem::path& path, std::span<const CurveRow> curve, std::size_t num_prosumers);
std::filesystem::path checkpoint_path(const std::filesystem::path& dir, const std::string& role, std::size_t index);
void save_agents(const std::filesystem::path& dir, const AgentSet& agents);
AgentSet load_agents(const RunConfig& config, const std::filesystem::path& dir);

struct MeanMetrics {
    Eigen::VectorXd bills;
    Eigen::VectorXd bills_stddev;
    double grid_profit = 0.0;
    double reserve_energy = 0.0;
    int episodes = 0;
};

// Greedy agents over eval_episodes jittered profiles (or `episodes` when given).
MeanMetrics evaluate(const RunConfig& config, AgentSet& agents, std::optional<int> episodes = std::nullopt);
// Conventional policy with the midpoint buy price on the same profiles as evaluate().
MeanMetrics evaluate_baseline(const RunConfig& config, std::optional<int> episodes = std::nullopt);

struct Comparison {
    MeanMetrics baseline;
    MeanMetrics agent;
    Eigen::VectorXd bill_reduction;  // fraction per prosumer
    double grid_profit_delta = 0.0;
    double reserve_delta = 0.0;
};

// (baseline_bill - agent_bill) / |baseline_bill|; throws when a baseline bill is zero.
Eigen::VectorXd bill_reduction(const Eigen::Ref<const Eigen::VectorXd>& baseline,
                               const Eigen::Ref<const Eigen::VectorXd>& agent);
Comparison compare_scenarios(const RunConfig& config, AgentSet& agents);

struct SweepRow {
    double capacity_kwh = 0.0;
    double mean_bill = 0.0;
    double grid_profit = 0.0;
};

// One independent train + evaluate per capacity, all prosumers sized alike.
std::vector<SweepRow> battery_sweep(const RunConfig& config, std::span<const double> capacities,
                                    const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                                    unsigned max_parallel = 0);
void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows);

} // namespace mgrl
