#include "mgrl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <thread>

#include "mgrl/checkpoint.hpp"
#include "mgrl/errors.hpp"
#include "mgrl/seed.hpp"

namespace mgrl {

namespace {

std::vector<double> column(const EpisodeLog& log, auto&& pick) {
    std::vector<double> out;
    out.reserve(log.slots.size());
    for (const auto& s : log.slots) out.push_back(pick(s));
    return out;
}

EpisodeMetrics metrics_from_log(const EpisodeLog& log, std::size_t np, double gamma_grid, double gamma_prosumer) {
    EpisodeMetrics m;
    m.bills = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(np));
    m.prosumer_returns = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(np));
    for (const auto& s : log.slots) {
        m.grid_profit += s.grid_reward;
        m.reserve_energy += s.reserve_energy;
        m.bills -= s.prosumer_rewards;
    }
    const auto grid_rewards = column(log, [](const SlotOutcome& s) { return s.grid_reward; });
    m.grid_return = discounted_return(grid_rewards, gamma_grid);
    for (std::size_t j = 0; j < np; ++j) {
        const auto rewards =
            column(log, [j](const SlotOutcome& s) { return s.prosumer_rewards[static_cast<Eigen::Index>(j)]; });
        m.prosumer_returns[static_cast<Eigen::Index>(j)] = discounted_return(rewards, gamma_prosumer);
    }
    return m;
}

MeanMetrics average(std::span<const EpisodeMetrics> runs) {
    MeanMetrics out;
    out.episodes = static_cast<int>(runs.size());
    if (runs.empty()) return out;
    const auto np = runs.front().bills.size();
    out.bills = Eigen::VectorXd::Zero(np);
    out.bills_stddev = Eigen::VectorXd::Zero(np);
    for (const auto& r : runs) {
        out.bills += r.bills;
        out.grid_profit += r.grid_profit;
        out.reserve_energy += r.reserve_energy;
    }
    const double n = static_cast<double>(runs.size());
    out.bills /= n;
    out.grid_profit /= n;
    out.reserve_energy /= n;
    for (const auto& r : runs) out.bills_stddev += (r.bills - out.bills).cwiseAbs2();
    out.bills_stddev = (out.bills_stddev / n).cwiseSqrt();
    return out;
}

int eval_count(const RunConfig& config, std::optional<int> episodes) {
    const int n = episodes.value_or(config.eval_episodes);
    if (n < 1) throw ContractViolation("evaluation needs at least one episode");
    return n;
}

} // namespace

GridNorms grid_norms_for(const RunConfig& c) {
    GridNorms n;
    n.num_generators = static_cast<Eigen::Index>(c.generators.size());
    n.num_prosumers = static_cast<Eigen::Index>(c.prosumers.size());
    const double dt = c.time_grid.slot_hours;
    const double top_price = c.market.buy_price_ladder.back();
    n.cost = 0.0;
    n.demand = 0.0;
    for (const auto& g : c.generators) {
        n.cost = std::max(n.cost, g.p_max * dt * g.marginal_cost);
        n.demand += g.p_max;
    }
    n.payment = 0.0;
    for (const auto& p : c.prosumers) n.payment = std::max(n.payment, p.p_inj_max * dt * top_price);
    if (n.cost <= 0.0) n.cost = 1.0;
    if (n.payment <= 0.0) n.payment = 1.0;
    if (n.demand <= 0.0) n.demand = 1.0;
    if (c.agent.time_features) n.day_slots = c.time_grid.slots_per_episode;
    return n;
}

ProsumerNorms prosumer_norms_for(const RunConfig& c) {
    ProsumerNorms n;
    n.pv = 0.0;
    n.consumption = 0.0;
    for (const auto& p : c.prosumers) {
        n.pv = std::max(n.pv, p.pv_peak);
        n.consumption = std::max(n.consumption, p.p_inj_max);
    }
    n.price = c.market.buy_price_ladder.back() > 0.0 ? c.market.buy_price_ladder.back() : 1.0;
    if (c.agent.time_features) n.day_slots = c.time_grid.slots_per_episode;
    return n;
}

AgentSet make_agents(const RunConfig& c) {
    const auto gn = grid_norms_for(c);
    const auto pn = prosumer_norms_for(c);
    AgentSet set{gn, pn,
                 DqnAgent(gn.dim(), c.market.buy_price_ladder.size(), c.agent, derive_seed(c.seed, SeedStream::GridAgent)),
                 {}};
    set.prosumers.reserve(c.prosumers.size());
    for (std::size_t j = 0; j < c.prosumers.size(); ++j)
        set.prosumers.emplace_back(pn.dim(), kNumProsumerActions, c.agent,
                                   derive_seed(c.seed, SeedStream::ProsumerAgent, j));
    return set;
}

ProsumerAction conventional_policy(const ProsumerPhysicalState& raw, const ProsumerSpec& spec) {
    const auto s = checked_state(spec, raw);
    if (s.pv_now > s.consumption_now) return s.soc < spec.soc_max ? ProsumerAction::Charge : ProsumerAction::Idle;
    if (s.pv_now < s.consumption_now) return s.soc > spec.soc_min ? ProsumerAction::Discharge : ProsumerAction::Idle;
    return ProsumerAction::Idle;
}

Microgrid make_environment(const RunConfig& c) {
    return Microgrid(c.time_grid, c.prosumers, c.generators, c.market);
}

ProfileSet episode_profiles(const RunConfig& c, std::uint64_t seed) {
    const auto slots = c.time_grid.slots_per_episode;
    if (c.profile_csv) {
        auto p = load_csv(*c.profile_csv, static_cast<Eigen::Index>(c.prosumers.size()), slots);
        validate_profiles(p, slots, c.prosumers);
        return p;
    }
    return synth_profiles(c.synthetic, c.prosumers, static_cast<int>(slots), seed);
}

Microgrid::Observations reset_episode(Microgrid& env, const RunConfig& c, std::uint64_t seed) {
    return env.reset(episode_profiles(c, seed));
}

EpisodeResult run_episode(Microgrid& env, Microgrid::Observations obs, AgentSet* agents, EpisodeMode mode,
                          double epsilon) {
    if (env.done()) throw ContractViolation("run_episode needs a freshly reset environment");
    if (mode != EpisodeMode::Baseline && agents == nullptr) throw ContractViolation("agent modes need agents");
    if (agents && agents->prosumers.size() != env.num_prosumers())
        throw ContractViolation("agent count does not match prosumer count");

    const auto np = env.num_prosumers();
    const double eps = mode == EpisodeMode::Train ? epsilon : 0.0;
    const std::size_t baseline_price = env.market().midpoint_index();

    EpisodeResult result;
    auto& log = result.log;
    std::vector<ProsumerAction> actions(np);
    std::vector<Eigen::VectorXd> prosumer_states(np);
    Eigen::VectorXd grid_state;

    while (!env.done()) {
        GridAction grid_action{baseline_price};
        if (mode == EpisodeMode::Baseline) {
            for (std::size_t j = 0; j < np; ++j)
                actions[j] = conventional_policy(env.physical_state(j), env.prosumer_specs()[j]);
        } else {
            grid_state = encode_grid_state(obs.grid, agents->grid_norms);
            grid_action.ladder_index = agents->grid.act(grid_state, eps);
            for (std::size_t j = 0; j < np; ++j) {
                prosumer_states[j] = encode_prosumer_state(obs.prosumers[j], agents->prosumer_norms);
                actions[j] = static_cast<ProsumerAction>(agents->prosumers[j].act(prosumer_states[j], eps));
            }
        }

        auto step = env.step(grid_action, actions);

        if (mode == EpisodeMode::Train) {
            agents->grid.observe({grid_state, grid_action.ladder_index, step.outcome.grid_reward,
                                  encode_grid_state(step.observations.grid, agents->grid_norms), step.done});
            for (std::size_t j = 0; j < np; ++j)
                agents->prosumers[j].observe(
                    {prosumer_states[j], static_cast<std::size_t>(actions[j]),
                     step.outcome.prosumer_rewards[static_cast<Eigen::Index>(j)],
                     encode_prosumer_state(step.observations.prosumers[j], agents->prosumer_norms), step.done});
        }

        log.grid_actions.push_back(grid_action.ladder_index);
        log.prosumer_actions.push_back(actions);
        log.slots.push_back(std::move(step.outcome));
        obs = std::move(step.observations);
    }

    const double gamma = agents ? agents->grid.hyperparams().gamma : 1.0;
    const double gamma_p = agents && !agents->prosumers.empty() ? agents->prosumers.front().hyperparams().gamma : 1.0;
    result.metrics = metrics_from_log(log, np, gamma, gamma_p);
    return result;
}

double grid_profit_from_log(const EpisodeLog& log, double dt) {
    double revenue = 0.0, generation = 0.0, payments = 0.0;
    for (const auto& s : log.slots) {
        revenue += s.total_demand * s.sell_price * dt;
        generation += s.generator_costs.sum();
        for (Eigen::Index j = 0; j < s.delivered_inj.size(); ++j)
            if (s.delivered_inj[j] > 0.0) payments += s.delivered_inj[j] * s.buy_price * dt;
    }
    return revenue - generation - payments;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, const std::string& role, std::size_t index) {
    return dir / ("agent_" + role + "_" + std::to_string(index) + ".ckpt");
}

void save_agents(const std::filesystem::path& dir, const AgentSet& agents) {
    std::filesystem::create_directories(dir);
    save_checkpoint(checkpoint_path(dir, "grid", 0), agents.grid.online(), agents.grid.updates());
    for (std::size_t j = 0; j < agents.prosumers.size(); ++j)
        save_checkpoint(checkpoint_path(dir, "prosumer", j + 1), agents.prosumers[j].online(),
                        agents.prosumers[j].updates());
}

AgentSet load_agents(const RunConfig& config, const std::filesystem::path& dir) {
    auto agents = make_agents(config);
    auto load_one = [&](DqnAgent& agent, const std::filesystem::path& path) {
        if (!std::filesystem::exists(path)) throw CheckpointError(CheckpointError::Kind::Io, "missing checkpoint " + path.string());
        agent.load(load_checkpoint(path).net);
    };
    load_one(agents.grid, checkpoint_path(dir, "grid", 0));
    for (std::size_t j = 0; j < agents.prosumers.size(); ++j)
        load_one(agents.prosumers[j], checkpoint_path(dir, "prosumer", j + 1));
    return agents;
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const CurveRow> curve, std::size_t num_prosumers) {
    for (const auto& row : curve)
        if (static_cast<std::size_t>(row.bills.size()) != num_prosumers)
            throw ContractViolation("curve row has the wrong number of bills");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    const auto np = static_cast<Eigen::Index>(num_prosumers);
    out << "episode";
    for (Eigen::Index j = 1; j <= np; ++j) out << ",bill_" << j;
    out << ",grid_profit,reserve_kwh,epsilon_grid,epsilon_prosumer\n";
    out << std::fixed << std::setprecision(4);
    for (const auto& row : curve) {
        out << row.episode;
        for (Eigen::Index j = 0; j < row.bills.size(); ++j) out << ',' << row.bills[j];
        out << ',' << row.grid_profit << ',' << row.reserve_energy << ',' << row.epsilon_grid << ','
            << row.epsilon_prosumer << '\n';
    }
}

TrainResult train(const RunConfig& config, const std::optional<std::filesystem::path>& out_dir,
                  const ProgressFn& progress) {
    config.validate();
    TrainResult result{{}, std::nullopt, make_agents(config)};
    auto env = make_environment(config);

    if (out_dir) {
        std::filesystem::create_directories(*out_dir);
        save_agents(*out_dir, result.agents);
    }

    result.curve.reserve(static_cast<std::size_t>(config.episodes));
    for (int ep = 0; ep < config.episodes; ++ep) {
        const double eps = epsilon_at(ep, config.agent);
        auto obs = reset_episode(env, config, derive_seed(config.seed, SeedStream::Profiles, static_cast<std::uint64_t>(ep)));
        auto episode = run_episode(env, std::move(obs), &result.agents, EpisodeMode::Train, eps);

        CurveRow row{ep, episode.metrics.bills, episode.metrics.grid_profit, episode.metrics.reserve_energy, eps, eps};
        if (progress) progress(row);
        result.curve.push_back(std::move(row));
        result.final_metrics = std::move(episode.metrics);

        if (out_dir && config.checkpoint_interval > 0 && (ep + 1) % config.checkpoint_interval == 0)
            save_agents(*out_dir, result.agents);
    }

    if (out_dir) {
        save_agents(*out_dir, result.agents);
        write_metrics_csv(*out_dir / "metrics.csv", result.curve, config.prosumers.size());
    }
    return result;
}

MeanMetrics evaluate(const RunConfig& config, AgentSet& agents, std::optional<int> episodes) {
    const int n = eval_count(config, episodes);
    auto env = make_environment(config);
    std::vector<EpisodeMetrics> runs;
    for (int i = 0; i < n; ++i) {
        auto obs = reset_episode(env, config, derive_seed(config.seed, SeedStream::EvalProfiles, static_cast<std::uint64_t>(i)));
        runs.push_back(run_episode(env, std::move(obs), &agents, EpisodeMode::Eval).metrics);
    }
    return average(runs);
}

MeanMetrics evaluate_baseline(const RunConfig& config, std::optional<int> episodes) {
    const int n = eval_count(config, episodes);
    auto env = make_environment(config);
    std::vector<EpisodeMetrics> runs;
    for (int i = 0; i < n; ++i) {
        auto obs = reset_episode(env, config, derive_seed(config.seed, SeedStream::EvalProfiles, static_cast<std::uint64_t>(i)));
        runs.push_back(run_episode(env, std::move(obs), nullptr, EpisodeMode::Baseline).metrics);
    }
    return average(runs);
}

Eigen::VectorXd bill_reduction(const Eigen::Ref<const Eigen::VectorXd>& baseline,
                               const Eigen::Ref<const Eigen::VectorXd>& agent) {
    if (baseline.size() != agent.size()) throw ContractViolation("bill vectors differ in length");
    Eigen::VectorXd r(baseline.size());
    for (Eigen::Index j = 0; j < baseline.size(); ++j) {
        if (baseline[j] == 0.0)
            throw ContractViolation("baseline bill of prosumer " + std::to_string(j + 1) +
                                    " is zero; bill reduction is undefined");
        r[j] = (baseline[j] - agent[j]) / std::abs(baseline[j]);
    }
    return r;
}

Comparison compare_scenarios(const RunConfig& config, AgentSet& agents) {
    Comparison c;
    c.baseline = evaluate_baseline(config);
    c.agent = evaluate(config, agents);
    c.bill_reduction = bill_reduction(c.baseline.bills, c.agent.bills);
    c.grid_profit_delta = c.agent.grid_profit - c.baseline.grid_profit;
    c.reserve_delta = c.agent.reserve_energy - c.baseline.reserve_energy;
    return c;
}

std::vector<SweepRow> battery_sweep(const RunConfig& config, std::span<const double> capacities,
                                    const std::optional<std::filesystem::path>& out_dir, unsigned max_parallel) {
    if (capacities.empty()) throw ContractViolation("sweep needs at least one capacity");
    for (std::size_t i = 0; i < capacities.size(); ++i) {
        if (!(capacities[i] > 0.0)) throw ContractViolation("sweep capacities must be positive");
        if (i > 0 && !(capacities[i] > capacities[i - 1]))
            throw ContractViolation("sweep capacities must be strictly ascending without duplicates");
    }

    auto job = [&](std::size_t i) {
        RunConfig c = config;
        c.seed = derive_seed(config.seed, SeedStream::Sweep, i);
        for (auto& p : c.prosumers) p.ess_capacity = capacities[i];
        c.validate();
        std::optional<std::filesystem::path> dir;
        if (out_dir) {
            std::ostringstream name;
            name << "capacity_" << capacities[i];
            dir = *out_dir / name.str();
        }
        auto trained = train(c, dir);
        // every capacity is scored on the same evaluation days
        RunConfig scoring = c;
        scoring.seed = config.seed;
        const auto m = evaluate(scoring, trained.agents);
        return SweepRow{capacities[i], m.bills.mean(), m.grid_profit};
    };

    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t width = max_parallel > 0 ? max_parallel : hw;
    std::vector<SweepRow> rows(capacities.size());
    for (std::size_t start = 0; start < capacities.size(); start += width) {
        std::vector<std::future<SweepRow>> running;
        const auto stop = std::min(capacities.size(), start + width);
        for (std::size_t i = start; i < stop; ++i) running.push_back(std::async(std::launch::async, job, i));
        for (std::size_t i = start; i < stop; ++i) rows[i] = running[i - start].get();
    }
    return rows;
}

void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "capacity_kwh,mean_bill,grid_profit\n" << std::fixed << std::setprecision(4);
    for (const auto& r : rows) out << r.capacity_kwh << ',' << r.mean_bill << ',' << r.grid_profit << '\n';
}

} // namespace mgrl
