#include "mgrl/microgrid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mgrl/errors.hpp"

namespace mgrl {

namespace {

constexpr double kSocSlack = 1e-12;
constexpr double kFlowSlack = 1e-9;

void require(bool cond, const std::string& what) {
    if (!cond) throw ContractViolation(what);
}

bool finite(double x) { return std::isfinite(x); }

} // namespace

void TimeGrid::validate() const {
    require(slots_per_episode >= 1, "slots_per_episode must be >= 1");
    require(finite(slot_hours) && slot_hours > 0.0, "slot_duration must be > 0");
}

void ProsumerSpec::validate() const {
    require(finite(pv_peak) && pv_peak > 0.0, "pv_peak must be > 0");
    require(finite(ess_capacity) && ess_capacity > 0.0, "ess_capacity must be > 0");
    require(finite(p_batt_max) && p_batt_max > 0.0, "p_batt_max must be > 0");
    require(finite(p_inj_max) && p_inj_max > 0.0, "p_inj_max must be > 0");
    require(finite(soc_min) && finite(soc_max) && 0.0 <= soc_min && soc_min < soc_max && soc_max <= 1.0,
            "SoC bounds must satisfy 0 <= soc_min < soc_max <= 1");
    require(finite(soc_init) && soc_min <= soc_init && soc_init <= soc_max, "soc_init must lie within SoC bounds");
}

void GeneratorSpec::validate() const {
    require(finite(p_min) && finite(p_max) && 0.0 <= p_min && p_min <= p_max, "generator needs 0 <= p_min <= p_max");
    require(finite(marginal_cost) && marginal_cost >= 0.0, "marginal_cost must be >= 0");
}

void MarketConfig::validate(const TimeGrid& grid) const {
    require(sell_price.size() == grid.slots_per_episode, "sell price schedule length must equal slots_per_episode");
    require(sell_price.allFinite() && (sell_price.array() >= 0.0).all(), "sell prices must be finite and >= 0");
    require(!buy_price_ladder.empty(), "buy price ladder is empty");
    for (std::size_t i = 0; i < buy_price_ladder.size(); ++i) {
        require(finite(buy_price_ladder[i]) && buy_price_ladder[i] >= 0.0, "buy prices must be finite and >= 0");
        if (i > 0) require(buy_price_ladder[i] > buy_price_ladder[i - 1], "buy price ladder must be strictly increasing");
    }
    if (enforce_buy_below_sell)
        require(buy_price_ladder.back() <= sell_price.minCoeff(), "buy price ladder exceeds the minimum sell price");
}

ProsumerPhysicalState checked_state(const ProsumerSpec& spec, const ProsumerPhysicalState& state) {
    require(finite(state.soc) && finite(state.pv_now) && finite(state.consumption_now), "non-finite prosumer state");
    require(state.soc >= spec.soc_min - kSocSlack && state.soc <= spec.soc_max + kSocSlack,
            "SoC " + std::to_string(state.soc) + " outside [soc_min, soc_max]");
    require(state.pv_now >= 0.0 && state.pv_now <= spec.pv_peak + kFlowSlack, "pv outside [0, pv_peak]");
    require(state.consumption_now >= 0.0, "negative consumption");
    return {std::clamp(state.soc, spec.soc_min, spec.soc_max), state.pv_now, state.consumption_now};
}

PowerFlow prosumer_power_flow(const ProsumerSpec& spec, const ProsumerPhysicalState& raw, ProsumerAction action,
                              double dt) {
    require(finite(dt) && dt > 0.0, "dt must be > 0");
    const auto state = checked_state(spec, raw);

    PowerFlow flow;
    switch (action) {
    case ProsumerAction::Charge: flow.requested_p_batt = spec.p_batt_max; break;
    case ProsumerAction::Idle: flow.requested_p_batt = 0.0; break;
    case ProsumerAction::Discharge: flow.requested_p_batt = -spec.p_batt_max; break;
    default: throw ContractViolation("unknown prosumer action");
    }

    // (1) SoC headroom
    const double headroom_up = (spec.soc_max - state.soc) * spec.ess_capacity / dt;
    const double headroom_down = (spec.soc_min - state.soc) * spec.ess_capacity / dt;
    double p = std::clamp(flow.requested_p_batt, headroom_down, headroom_up);
    // (2) converter rating
    p = std::clamp(p, -spec.p_batt_max, spec.p_batt_max);
    // (3) injection bound, only by moving the battery request towards zero
    const double net_pv = state.pv_now - state.consumption_now;
    if (net_pv - p > spec.p_inj_max && p < 0.0)
        p = std::min(0.0, net_pv - spec.p_inj_max);
    else if (net_pv - p < -spec.p_inj_max && p > 0.0)
        p = std::max(0.0, net_pv + spec.p_inj_max);

    flow.p_batt = p;
    flow.p_inj = net_pv - p;
    require(std::abs(flow.p_inj) <= spec.p_inj_max + kFlowSlack,
            "uncontrollable injection " + std::to_string(flow.p_inj) + " kW exceeds p_inj_max");

    flow.new_soc = std::clamp(state.soc + p * dt / spec.ess_capacity, spec.soc_min, spec.soc_max);
    return flow;
}

Dispatch dispatch_generation(double net_demand, std::span<const GeneratorSpec> gens, double dt) {
    require(!gens.empty(), "no generators");
    require(finite(net_demand), "non-finite net demand");
    require(finite(dt) && dt > 0.0, "dt must be > 0");

    const auto n = static_cast<Eigen::Index>(gens.size());
    Dispatch out;
    out.power = Eigen::VectorXd::Zero(n);
    out.costs = Eigen::VectorXd::Zero(n);

    double total_min = 0.0, total_max = 0.0;
    for (const auto& g : gens) {
        g.validate();
        total_min += g.p_min;
        total_max += g.p_max;
    }
    if (net_demand > total_max + kFlowSlack)
        throw InfeasibleDispatch("net demand " + std::to_string(net_demand) + " kW exceeds total capacity " +
                                 std::to_string(total_max) + " kW");

    std::vector<Eigen::Index> order(gens.size());
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return gens[a].marginal_cost < gens[b].marginal_cost; });

    for (Eigen::Index i = 0; i < n; ++i) out.power[i] = gens[i].p_min;
    double remaining = std::max(net_demand, 0.0) - total_min;
    for (auto i : order) {
        if (remaining <= 0.0) break;
        const double add = std::min(remaining, gens[i].p_max - gens[i].p_min);
        out.power[i] += add;
        remaining -= add;
    }
    out.curtailed = std::max(total_min - net_demand, 0.0);

    for (Eigen::Index i = 0; i < n; ++i) {
        out.costs[i] = out.power[i] * dt * gens[i].marginal_cost;
        if (gens[i].role == GeneratorRole::Reserve) out.reserve_energy += out.power[i] * dt;
    }
    return out;
}

double grid_reward(double total_demand, double sell_price, const Eigen::Ref<const Eigen::VectorXd>& costs,
                   const Eigen::Ref<const Eigen::VectorXd>& injections, double buy_price, double dt) {
    require(finite(total_demand) && total_demand >= 0.0, "total demand must be finite and >= 0");
    require(costs.allFinite() && injections.allFinite(), "non-finite reward inputs");
    const double paid = injections.cwiseMax(0.0).sum();
    return total_demand * dt * sell_price - costs.sum() - paid * dt * buy_price;
}

ProsumerReward prosumer_reward(double p_inj, double buy_price, double sell_price, double dt) {
    require(finite(p_inj), "non-finite injection");
    require(buy_price >= 0.0 && sell_price >= 0.0, "prices must be >= 0");
    const int rho = p_inj > 0.0 ? 1 : 0;
    return {rho * p_inj * dt * buy_price + (1 - rho) * p_inj * dt * sell_price, rho};
}

Microgrid::Microgrid(TimeGrid time_grid, std::vector<ProsumerSpec> prosumers, std::vector<GeneratorSpec> generators,
                     MarketConfig market)
    : time_grid_(time_grid), prosumers_(std::move(prosumers)), generators_(std::move(generators)),
      market_(std::move(market)) {
    time_grid_.validate();
    require(!prosumers_.empty(), "at least one prosumer required");
    require(!generators_.empty(), "at least one generator required");
    for (const auto& p : prosumers_) p.validate();
    for (const auto& g : generators_) g.validate();
    market_.validate(time_grid_);
}

ProsumerPhysicalState Microgrid::physical_state(std::size_t j) const {
    const auto k = std::min(slot_, time_grid_.slots_per_episode - 1);
    const auto c = static_cast<Eigen::Index>(j);
    return {soc_[c], profiles_.pv(k, c), profiles_.consumption(k, c)};
}

Microgrid::Observations Microgrid::reset(ProfileSet profiles) {
    require(profiles.num_prosumers() == static_cast<Eigen::Index>(prosumers_.size()),
            "profile prosumer count does not match specs");
    validate_profiles(profiles, time_grid_.slots_per_episode, prosumers_);
    profiles_ = std::move(profiles);

    soc_.resize(static_cast<Eigen::Index>(prosumers_.size()));
    for (std::size_t j = 0; j < prosumers_.size(); ++j) soc_[static_cast<Eigen::Index>(j)] = prosumers_[j].soc_init;
    slot_ = 0;
    done_ = false;

    GridObservation grid;
    grid.generator_costs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(generators_.size()));
    grid.prosumer_payments = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(prosumers_.size()));
    grid.total_demand = profiles_.consumer[0];
    return observe(market_.buy_price_ladder[market_.midpoint_index()], std::move(grid));
}

Microgrid::Observations Microgrid::observe(double buy_price, GridObservation grid) const {
    grid.slot = slot_;
    Observations obs{std::move(grid), {}};
    obs.prosumers.reserve(prosumers_.size());
    for (std::size_t j = 0; j < prosumers_.size(); ++j) {
        const auto s = physical_state(j);
        obs.prosumers.push_back({s.soc, s.pv_now, s.consumption_now, buy_price, slot_});
    }
    return obs;
}

Microgrid::StepResult Microgrid::step(GridAction grid_action, std::span<const ProsumerAction> actions) {
    require(!done_, "step called on a finished episode; call reset first");
    require(actions.size() == prosumers_.size(), "prosumer action vector has wrong size");
    require(grid_action.ladder_index < market_.buy_price_ladder.size(), "grid action outside the price ladder");

    const auto np = static_cast<Eigen::Index>(prosumers_.size());
    const double dt = time_grid_.slot_hours;
    const Eigen::Index k = slot_;

    SlotOutcome out;
    out.slot = k;
    out.buy_price = market_.buy_price_ladder[grid_action.ladder_index];
    out.sell_price = market_.sell_price[k];
    out.consumer_load = profiles_.consumer[k];
    out.requested_p_batt.resize(np);
    out.p_batt.resize(np);
    out.p_inj.resize(np);
    out.soc.resize(np);

    for (Eigen::Index j = 0; j < np; ++j) {
        const auto flow = prosumer_power_flow(prosumers_[static_cast<std::size_t>(j)],
                                              physical_state(static_cast<std::size_t>(j)),
                                              actions[static_cast<std::size_t>(j)], dt);
        out.requested_p_batt[j] = flow.requested_p_batt;
        out.p_batt[j] = flow.p_batt;
        out.p_inj[j] = flow.p_inj;
        out.soc[j] = flow.new_soc;
    }

    const double injected = out.p_inj.cwiseMax(0.0).sum();
    const double purchased = (-out.p_inj).cwiseMax(0.0).sum();
    out.total_demand = out.consumer_load + purchased;
    const double net_demand = out.total_demand - injected;

    auto dispatch = dispatch_generation(net_demand, generators_, dt);
    if (dispatch.curtailed > injected + kFlowSlack)
        throw InfeasibleDispatch("surplus " + std::to_string(dispatch.curtailed) +
                                 " kW exceeds curtailable prosumer injection");
    out.dispatch = std::move(dispatch.power);
    out.generator_costs = std::move(dispatch.costs);
    out.reserve_energy = dispatch.reserve_energy;
    out.curtailed_injection = dispatch.curtailed;

    // Curtailment is removed pro-rata from the injecting prosumers and is unpaid.
    out.delivered_inj = out.p_inj;
    if (out.curtailed_injection > 0.0) {
        const double keep = std::max(0.0, 1.0 - out.curtailed_injection / injected);
        for (Eigen::Index j = 0; j < np; ++j)
            if (out.p_inj[j] > 0.0) out.delivered_inj[j] = out.p_inj[j] * keep;
    }

    out.grid_reward = grid_reward(out.total_demand, out.sell_price, out.generator_costs, out.delivered_inj,
                                  out.buy_price, dt);
    out.prosumer_rewards.resize(np);
    out.rho.resize(np);
    for (Eigen::Index j = 0; j < np; ++j) {
        const auto r = prosumer_reward(out.delivered_inj[j], out.buy_price, out.sell_price, dt);
        out.prosumer_rewards[j] = r.reward;
        out.rho[j] = r.rho;
    }

    out.balance_residual = out.consumer_load - (out.dispatch.sum() + out.p_inj.sum() - out.curtailed_injection);

    soc_ = out.soc;
    ++slot_;
    done_ = slot_ >= time_grid_.slots_per_episode;

    GridObservation grid;
    grid.generator_costs = out.generator_costs;
    grid.prosumer_payments = out.delivered_inj.cwiseMax(0.0) * (dt * out.buy_price);
    grid.total_demand = out.total_demand;

    StepResult result{std::move(out), {}, done_};
    result.observations = observe(result.outcome.buy_price, std::move(grid));
    return result;
}

} // namespace mgrl
