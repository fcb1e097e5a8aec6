#include <random>

#include "doctest.h"
#include "mgrl/errors.hpp"
#include "mgrl/microgrid.hpp"
#include "test_util.hpp"

using namespace mgrl;
using namespace mgrl::testing;
using doctest::Approx;

TEST_CASE("power flow: charging from surplus PV") {
    const auto flow = prosumer_power_flow(small_spec(), {0.5, 4.0, 1.0}, ProsumerAction::Charge, 1.0);
    CHECK(flow.requested_p_batt == 2.0);
    CHECK(flow.p_batt == 2.0);
    CHECK(flow.p_inj == Approx(1.0));
    CHECK(flow.new_soc == Approx(0.5 + 2.0 / 6.0));
    CHECK(flow.new_soc == Approx(0.8333).epsilon(1e-4));
}

TEST_CASE("power flow: idle battery buys the deficit") {
    const auto flow = prosumer_power_flow(small_spec(), {0.5, 0.0, 1.0}, ProsumerAction::Idle, 1.0);
    CHECK(flow.p_batt == 0.0);
    CHECK(flow.p_inj == -1.0);
    CHECK(flow.new_soc == 0.5);
}

TEST_CASE("power flow: clipping order") {
    const auto spec = small_spec();
    SUBCASE("full battery cannot charge") {
        const auto flow = prosumer_power_flow(spec, {0.95, 2.0, 1.0}, ProsumerAction::Charge, 1.0);
        CHECK(flow.p_batt == 0.0);
        CHECK(flow.p_inj == Approx(1.0));
        CHECK(flow.new_soc == 0.95);
    }
    SUBCASE("SoC headroom binds before the converter rating") {
        const auto flow = prosumer_power_flow(spec, {0.8, 0.0, 0.0}, ProsumerAction::Charge, 1.0);
        CHECK(flow.p_batt == Approx(0.15 * 6.0));
        CHECK(flow.new_soc == 0.95);
    }
    SUBCASE("discharge stops at soc_min") {
        const auto flow = prosumer_power_flow(spec, {0.2, 0.0, 1.0}, ProsumerAction::Discharge, 1.0);
        CHECK(flow.p_batt == Approx(-0.6));
        CHECK(flow.new_soc == Approx(0.1));
        CHECK(flow.p_inj == Approx(-0.4));
    }
    SUBCASE("injection bound trims a discharge request") {
        const auto flow = prosumer_power_flow(spec, {0.5, 4.0, 1.0}, ProsumerAction::Discharge, 1.0);
        CHECK(flow.p_batt == Approx(-1.0));
        CHECK(flow.p_inj == Approx(4.0));
    }
    SUBCASE("injection bound trims a charge request") {
        const auto flow = prosumer_power_flow(spec, {0.5, 0.0, 3.0}, ProsumerAction::Charge, 1.0);
        CHECK(flow.p_batt == Approx(1.0));
        CHECK(flow.p_inj == Approx(-4.0));
    }
    SUBCASE("half-hour slots scale the SoC step") {
        const auto flow = prosumer_power_flow(spec, {0.5, 0.0, 0.0}, ProsumerAction::Charge, 0.5);
        CHECK(flow.new_soc == Approx(0.5 + 1.0 / 6.0));
    }
}

TEST_CASE("power flow: contract violations") {
    const auto spec = small_spec();
    CHECK_THROWS_AS(prosumer_power_flow(spec, {std::nan(""), 1.0, 1.0}, ProsumerAction::Idle, 1.0), ContractViolation);
    CHECK_THROWS_AS(prosumer_power_flow(spec, {0.99, 1.0, 1.0}, ProsumerAction::Idle, 1.0), ContractViolation);
    CHECK_THROWS_AS(prosumer_power_flow(spec, {0.05, 1.0, 1.0}, ProsumerAction::Idle, 1.0), ContractViolation);
    CHECK_THROWS_AS(prosumer_power_flow(spec, {0.5, 1.0, 1.0}, ProsumerAction::Idle, 0.0), ContractViolation);
    CHECK_THROWS_AS(prosumer_power_flow(spec, {0.5, 0.0, 5.0}, ProsumerAction::Idle, 1.0), ContractViolation);
}

TEST_CASE("merit-order dispatch") {
    const auto gens = two_generators();
    SUBCASE("baseline covers demand") {
        const auto d = dispatch_generation(8.0, gens, 1.0);
        CHECK(d.power[0] == Approx(8.0));
        CHECK(d.power[1] == 0.0);
        CHECK(d.costs[0] == Approx(0.24));
        CHECK(d.costs[1] == 0.0);
        CHECK(d.reserve_energy == 0.0);
        CHECK(d.curtailed == 0.0);
    }
    SUBCASE("reserve takes the overflow") {
        const auto d = dispatch_generation(12.0, gens, 1.0);
        CHECK(d.power[0] == Approx(10.0));
        CHECK(d.power[1] == Approx(2.0));
        CHECK(d.costs[0] == Approx(0.30));
        CHECK(d.costs[1] == Approx(0.20));
        CHECK(d.reserve_energy == Approx(2.0));
    }
    SUBCASE("zero demand") {
        const auto d = dispatch_generation(0.0, gens, 1.0);
        CHECK(d.power.isZero());
        CHECK(d.costs.isZero());
    }
    SUBCASE("surplus is curtailed") {
        const auto d = dispatch_generation(-3.0, gens, 1.0);
        CHECK(d.power.isZero());
        CHECK(d.curtailed == Approx(3.0));
    }
    SUBCASE("merit order ignores listing order") {
        std::vector<GeneratorSpec> flipped{gens[1], gens[0]};
        const auto d = dispatch_generation(12.0, flipped, 1.0);
        CHECK(d.power[0] == Approx(2.0));
        CHECK(d.power[1] == Approx(10.0));
    }
    SUBCASE("minimum output is respected") {
        std::vector<GeneratorSpec> g{{1.0, 10.0, 0.03, GeneratorRole::Baseline}, {0.5, 10.0, 0.1, GeneratorRole::Reserve}};
        const auto d = dispatch_generation(5.0, g, 1.0);
        CHECK(d.power[0] == Approx(4.5));
        CHECK(d.power[1] == Approx(0.5));
        CHECK(d.reserve_energy == Approx(0.5));
    }
    SUBCASE("infeasible demand") {
        CHECK_THROWS_AS(dispatch_generation(20.5, gens, 1.0), InfeasibleDispatch);
    }
    SUBCASE("no generators") {
        CHECK_THROWS_AS(dispatch_generation(1.0, std::span<const GeneratorSpec>{}, 1.0), ContractViolation);
    }
}

TEST_CASE("grid reward") {
    Eigen::Vector2d costs(0.24, 0.0);
    Eigen::Vector3d inj(1.0, 0.0, 0.0);
    CHECK(grid_reward(8.0, 0.12, costs, inj, 0.06, 1.0) == Approx(8 * 0.12 - 0.24 - 0.06));
    CHECK(grid_reward(8.0, 0.12, costs, inj, 0.06, 1.0) == Approx(0.66));

    CHECK(grid_reward(0.0, 0.12, Eigen::Vector2d::Zero(), Eigen::Vector3d::Zero(), 0.06, 1.0) == 0.0);

    // a buying prosumer is not paid anything
    CHECK(grid_reward(5.0, 0.12, Eigen::Vector2d(0.15, 0.0), Eigen::Vector3d(-2.0, 0.0, 0.0), 0.06, 1.0) ==
          Approx(0.45));
}

TEST_CASE("prosumer reward and rho gate") {
    auto sell = prosumer_reward(1.0, 0.06, 0.12, 1.0);
    CHECK(sell.reward == Approx(0.06));
    CHECK(sell.rho == 1);

    auto buy = prosumer_reward(-1.0, 0.06, 0.12, 1.0);
    CHECK(buy.reward == Approx(-0.12));
    CHECK(buy.rho == 0);

    auto none = prosumer_reward(0.0, 0.06, 0.12, 1.0);
    CHECK(none.reward == 0.0);
    CHECK(none.rho == 0);

    CHECK_THROWS_AS(prosumer_reward(1.0, -0.01, 0.12, 1.0), ContractViolation);
}

TEST_CASE("step: single idle prosumer with no PV buys its load under any price") {
    TimeGrid grid;
    Microgrid env(grid, {small_spec()}, two_generators(), flat_market(24));
    env.reset(constant_profiles(24, 1, 0.0, 1.0, 0.0));
    std::mt19937_64 rng(3);
    for (int k = 0; k < 24; ++k) {
        auto r = env.step({static_cast<std::size_t>(rng() % 6)}, std::vector{ProsumerAction::Idle});
        CHECK(r.outcome.p_inj[0] == Approx(-1.0));
        CHECK(r.outcome.balance_residual == 0.0);
        CHECK(r.outcome.total_demand == Approx(1.0));
        CHECK(r.done == (k == 23));
    }
}

TEST_CASE("step: three idle prosumers with surplus PV are paid for injection") {
    TimeGrid grid;
    std::vector<ProsumerSpec> specs(3, small_spec());
    Microgrid env(grid, specs, two_generators(), flat_market(24));
    const auto obs0 = env.reset(constant_profiles(24, 3, 4.0, 1.0, 10.0));
    CHECK(obs0.prosumers.size() == 3);
    for (const auto& o : obs0.prosumers) CHECK(o.soc == 0.5);

    const std::vector acts(3, ProsumerAction::Idle);
    auto r = env.step({2}, acts);  // 0.06 $/kWh
    for (Eigen::Index j = 0; j < 3; ++j) {
        CHECK(r.outcome.p_inj[j] == Approx(3.0));
        CHECK(r.outcome.prosumer_rewards[j] == Approx(3.0 * 0.06));
        CHECK(r.observations.grid.prosumer_payments[j] == Approx(3.0 * 0.06));
    }
    CHECK(r.outcome.dispatch[0] == Approx(1.0));
    CHECK(r.outcome.grid_reward == Approx(10 * 0.12 - 0.03 - 9 * 0.06));
    CHECK(r.observations.prosumers[0].buy_price_now == 0.06);
    CHECK(std::abs(r.outcome.balance_residual) < 1e-12);
}

TEST_CASE("step: surplus beyond demand is curtailed pro-rata and unpaid") {
    TimeGrid grid;
    std::vector<ProsumerSpec> specs(2, small_spec());
    Microgrid env(grid, specs, two_generators(), flat_market(24));
    ProfileSet p = constant_profiles(24, 2, 4.0, 1.0, 2.0);
    p.pv.col(1).setConstant(2.0);
    env.reset(p);
    auto r = env.step({5}, std::vector(2, ProsumerAction::Idle));
    // injections 3 and 1 against a 2 kW consumer: 2 kW curtailed, half of each
    CHECK(r.outcome.curtailed_injection == Approx(2.0));
    CHECK(r.outcome.delivered_inj[0] == Approx(1.5));
    CHECK(r.outcome.delivered_inj[1] == Approx(0.5));
    CHECK(r.outcome.dispatch.isZero());
    CHECK(r.outcome.prosumer_rewards.sum() == Approx(2.0 * 0.12));
    CHECK(r.outcome.grid_reward == Approx(2.0 * 0.12 - 2.0 * 0.12));
    CHECK(std::abs(r.outcome.balance_residual) < 1e-12);
}

TEST_CASE("step and reset contracts") {
    TimeGrid grid;
    Microgrid env(grid, {small_spec()}, two_generators(), flat_market(24));
    CHECK_THROWS_AS(env.step({0}, std::vector{ProsumerAction::Idle}), ContractViolation);
    CHECK_THROWS_AS(env.reset(constant_profiles(23, 1, 0.0, 1.0, 1.0)), ProfileError);

    env.reset(constant_profiles(24, 1, 0.0, 1.0, 1.0));
    CHECK_THROWS_AS(env.step({6}, std::vector{ProsumerAction::Idle}), ContractViolation);
    CHECK_THROWS_AS(env.step({0}, std::vector(2, ProsumerAction::Idle)), ContractViolation);
    for (int k = 0; k < 24; ++k) env.step({0}, std::vector{ProsumerAction::Charge});
    CHECK(env.done());
    CHECK_THROWS_AS(env.step({0}, std::vector{ProsumerAction::Idle}), ContractViolation);

    // infeasible demand aborts the step
    Microgrid tiny(grid, {small_spec()}, {GeneratorSpec{0.0, 1.0, 0.03, GeneratorRole::Baseline}}, flat_market(24));
    tiny.reset(constant_profiles(24, 1, 0.0, 1.0, 1.0));
    CHECK_THROWS_AS(tiny.step({0}, std::vector{ProsumerAction::Idle}), InfeasibleDispatch);
}

TEST_CASE("market and spec validation") {
    TimeGrid grid;
    auto m = flat_market(24);
    CHECK_NOTHROW(m.validate(grid));
    m.buy_price_ladder = {0.02, 0.02};
    CHECK_THROWS_AS(m.validate(grid), ContractViolation);
    m.buy_price_ladder = {0.02, 0.20};
    CHECK_THROWS_AS(m.validate(grid), ContractViolation);
    m.enforce_buy_below_sell = false;
    CHECK_NOTHROW(m.validate(grid));
    CHECK(flat_market(24).midpoint_index() == 2);

    auto s = small_spec();
    s.soc_min = 0.95;
    CHECK_THROWS_AS(s.validate(), ContractViolation);
    s = small_spec();
    s.soc_init = 0.99;
    CHECK_THROWS_AS(s.validate(), ContractViolation);
    CHECK_THROWS_AS((TimeGrid{0, 1.0}.validate()), ContractViolation);
    CHECK_THROWS_AS((GeneratorSpec{2.0, 1.0, 0.1, GeneratorRole::Baseline}.validate()), ContractViolation);
}

TEST_CASE("property: random actions keep balance, bounds and storage accounting") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 40; ++trial) {
        const int np = 1 + static_cast<int>(rng() % 4);
        std::vector<ProsumerSpec> specs;
        for (int j = 0; j < np; ++j) {
            ProsumerSpec s;
            s.pv_peak = 1.0 + 4.0 * u(rng);
            s.p_inj_max = s.pv_peak;
            s.ess_capacity = 1.0 + 20.0 * u(rng);
            s.p_batt_max = 0.5 + 3.0 * u(rng);
            s.soc_min = 0.3 * u(rng);
            s.soc_max = 0.7 + 0.3 * u(rng);
            s.soc_init = s.soc_min + (s.soc_max - s.soc_min) * u(rng);
            specs.push_back(s);
        }
        TimeGrid grid{24, 0.25 + u(rng)};
        Microgrid env(grid, specs, {{0.0, 50.0, 0.03, GeneratorRole::Baseline}, {0.0, 50.0, 0.4, GeneratorRole::Reserve}},
                      flat_market(24));
        ProfileSet p;
        p.pv.resize(24, np);
        p.consumption.resize(24, np);
        p.consumer.resize(24);
        for (int k = 0; k < 24; ++k) {
            for (int j = 0; j < np; ++j) {
                p.pv(k, j) = specs[j].pv_peak * u(rng);
                p.consumption(k, j) = specs[j].pv_peak * u(rng);
            }
            p.consumer[k] = 3.0 * u(rng);
        }
        env.reset(p);

        Eigen::VectorXd energy = Eigen::VectorXd::Zero(np);
        while (!env.done()) {
            std::vector<ProsumerAction> acts;
            for (int j = 0; j < np; ++j) acts.push_back(static_cast<ProsumerAction>(rng() % 3));
            const auto r = env.step({static_cast<std::size_t>(rng() % 6)}, acts);
            const auto& o = r.outcome;
            CHECK(std::abs(o.balance_residual) < 1e-9);
            for (int j = 0; j < np; ++j) {
                CHECK(o.soc[j] >= specs[j].soc_min);
                CHECK(o.soc[j] <= specs[j].soc_max);
                CHECK(std::abs(o.p_batt[j]) <= specs[j].p_batt_max + 1e-12);
                CHECK(std::abs(o.p_inj[j]) <= specs[j].p_inj_max + 1e-9);
                if (o.prosumer_rewards[j] > 0.0) CHECK(o.delivered_inj[j] > 0.0);
                if (o.delivered_inj[j] <= 0.0) CHECK(o.prosumer_rewards[j] <= 0.0);
                energy[j] += o.p_batt[j] * grid.slot_hours / specs[j].ess_capacity;
            }
            const double paid = (o.delivered_inj.cwiseMax(0.0) * o.buy_price * grid.slot_hours).sum();
            double positive_rewards = 0.0;
            for (int j = 0; j < np; ++j)
                if (o.rho[j]) positive_rewards += o.prosumer_rewards[j];
            CHECK(paid == Approx(positive_rewards));
        }
        for (int j = 0; j < np; ++j)
            CHECK(env.physical_state(j).soc - specs[j].soc_init == Approx(energy[j]).epsilon(1e-12));
    }
}
