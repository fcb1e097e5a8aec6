#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mgrl/config.hpp"
#include "mgrl/errors.hpp"
#include "mgrl/harness.hpp"
#include "mgrl/mlp.hpp"

namespace fs = std::filesystem;
using namespace mgrl;

namespace {

constexpr double kGradTolerance = 1e-4;

struct Options {
    std::string config;
    std::string out;
    std::string ckpt;
    std::optional<int> episodes;
    std::optional<std::uint64_t> seed;
    std::string capacities = "2,6,10,15,20,25";
    unsigned jobs = 0;
    int nets = 25;
    std::uint64_t grad_seed = 1;
};

RunConfig load(const Options& o) {
    auto cfg = parse_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    if (o.episodes) {
        // keep the exploration schedule proportional to the shortened budget
        const double fraction = cfg.episodes > 0 ? double(cfg.agent.epsilon_decay_episodes) / cfg.episodes : 0.8;
        cfg.episodes = *o.episodes;
        cfg.agent.epsilon_decay_episodes = static_cast<int>(std::lround(fraction * cfg.episodes));
    }
    cfg.validate();
    return cfg;
}

fs::path out_dir(const Options& o, const RunConfig& cfg, const fs::path& fallback = {}) {
    if (!o.out.empty()) return o.out;
    return fallback.empty() ? cfg.output_dir : fallback;
}

fs::path ckpt_dir(const Options& o, const RunConfig& cfg) { return o.ckpt.empty() ? cfg.output_dir : fs::path(o.ckpt); }

void print_metrics(const char* label, const MeanMetrics& m) {
    std::cout << label << ": bills";
    for (Eigen::Index j = 0; j < m.bills.size(); ++j)
        std::printf(" %.4f (sd %.4f)", m.bills[j], m.bills_stddev[j]);
    std::printf(", grid profit %.4f, reserve %.4f kWh over %d days\n", m.grid_profit, m.reserve_energy, m.episodes);
}

void write_summary(const fs::path& path, const MeanMetrics& m) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "metric,mean,stddev\n" << std::fixed << std::setprecision(4);
    for (Eigen::Index j = 0; j < m.bills.size(); ++j)
        out << "bill_" << j + 1 << ',' << m.bills[j] << ',' << m.bills_stddev[j] << '\n';
    out << "grid_profit," << m.grid_profit << ",\nreserve_kwh," << m.reserve_energy << ",\n";
}

int cmd_train(const Options& o) {
    const auto cfg = load(o);
    const auto dir = out_dir(o, cfg);
    const int every = std::max(1, cfg.episodes / 20);
    const auto result = train(cfg, dir, [&](const CurveRow& row) {
        if (row.episode % every != 0 && row.episode + 1 != cfg.episodes) return;
        std::printf("episode %d  eps %.3f  bills", row.episode, row.epsilon_prosumer);
        for (double b : row.bills) std::printf(" %.4f", b);
        std::printf("  profit %.4f  reserve %.4f\n", row.grid_profit, row.reserve_energy);
        std::fflush(stdout);
    });
    std::cout << "trained " << result.curve.size() << " episodes; metrics and checkpoints in " << dir.string() << "\n";
    return 0;
}

int cmd_eval(const Options& o) {
    const auto cfg = load(o);
    auto agents = load_agents(cfg, ckpt_dir(o, cfg));
    const auto m = evaluate(cfg, agents);
    print_metrics("agents", m);
    const auto path = out_dir(o, cfg, ckpt_dir(o, cfg)) / "eval.csv";
    write_summary(path, m);
    std::cout << "wrote " << path.string() << "\n";
    return 0;
}

int cmd_baseline(const Options& o) {
    const auto cfg = load(o);
    const auto m = evaluate_baseline(cfg);
    print_metrics("conventional", m);
    const auto path = out_dir(o, cfg) / "baseline.csv";
    write_summary(path, m);
    std::cout << "wrote " << path.string() << "\n";
    return 0;
}

int cmd_compare(const Options& o) {
    const auto cfg = load(o);
    auto agents = load_agents(cfg, ckpt_dir(o, cfg));
    const auto c = compare_scenarios(cfg, agents);
    print_metrics("conventional", c.baseline);
    print_metrics("agents", c.agent);
    for (Eigen::Index j = 0; j < c.bill_reduction.size(); ++j)
        std::printf("prosumer %ld bill reduction %.1f%%\n", long(j + 1), 100.0 * c.bill_reduction[j]);
    std::printf("grid profit change %+.4f, reserve change %+.4f kWh\n", c.grid_profit_delta, c.reserve_delta);

    const auto dir = out_dir(o, cfg, ckpt_dir(o, cfg));
    fs::create_directories(dir);
    std::ofstream out(dir / "comparison.csv", std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir / "comparison.csv").string());
    out << "metric,conventional,agent,change\n" << std::fixed << std::setprecision(4);
    for (Eigen::Index j = 0; j < c.bill_reduction.size(); ++j)
        out << "bill_" << j + 1 << ',' << c.baseline.bills[j] << ',' << c.agent.bills[j] << ','
            << 100.0 * c.bill_reduction[j] << '\n';
    out << "grid_profit," << c.baseline.grid_profit << ',' << c.agent.grid_profit << ',' << c.grid_profit_delta << '\n';
    out << "reserve_kwh," << c.baseline.reserve_energy << ',' << c.agent.reserve_energy << ',' << c.reserve_delta
        << '\n';
    std::cout << "wrote " << (dir / "comparison.csv").string() << "\n";
    return 0;
}

int cmd_sweep(const Options& o) {
    const auto cfg = load(o);
    const auto caps = parse_number_list(o.capacities);
    const auto dir = out_dir(o, cfg, cfg.output_dir / "sweep");
    const auto rows = battery_sweep(cfg, caps, dir, o.jobs);
    for (const auto& r : rows)
        std::printf("capacity %.1f kWh  mean bill %.4f  grid profit %.4f\n", r.capacity_kwh, r.mean_bill, r.grid_profit);
    write_sweep_csv(dir / "sweep.csv", rows);
    std::cout << "wrote " << (dir / "sweep.csv").string() << "\n";
    return 0;
}

int cmd_gradcheck(const Options& o) {
    const auto s = grad_check_random_nets(o.nets, o.grad_seed);
    std::printf("max relative error %.3e over %d networks (tolerance %.0e)\n", s.max_error, o.nets, kGradTolerance);
    return s.max_error < kGradTolerance ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-agent demand response for a prosumer microgrid"};
    app.require_subcommand(1);
    Options o;

    auto with_config = [&](CLI::App* sub) {
        sub->add_option("-c,--config", o.config, "configuration file")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "override the master seed");
        sub->add_option("--episodes", o.episodes, "override the training episode count")->check(CLI::NonNegativeNumber);
        sub->add_option("-o,--out", o.out, "output directory (defaults to output_dir from the config)");
    };

    auto* train_cmd = app.add_subcommand("train", "train all agents and write metrics.csv plus checkpoints");
    with_config(train_cmd);
    auto* eval_cmd = app.add_subcommand("eval", "evaluate trained agents greedily");
    with_config(eval_cmd);
    eval_cmd->add_option("--ckpt", o.ckpt, "checkpoint directory (defaults to output_dir)");
    auto* base_cmd = app.add_subcommand("baseline", "evaluate the conventional scenario");
    with_config(base_cmd);
    auto* cmp_cmd = app.add_subcommand("compare", "trained agents versus the conventional scenario");
    with_config(cmp_cmd);
    cmp_cmd->add_option("--ckpt", o.ckpt, "checkpoint directory (defaults to output_dir)");
    auto* sweep_cmd = app.add_subcommand("sweep", "train and evaluate once per battery capacity");
    with_config(sweep_cmd);
    sweep_cmd->add_option("--capacities", o.capacities, "ascending kWh list, comma separated")->capture_default_str();
    sweep_cmd->add_option("-j,--jobs", o.jobs, "parallel training runs (0 = hardware threads)");
    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of backpropagation");
    grad_cmd->add_option("--nets", o.nets, "number of random networks")->capture_default_str()->check(CLI::PositiveNumber);
    grad_cmd->add_option("--seed", o.grad_seed, "seed for the random networks")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) return cmd_train(o);
        if (eval_cmd->parsed()) return cmd_eval(o);
        if (base_cmd->parsed()) return cmd_baseline(o);
        if (cmp_cmd->parsed()) return cmd_compare(o);
        if (sweep_cmd->parsed()) return cmd_sweep(o);
        if (grad_cmd->parsed()) return cmd_gradcheck(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
