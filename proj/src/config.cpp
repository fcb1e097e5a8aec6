#include "mgrl/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include "mgrl/errors.hpp"

namespace mgrl {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct Entry {
    std::string value;
    int line = 0;
    bool used = false;
};

class KeyValues {
public:
    KeyValues(const std::string& text) {
        std::istringstream in(text);
        std::string raw;
        int line = 0;
        while (std::getline(in, raw)) {
            ++line;
            const auto hash = raw.find('#');
            const auto content = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
            if (content.empty()) continue;
            const auto eq = content.find('=');
            if (eq == std::string::npos) throw ConfigError(line, "expected 'key = value'");
            const auto key = trim(content.substr(0, eq));
            const auto value = trim(content.substr(eq + 1));
            if (key.empty()) throw ConfigError(line, "empty key");
            if (value.empty()) throw ConfigError(line, "empty value for '" + key + "'");
            if (entries_.contains(key))
                throw ConfigError(line, "duplicate key '" + key + "' (first set on line " +
                                            std::to_string(entries_[key].line) + ")");
            entries_[key] = {value, line, false};
        }
    }

    bool has(const std::string& key) const { return entries_.contains(key); }
    int line(const std::string& key) const { return has(key) ? entries_.at(key).line : 0; }

    const Entry* find(const std::string& key) {
        auto it = entries_.find(key);
        if (it == entries_.end()) return nullptr;
        it->second.used = true;
        return &it->second;
    }

    double number(const std::string& key, double fallback) {
        const auto* e = find(key);
        return e ? to_number(*e, key) : fallback;
    }

    std::uint64_t unsigned_int(const std::string& key, std::uint64_t fallback) {
        const auto* e = find(key);
        if (!e) return fallback;
        std::uint64_t v = 0;
        const auto* end = e->value.data() + e->value.size();
        auto [ptr, ec] = std::from_chars(e->value.data(), end, v);
        if (ec != std::errc{} || ptr != end)
            throw ConfigError(e->line, "'" + key + "' must be a non-negative integer, got '" + e->value + "'");
        return v;
    }

    int integer(const std::string& key, int fallback) {
        const auto* e = find(key);
        if (!e) return fallback;
        int v = 0;
        const auto* end = e->value.data() + e->value.size();
        auto [ptr, ec] = std::from_chars(e->value.data(), end, v);
        if (ec != std::errc{} || ptr != end)
            throw ConfigError(e->line, "'" + key + "' must be an integer, got '" + e->value + "'");
        return v;
    }

    bool boolean(const std::string& key, bool fallback) {
        const auto* e = find(key);
        if (!e) return fallback;
        if (e->value == "true" || e->value == "1" || e->value == "yes") return true;
        if (e->value == "false" || e->value == "0" || e->value == "no") return false;
        throw ConfigError(e->line, "'" + key + "' must be true or false");
    }

    std::vector<double> list(const std::string& key) {
        const auto* e = find(key);
        if (!e) return {};
        try {
            return parse_number_list(e->value);
        } catch (const std::exception& ex) {
            throw ConfigError(e->line, "'" + key + "': " + ex.what());
        }
    }

    std::string text(const std::string& key, const std::string& fallback) {
        const auto* e = find(key);
        return e ? e->value : fallback;
    }

    // Indices N present for keys of the form `prefix.N.field`.
    std::vector<int> indices(const std::string& prefix) const {
        std::vector<int> out;
        const std::regex re("^" + prefix + R"(\.([0-9]+)\.[a-z_]+$)");
        for (const auto& [key, e] : entries_) {
            std::smatch m;
            if (std::regex_match(key, m, re)) {
                const int idx = std::stoi(m[1]);
                if (std::find(out.begin(), out.end(), idx) == out.end()) out.push_back(idx);
            }
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    void reject_unused() const {
        for (const auto& [key, e] : entries_)
            if (!e.used) throw ConfigError(e.line, "unknown key '" + key + "'");
    }

private:
    static double to_number(const Entry& e, const std::string& key) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(e.value, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != e.value.size() || !std::isfinite(v))
            throw ConfigError(e.line, "'" + key + "' must be a number, got '" + e.value + "'");
        return v;
    }

    std::map<std::string, Entry> entries_;
};

template <typename Fn>
void checked(int line, const std::string& what, Fn&& fn) {
    try {
        fn();
    } catch (const ContractViolation& e) {
        throw ConfigError(line, what + ": " + e.what());
    }
}

} // namespace

std::vector<double> parse_number_list(const std::string& text) {
    std::vector<double> out;
    std::istringstream in(text);
    std::string cell;
    while (std::getline(in, cell, ',')) {
        cell = trim(cell);
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(cell, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (cell.empty() || used != cell.size() || !std::isfinite(v))
            throw std::invalid_argument("not a number: '" + cell + "'");
        out.push_back(v);
    }
    if (out.empty()) throw std::invalid_argument("empty list");
    return out;
}

void RunConfig::validate() const {
    time_grid.validate();
    if (prosumers.empty()) throw ContractViolation("at least one prosumer required");
    if (generators.empty()) throw ContractViolation("at least one generator required");
    for (const auto& p : prosumers) p.validate();
    for (const auto& g : generators) g.validate();
    market.validate(time_grid);
    agent.validate();
    if (!profile_csv && synthetic.prosumers.size() != prosumers.size())
        throw ContractViolation("synthetic profile parameters missing for some prosumers");
    if (episodes < 0) throw ContractViolation("episodes must be >= 0");
    if (checkpoint_interval < 0) throw ContractViolation("checkpoint_interval must be >= 0");
    if (eval_episodes < 1) throw ContractViolation("eval_episodes must be >= 1");
}

RunConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(0, "cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config_text(ss.str(), path.parent_path());
    } catch (const ConfigError& e) {
        throw ConfigError(0, path.string() + ": " + e.what());
    }
}

RunConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir) {
    KeyValues kv(text);
    RunConfig c;

    if (!kv.has("seed")) throw ConfigError(0, "missing required key 'seed'");
    c.seed = kv.unsigned_int("seed", 0);
    c.episodes = kv.integer("episodes", c.episodes);
    if (c.episodes < 0) throw ConfigError(kv.line("episodes"), "'episodes' must be >= 0");
    c.checkpoint_interval = kv.integer("checkpoint_interval", c.checkpoint_interval);
    if (c.checkpoint_interval < 0) throw ConfigError(kv.line("checkpoint_interval"), "'checkpoint_interval' must be >= 0");
    c.eval_episodes = kv.integer("eval_episodes", c.eval_episodes);
    if (c.eval_episodes < 1) throw ConfigError(kv.line("eval_episodes"), "'eval_episodes' must be >= 1");
    c.output_dir = kv.text("output_dir", c.output_dir.string());

    c.time_grid.slots_per_episode = kv.integer("slots", static_cast<int>(c.time_grid.slots_per_episode));
    c.time_grid.slot_hours = kv.number("slot_hours", c.time_grid.slot_hours);
    checked(kv.line("slots"), "time grid", [&] { c.time_grid.validate(); });

    // Prosumers
    const auto prosumer_ids = kv.indices("prosumer");
    if (prosumer_ids.empty()) throw ConfigError(0, "no prosumer.N.* keys");
    for (std::size_t i = 0; i < prosumer_ids.size(); ++i) {
        if (prosumer_ids[i] != static_cast<int>(i + 1))
            throw ConfigError(0, "prosumer indices must run 1..N without gaps");
        const std::string p = "prosumer." + std::to_string(i + 1) + ".";
        ProsumerSpec s;
        s.pv_peak = kv.number(p + "pv_peak", s.pv_peak);
        s.ess_capacity = kv.number(p + "ess_capacity", s.ess_capacity);
        s.p_batt_max = kv.number(p + "p_batt_max", s.p_batt_max);
        s.p_inj_max = kv.number(p + "p_inj_max", s.pv_peak);
        s.soc_min = kv.number(p + "soc_min", s.soc_min);
        s.soc_max = kv.number(p + "soc_max", s.soc_max);
        s.soc_init = kv.number(p + "soc_init", s.soc_init);
        const int line = std::max({kv.line(p + "soc_min"), kv.line(p + "soc_max"), kv.line(p + "soc_init"),
                                   kv.line(p + "pv_peak"), kv.line(p + "ess_capacity")});
        checked(line, "prosumer " + std::to_string(i + 1), [&] { s.validate(); });
        c.prosumers.push_back(s);

        SyntheticProsumer sp;
        sp.load_base = kv.number(p + "load_base", sp.load_base);
        sp.load_evening_peak = kv.number(p + "evening_peak", sp.load_evening_peak);
        sp.sunrise_slot = kv.integer(p + "sunrise", sp.sunrise_slot);
        sp.sunset_slot = kv.integer(p + "sunset", sp.sunset_slot);
        c.synthetic.prosumers.push_back(sp);
    }
    c.synthetic.consumer_base = kv.number("consumer.load_base", c.synthetic.consumer_base);
    c.synthetic.consumer_evening_peak = kv.number("consumer.evening_peak", c.synthetic.consumer_evening_peak);

    // Generators
    const auto gen_ids = kv.indices("generator");
    if (gen_ids.empty()) throw ConfigError(0, "no generator.N.* keys");
    for (std::size_t i = 0; i < gen_ids.size(); ++i) {
        if (gen_ids[i] != static_cast<int>(i + 1)) throw ConfigError(0, "generator indices must run 1..N without gaps");
        const std::string g = "generator." + std::to_string(i + 1) + ".";
        GeneratorSpec s;
        const auto role_line = kv.line(g + "role");
        const auto role = kv.text(g + "role", "baseline");
        if (role == "baseline")
            s.role = GeneratorRole::Baseline;
        else if (role == "reserve")
            s.role = GeneratorRole::Reserve;
        else
            throw ConfigError(role_line, "'" + g + "role' must be baseline or reserve");
        s.p_min = kv.number(g + "p_min", s.p_min);
        s.p_max = kv.number(g + "p_max", s.p_max);
        s.marginal_cost = kv.number(g + "marginal_cost", s.marginal_cost);
        checked(std::max(kv.line(g + "p_max"), kv.line(g + "marginal_cost")), "generator " + std::to_string(i + 1),
                [&] { s.validate(); });
        c.generators.push_back(s);
    }

    // Market
    if (!kv.has("sell_price")) throw ConfigError(0, "missing required key 'sell_price'");
    const auto sell_line = kv.line("sell_price");
    const auto sell = kv.list("sell_price");
    c.market.sell_price = Eigen::Map<const Eigen::VectorXd>(sell.data(), static_cast<Eigen::Index>(sell.size()));
    if (kv.has("buy_price_ladder")) c.market.buy_price_ladder = kv.list("buy_price_ladder");
    else c.market.buy_price_ladder = {0.02, 0.04, 0.06, 0.08, 0.10, 0.12};
    c.market.enforce_buy_below_sell = kv.boolean("enforce_buy_below_sell", true);
    checked(std::max(sell_line, kv.line("buy_price_ladder")), "market", [&] { c.market.validate(c.time_grid); });

    if (const auto* e = kv.find("profile_csv")) {
        std::filesystem::path p = e->value;
        c.profile_csv = p.is_absolute() ? p : base_dir / p;
    }

    // Agents
    auto& a = c.agent;
    a.gamma = kv.number("agent.gamma", a.gamma);
    a.learning_rate = kv.number("agent.learning_rate", a.learning_rate);
    a.epsilon_start = kv.number("agent.epsilon_start", a.epsilon_start);
    a.epsilon_end = kv.number("agent.epsilon_end", a.epsilon_end);
    const double decay_fraction = kv.number("agent.epsilon_decay_fraction", 0.8);
    if (!(decay_fraction >= 0.0 && decay_fraction <= 1.0))
        throw ConfigError(kv.line("agent.epsilon_decay_fraction"), "'agent.epsilon_decay_fraction' must lie in [0, 1]");
    a.epsilon_decay_episodes = kv.integer("agent.epsilon_decay_episodes",
                                          static_cast<int>(std::lround(decay_fraction * c.episodes)));
    a.replay_capacity = kv.unsigned_int("agent.replay_capacity", a.replay_capacity);
    a.batch_size = kv.unsigned_int("agent.batch_size", a.batch_size);
    a.target_sync_interval = kv.unsigned_int("agent.target_sync_interval", a.target_sync_interval);
    a.huber_delta = kv.number("agent.huber_delta", a.huber_delta);
    a.time_features = kv.boolean("agent.time_features", a.time_features);
    if (kv.has("agent.hidden")) {
        const auto line = kv.line("agent.hidden");
        a.hidden.clear();
        for (double h : kv.list("agent.hidden")) {
            if (h < 1 || h != std::floor(h)) throw ConfigError(line, "'agent.hidden' needs positive integers");
            a.hidden.push_back(static_cast<Eigen::Index>(h));
        }
    }
    checked(kv.line("agent.gamma"), "agent", [&] { a.validate(); });

    kv.reject_unused();
    checked(0, "config", [&] { c.validate(); });
    return c;
}

} // namespace mgrl
