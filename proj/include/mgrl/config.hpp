#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mgrl/agents.hpp"
#include "mgrl/microgrid.hpp"
#include "mgrl/profiles.hpp"

namespace mgrl {

struct RunConfig {
    TimeGrid time_grid;
    std::vector<ProsumerSpec> prosumers;
    std::vector<GeneratorSpec> generators;
    MarketConfig market;

    // Profiles come from the CSV when set, otherwise from the synthetic generators with per-episode jitter.
    std::optional<std::filesystem::path> profile_csv;
    SyntheticProfileParams synthetic;

    AgentHyperparams agent;
    int episodes = 5000;
    int checkpoint_interval = 500;
    int eval_episodes = 30;
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = "runs/default";

    void validate() const;
};

// Plain-text `key = value` file, `#` comments. Every key is validated and unknown keys are rejected.
// See docs/config.md for the key reference.
RunConfig parse_config(const std::filesystem::path& path);
RunConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir = {});

// Comma-separated numbers, e.g. "2,6,10".
std::vector<double> parse_number_list(const std::string& text);

} // namespace mgrl
