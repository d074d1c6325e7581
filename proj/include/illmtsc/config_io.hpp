#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "illmtsc/harness.hpp"
#include "illmtsc/ppo.hpp"

namespace illmtsc {

struct TrainFileConfig {
    SimConfig sim;
    PpoConfig ppo;
};

struct CompareFileConfig {
    std::vector<ScenarioConfig> scenarios;
    std::vector<PolicyStackConfig> policies;
    std::vector<std::uint64_t> seeds;
};

// JSON documents with defaults for every omitted field. Unknown keys are
// rejected so a typo cannot silently fall back to a default.
TrainFileConfig parse_train_config(const std::string& text);
ScenarioConfig parse_scenario_config(const std::string& text);
PolicyStackConfig parse_policy_config(const std::string& text);
CompareFileConfig parse_compare_config(const std::string& text);

TrainFileConfig load_train_config(const std::string& path);
ScenarioConfig load_scenario_config(const std::string& path);
CompareFileConfig load_compare_config(const std::string& path);

}  // namespace illmtsc
