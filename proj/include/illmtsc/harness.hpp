#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "illmtsc/baselines.hpp"
#include "illmtsc/channel.hpp"
#include "illmtsc/ppo.hpp"
#include "illmtsc/refiner.hpp"
#include "illmtsc/trace.hpp"

namespace illmtsc {

enum class CommMode { Normal, Degraded };

struct ScenarioConfig {
    std::string name = "normal";
    SimConfig sim;
    CommMode comm = CommMode::Normal;
    ChannelConfig channel;  // consulted under degraded comms

    void validate() const;
};

enum class PolicyKind { FixedTime, Sotl, LongestQueue, Rl, Illm };

std::string policy_name(PolicyKind kind);
PolicyKind policy_kind_from_name(const std::string& name);

struct PolicyStackConfig {
    PolicyKind kind = PolicyKind::FixedTime;
    std::string label;  // report name; defaults to the kind's name
    FixedTimeConfig fixed_time;
    SotlConfig sotl;
    RefinerConfig refiner;        // reviewer settings for the illm stack
    HttpBackendConfig http;       // used when refiner.backend == BackendKind::Http
    std::string checkpoint_path;  // required for rl and illm
};

std::string display_name(const PolicyStackConfig& cfg);

// A stack ready to run: weights loaded, reviewer backend constructed. The
// backend pointer may be swapped for a test double; owned_backend keeps the
// default alive.
struct PolicyRuntime {
    PolicyStackConfig cfg;
    std::optional<NetworkWeights> weights;
    std::unique_ptr<LlmBackend> owned_backend;
    LlmBackend* backend = nullptr;
};

// Loads the checkpoint and constructs the configured backend. Configuration
// and checkpoint failures surface here, before any episode starts.
PolicyRuntime make_policy_runtime(const PolicyStackConfig& cfg);

// Greedy phase choice: argmax policy probability, lower index on ties.
PhaseId greedy_action(const NetworkWeights& weights,
                      const std::array<std::array<double, 5>, kNumMovements>& sv);

// One episode of the full loop: observe, degrade when configured, propose,
// review for the illm stack, advance. The channel draws from stream 3 of the
// episode seed so it never shares draws with the simulator.
EpisodeResult run_episode(const ScenarioConfig& scenario, PolicyRuntime& policy,
                          std::uint64_t seed);

// Vehicle-weighted aggregation of one (scenario, policy) cell over its seeds.
struct CellSummary {
    std::string scenario;
    std::string policy;
    std::uint64_t base_seed = 0;
    std::size_t episodes = 0;
    MetricStats all;
    MetricStats emergency;
    bool failed = false;
    std::string failure;
};

CellSummary summarize_cell(const std::string& scenario, const std::string& policy,
                           std::uint64_t base_seed, const std::vector<EpisodeResult>& episodes);

// Every scenario x policy cell over the shared seed list, scenario-major. A
// failing cell yields a failed row; the rest proceed.
std::vector<CellSummary> compare(const std::vector<ScenarioConfig>& scenarios,
                                 const std::vector<PolicyStackConfig>& policies,
                                 const std::vector<std::uint64_t>& seeds);

struct AblationRow {
    PromptLevel level = PromptLevel::L1;
    std::size_t episodes = 0;
    std::size_t n_vehicles = 0;
    std::optional<double> mean_wait_s;
    std::optional<double> wait_ratio;  // vs the level-1 row when present
    bool failed = false;
    std::string failure;
};

// Runs the illm stack once per prompt level over shared seeds. Ratios are
// normalized by level 1 when included, otherwise by the lowest level run.
std::vector<AblationRow> ablate_prompts(const std::vector<PromptLevel>& levels,
                                        const ScenarioConfig& scenario,
                                        const PolicyStackConfig& illm_policy,
                                        const std::vector<std::uint64_t>& seeds);

// scenario,policy,seed,n_vehicles,mean_travel_s,mean_wait_s,mean_speed_mps,
// emv_n,emv_travel_s,emv_wait_s,emv_speed_mps
std::string metrics_csv_header();
std::string metrics_csv_row(const EpisodeResult& episode);
std::string metrics_csv_row(const CellSummary& cell);

std::string ablation_csv_header();
std::string ablation_csv_row(const AblationRow& row);

// Staged review scenarios: "case1" endorses a sound proposal, "case2"
// overrides for an emergency vehicle, "case3" overrides away from movements
// whose packets were dropped. Fully deterministic; the reviewer is the
// scripted oracle and the proposals are pinned.
EpisodeResult run_case(const std::string& name);

}  // namespace illmtsc
