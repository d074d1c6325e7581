#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "illmtsc/channel.hpp"
#include "illmtsc/movement.hpp"

namespace illmtsc {

// Level 1 carries role + scenario + format; level 2 adds the decision-logic
// part; level 3 adds the traffic-rule hints.
enum class PromptLevel { L1 = 1, L2 = 2, L3 = 3 };

PromptLevel prompt_level_from_int(int level);

struct PromptBundle {
    std::string role;
    std::optional<std::string> hints;
    std::string scenario;
    std::optional<std::string> logic;
    std::string format;
    std::string rendered;  // included parts in order role, hints, scenario, logic, format
};

struct LlmDecision {
    PhaseId decision = 0;
    std::string analysis;
    std::string explanation;
};

// Per-movement summary the scenario text and the scripted oracle both read,
// so the two can never disagree about what the agent was shown.
struct MovementView {
    bool speed_lost = false;
    bool occupancy_lost = false;
    bool queue_lost = false;
    double speed = 0.0;      // m/s; -1 marks an empty movement
    double occupancy = 0.0;  // fraction of the lane
    long queue = 0;
    bool emergency = false;

    bool any_lost() const { return speed_lost || occupancy_lost || queue_lost; }
    bool queue_reliable() const { return !queue_lost; }
};

struct ScenarioView {
    std::array<MovementView, kNumMovements> movements;
    PhaseId rl_action = 0;
};

ScenarioView make_view(const DegradedObservation& deg_obs, PhaseId rl_action,
                       const std::array<bool, kNumMovements>& emergency_flags);

PromptBundle encode_scenario(const DegradedObservation& deg_obs, PhaseId rl_action,
                             const std::array<bool, kNumMovements>& emergency_flags,
                             PromptLevel level);

enum class ParseErrorKind { NoJson, BadDecision, OutOfRange };

struct ParseOutcome {
    bool ok = false;
    LlmDecision value;     // set when ok
    ParseErrorKind error = ParseErrorKind::NoJson;  // set when not ok

    static ParseOutcome success(LlmDecision d);
    static ParseOutcome failure(ParseErrorKind kind);
};

// Finds the first balanced brace span that parses as JSON (fenced code
// blocks included), then demands an integer "decision" in 0..3. Never
// throws, whatever the input bytes.
ParseOutcome parse_response(const std::string& text);

// The declared response shape; parse_response(render_decision(d)) == d.
std::string render_decision(const LlmDecision& d);

const std::string& builtin_template(const std::string& name);
int template_version();

}  // namespace illmtsc
