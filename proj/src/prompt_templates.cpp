#include "illmtsc/prompt.hpp"

#include <map>
#include <stdexcept>

namespace illmtsc {

// Byte-for-byte copies of the files under templates/; a test keeps the two
// in sync. The codec renders from these so prompts never depend on a
// runtime file lookup.
namespace {

constexpr const char* k_role = R"TPL(You are a traffic-signal-control assistant managing a four-way intersection. Exactly one of four signal phases is active at a time. You review the detector summary for each approach movement together with the phase proposed by a reinforcement-learning controller, and you answer with the phase to execute next.
)TPL";

constexpr const char* k_hints = R"TPL(Traffic rules to respect:
- Emergency vehicles take priority: when an emergency vehicle is waiting on or approaching a movement, serve the phase containing that movement at once.
- A value of -1 means the detector packet for that reading was lost; treat it as missing and lean on the movements that still report data.
- Prefer clearing long queues, but do not starve the other approaches.
)TPL";

constexpr const char* k_scenario = R"TPL(Phase table: Phase 0 = E0_l + E1_l, Phase 1 = E0_s + E1_s, Phase 2 = E2_s + E3_s, Phase 3 = E2_l + E3_l. Movement E<k>_l is the left-turn lane and E<k>_s the straight lane of entrance k.
Detector summary:
{movement_lines}The reinforcement-learning controller proposes Phase {rl_action}.
)TPL";

constexpr const char* k_movement_line = R"TPL(- {name}: occupancy {occupancy}, waiting vehicles {queue}, average speed {speed}{emergency}
)TPL";

constexpr const char* k_logic = R"TPL(Decision steps: first assess whether the proposed phase is reasonable for the situation above, then explain your assessment, and then recommend the phase to execute, which may be the proposed phase or a different one.
)TPL";

constexpr const char* k_format = R"TPL(Respond with a single JSON object and nothing else, shaped exactly as {"analysis": string, "decision": integer 0-3, "explanation": string}.
)TPL";

}  // namespace

const std::string& builtin_template(const std::string& name) {
    static const std::map<std::string, std::string> table = {
        {"role", k_role},         {"hints", k_hints},
        {"scenario", k_scenario}, {"movement_line", k_movement_line},
        {"logic", k_logic},       {"format", k_format},
    };
    auto it = table.find(name);
    if (it == table.end()) throw std::invalid_argument("unknown template " + name);
    return it->second;
}

int template_version() { return 1; }

}  // namespace illmtsc
