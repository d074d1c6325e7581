#include "illmtsc/prompt.hpp"

#include <cmath>
#include <cstdio>

#include "json.hpp"

namespace illmtsc {

PromptLevel prompt_level_from_int(int level) {
    switch (level) {
        case 1: return PromptLevel::L1;
        case 2: return PromptLevel::L2;
        case 3: return PromptLevel::L3;
        default: throw std::invalid_argument("prompt level must be 1, 2 or 3");
    }
}

ScenarioView make_view(const DegradedObservation& deg_obs, PhaseId rl_action,
                       const std::array<bool, kNumMovements>& emergency_flags) {
    if (!valid_phase(rl_action)) throw std::invalid_argument("make_view: rl_action out of range");
    ScenarioView view;
    view.rl_action = rl_action;
    for (int m = 0; m < kNumMovements; ++m) {
        const auto mi = static_cast<std::size_t>(m);
        MovementView& mv = view.movements[mi];
        mv.speed_lost = deg_obs.loss_mask[mi][0];
        mv.occupancy_lost = deg_obs.loss_mask[mi][1];
        mv.queue_lost = deg_obs.loss_mask[mi][3];
        mv.speed = deg_obs.sv[mi][0];
        mv.occupancy = deg_obs.sv[mi][1];
        mv.queue = std::max(0L, std::lround(deg_obs.sv[mi][3]));
        mv.emergency = emergency_flags[mi];
    }
    return view;
}

namespace {

constexpr const char* kLostField = "-1 (data missing)";

void replace_all(std::string& text, const std::string& token, const std::string& value) {
    std::size_t pos = 0;
    while ((pos = text.find(token, pos)) != std::string::npos) {
        text.replace(pos, token.size(), value);
        pos += value.size();
    }
}

std::string fixed1(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    return buf;
}

std::string movement_line(const MovementView& mv, MovementId m) {
    std::string line = builtin_template("movement_line");
    replace_all(line, "{name}", movement_name(m));
    replace_all(line, "{occupancy}",
                mv.occupancy_lost ? kLostField : fixed1(100.0 * mv.occupancy) + "%");
    replace_all(line, "{queue}", mv.queue_lost ? kLostField : std::to_string(mv.queue));
    replace_all(line, "{speed}", mv.speed_lost ? kLostField : fixed1(mv.speed) + " m/s");
    replace_all(line, "{emergency}", mv.emergency ? ", EMERGENCY VEHICLE PRESENT" : "");
    return line;
}

}  // namespace

PromptBundle encode_scenario(const DegradedObservation& deg_obs, PhaseId rl_action,
                             const std::array<bool, kNumMovements>& emergency_flags,
                             PromptLevel level) {
    const ScenarioView view = make_view(deg_obs, rl_action, emergency_flags);

    PromptBundle bundle;
    bundle.role = builtin_template("role");
    bundle.format = builtin_template("format");

    std::string lines;
    for (int m = 0; m < kNumMovements; ++m) {
        lines += movement_line(view.movements[static_cast<std::size_t>(m)], m);
    }
    bundle.scenario = builtin_template("scenario");
    replace_all(bundle.scenario, "{movement_lines}", lines);
    replace_all(bundle.scenario, "{rl_action}", std::to_string(rl_action));

    if (level == PromptLevel::L2 || level == PromptLevel::L3) {
        bundle.logic = builtin_template("logic");
    }
    if (level == PromptLevel::L3) {
        bundle.hints = builtin_template("hints");
    }

    bundle.rendered = bundle.role;
    if (bundle.hints) bundle.rendered += "\n" + *bundle.hints;
    bundle.rendered += "\n" + bundle.scenario;
    if (bundle.logic) bundle.rendered += "\n" + *bundle.logic;
    bundle.rendered += "\n" + bundle.format;
    return bundle;
}

ParseOutcome ParseOutcome::success(LlmDecision d) {
    ParseOutcome out;
    out.ok = true;
    out.value = std::move(d);
    return out;
}

ParseOutcome ParseOutcome::failure(ParseErrorKind kind) {
    ParseOutcome out;
    out.ok = false;
    out.error = kind;
    return out;
}

namespace {

// Span of the balanced brace group opening at start, honoring JSON string
// and escape rules; nullopt when the group never closes.
std::optional<std::string> balanced_span(const std::string& text, std::size_t start) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            --depth;
            if (depth == 0) return text.substr(start, i - start + 1);
        }
    }
    return std::nullopt;
}

}  // namespace

ParseOutcome parse_response(const std::string& text) {
    for (std::size_t pos = text.find('{'); pos != std::string::npos;
         pos = text.find('{', pos + 1)) {
        const auto span = balanced_span(text, pos);
        if (!span) continue;
        const nlohmann::json parsed = nlohmann::json::parse(*span, nullptr, false);
        if (parsed.is_discarded()) continue;

        // first parseable object decides the outcome
        if (!parsed.is_object() || !parsed.contains("decision") ||
            !parsed["decision"].is_number_integer()) {
            return ParseOutcome::failure(ParseErrorKind::BadDecision);
        }
        const long long decision = parsed["decision"].get<long long>();
        if (decision < 0 || decision >= kNumPhases) {
            return ParseOutcome::failure(ParseErrorKind::OutOfRange);
        }
        LlmDecision d;
        d.decision = static_cast<PhaseId>(decision);
        if (parsed.contains("analysis") && parsed["analysis"].is_string()) {
            d.analysis = parsed["analysis"].get<std::string>();
        }
        if (parsed.contains("explanation") && parsed["explanation"].is_string()) {
            d.explanation = parsed["explanation"].get<std::string>();
        }
        return ParseOutcome::success(std::move(d));
    }
    return ParseOutcome::failure(ParseErrorKind::NoJson);
}

std::string render_decision(const LlmDecision& d) {
    return nlohmann::json{{"analysis", d.analysis},
                          {"decision", d.decision},
                          {"explanation", d.explanation}}
        .dump();
}

}  // namespace illmtsc
