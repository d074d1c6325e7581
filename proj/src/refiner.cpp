#include "illmtsc/refiner.hpp"

#include <cmath>
#include <cstdlib>
#include <utility>

#include "httplib.h"
#include "json.hpp"

#include "illmtsc/hash.hpp"
#include "illmtsc/sim.hpp"

namespace illmtsc {

std::string backend_error_name(BackendErrorKind kind) {
    switch (kind) {
        case BackendErrorKind::Timeout: return "timeout";
        case BackendErrorKind::HttpStatus: return "http_status";
        case BackendErrorKind::MissingApiKey: return "missing_api_key";
        case BackendErrorKind::MalformedBody: return "malformed_body";
        case BackendErrorKind::Connection: return "connection";
    }
    return "connection";
}

BackendResult BackendResult::success(std::string completion) {
    BackendResult r;
    r.ok = true;
    r.text = std::move(completion);
    return r;
}

BackendResult BackendResult::failure(BackendErrorKind kind, std::string message) {
    BackendResult r;
    r.ok = false;
    r.error = kind;
    r.error_message = std::move(message);
    return r;
}

void RefinerConfig::validate() const {
    if (max_attempts < 1) throw ConfigError("RefinerConfig.max_attempts must be >= 1");
}

RefinementTrace refine(LlmBackend& backend, const DegradedObservation& deg_obs, PhaseId rl_action,
                       const std::array<bool, kNumMovements>& emergency_flags,
                       const RefinerConfig& cfg, long long slot) {
    cfg.validate();
    const PromptBundle bundle = encode_scenario(deg_obs, rl_action, emergency_flags, cfg.prompt_level);
    const ScenarioView view = make_view(deg_obs, rl_action, emergency_flags);
    const std::uint64_t hash = fnv1a64(bundle.rendered);

    RefinementTrace trace;
    trace.slot = slot;
    trace.rl_action = rl_action;
    trace.executed_action = rl_action;
    trace.fallback_used = true;

    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        AttemptRecord rec;
        rec.prompt_hash = hash;
        const BackendResult result = backend.complete(bundle, view);
        if (!result.ok) {
            rec.transport_error = true;
            rec.transport_kind = result.error;
            rec.error_message = result.error_message;
            trace.attempts.push_back(std::move(rec));
            continue;
        }
        rec.raw_response = result.text;
        const ParseOutcome outcome = parse_response(result.text);
        if (!outcome.ok) {
            rec.parse_error = outcome.error;
            trace.attempts.push_back(std::move(rec));
            continue;
        }
        rec.parsed = true;
        trace.attempts.push_back(std::move(rec));
        trace.executed_action = outcome.value.decision;
        trace.fallback_used = false;
        break;
    }

    trace.overridden = trace.executed_action != rl_action;
    return trace;
}

LlmDecision scripted_oracle_decision(const ScenarioView& view) {
    LlmDecision d;

    MovementId emv_movement = -1;
    PhaseId emv_phase = -1;
    for (MovementId m = 0; m < kNumMovements; ++m) {
        if (!view.movements[static_cast<std::size_t>(m)].emergency) continue;
        const PhaseId p = phase_of_movement(m);
        if (emv_phase == -1 || p < emv_phase) {
            emv_phase = p;
            emv_movement = m;
        }
    }
    if (emv_phase != -1) {
        d.decision = emv_phase;
        d.analysis = "Movement " + movement_name(emv_movement) + " reports an emergency vehicle.";
        d.explanation = "Emergency traffic outranks queue service, so run Phase " +
                        std::to_string(emv_phase) + ".";
        return d;
    }

    PhaseId best_phase = -1;
    long best_queue = -1;
    for (PhaseId p = 0; p < kNumPhases; ++p) {
        bool reliable = true;
        long queue = 0;
        for (MovementId m : kPhaseMovements[static_cast<std::size_t>(p)]) {
            const MovementView& mv = view.movements[static_cast<std::size_t>(m)];
            reliable = reliable && !mv.any_lost();
            queue += mv.queue;
        }
        if (reliable && queue > best_queue) {
            best_queue = queue;
            best_phase = p;
        }
    }

    bool rl_covers_lost = false;
    long rl_reliable_queue = 0;
    for (MovementId m : kPhaseMovements[static_cast<std::size_t>(view.rl_action)]) {
        const MovementView& mv = view.movements[static_cast<std::size_t>(m)];
        rl_covers_lost = rl_covers_lost || mv.any_lost();
        if (mv.queue_reliable()) rl_reliable_queue += mv.queue;
    }

    // Doubling keeps the half-queue comparison exact for odd totals.
    if (best_phase != -1 && (rl_covers_lost || 2 * rl_reliable_queue < best_queue)) {
        d.decision = best_phase;
        d.analysis = rl_covers_lost
                         ? "The proposed phase relies on movements whose detector packets were lost."
                         : "The proposed phase serves under half the queue of the busiest reliably "
                           "reported phase.";
        d.explanation = "Phase " + std::to_string(best_phase) +
                        " carries the largest reliably reported queue.";
        return d;
    }

    d.decision = view.rl_action;
    d.analysis = "No emergency is present and the proposal rests on intact, competitive data.";
    d.explanation = "Phase " + std::to_string(view.rl_action) + " stands as proposed.";
    return d;
}

BackendResult ScriptedOracleBackend::complete(const PromptBundle& prompt, const ScenarioView& view) {
    (void)prompt;
    return BackendResult::success(render_decision(scripted_oracle_decision(view)));
}

void HttpBackendConfig::validate() const {
    if (!(timeout_s > 0.0)) throw ConfigError("HttpBackendConfig.timeout_s must be > 0");
    if (endpoint.find("://") == std::string::npos)
        throw ConfigError("HttpBackendConfig.endpoint must be an absolute http(s) URL");
}

HttpBackend::HttpBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (const char* key = std::getenv(cfg_.api_key_env.c_str())) api_key_ = std::string(key);
}

std::string user_message(const PromptBundle& prompt) {
    std::string user;
    const auto append = [&user](const std::string& part) {
        if (!user.empty()) user += "\n";
        user += part;
    };
    if (prompt.hints) append(*prompt.hints);
    append(prompt.scenario);
    if (prompt.logic) append(*prompt.logic);
    append(prompt.format);
    return user;
}

namespace {

BackendErrorKind classify_transport(httplib::Error err) {
    switch (err) {
        case httplib::Error::ConnectionTimeout:
        case httplib::Error::Read:
        case httplib::Error::Write:
            return BackendErrorKind::Timeout;
        default:
            return BackendErrorKind::Connection;
    }
}

}  // namespace

BackendResult HttpBackend::complete(const PromptBundle& prompt, const ScenarioView& view) {
    (void)view;
    if (!api_key_)
        return BackendResult::failure(
            BackendErrorKind::MissingApiKey,
            "environment variable " + cfg_.api_key_env + " is not set");

    const std::size_t scheme_end = cfg_.endpoint.find("://");
    const std::size_t path_start = cfg_.endpoint.find('/', scheme_end + 3);
    const std::string base =
        path_start == std::string::npos ? cfg_.endpoint : cfg_.endpoint.substr(0, path_start);
    const std::string path =
        path_start == std::string::npos ? "/" : cfg_.endpoint.substr(path_start);

    // Without TLS support compiled in, an https base makes the client
    // constructor throw; surface that as an error value like every other
    // transport failure.
    std::optional<httplib::Client> client;
    try {
        client.emplace(base);
    } catch (const std::exception& e) {
        return BackendResult::failure(BackendErrorKind::Connection, e.what());
    }
    if (!client->is_valid())
        return BackendResult::failure(BackendErrorKind::Connection,
                                      "endpoint is not usable: " + cfg_.endpoint);

    const auto sec = static_cast<time_t>(cfg_.timeout_s);
    const auto usec = static_cast<time_t>(std::llround((cfg_.timeout_s - static_cast<double>(sec)) * 1e6));
    client->set_connection_timeout(sec, usec);
    client->set_read_timeout(sec, usec);
    client->set_write_timeout(sec, usec);
    client->set_default_headers({{"Authorization", "Bearer " + *api_key_}});

    const nlohmann::json body = {
        {"model", cfg_.model},
        {"temperature", cfg_.temperature},
        {"messages",
         {{{"role", "system"}, {"content", prompt.role}},
          {{"role", "user"}, {"content", user_message(prompt)}}}},
    };

    httplib::Result result = client->Post(path, body.dump(), "application/json");
    if (!result)
        return BackendResult::failure(classify_transport(result.error()),
                                      httplib::to_string(result.error()));
    if (result->status < 200 || result->status >= 300)
        return BackendResult::failure(BackendErrorKind::HttpStatus,
                                      "http status " + std::to_string(result->status));

    const nlohmann::json reply = nlohmann::json::parse(result->body, nullptr, false);
    if (reply.is_discarded())
        return BackendResult::failure(BackendErrorKind::MalformedBody,
                                      "response body is not JSON");
    if (!reply.contains("choices") || !reply["choices"].is_array() || reply["choices"].empty())
        return BackendResult::failure(BackendErrorKind::MalformedBody,
                                      "response body lacks choices[0].message.content");
    const nlohmann::json& first = reply["choices"][0];
    if (!first.contains("message") || !first["message"].contains("content") ||
        !first["message"]["content"].is_string())
        return BackendResult::failure(BackendErrorKind::MalformedBody,
                                      "response body lacks choices[0].message.content");
    return BackendResult::success(first["message"]["content"].get<std::string>());
}

}  // namespace illmtsc
