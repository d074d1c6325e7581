#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "illmtsc/channel.hpp"
#include "illmtsc/prompt.hpp"

namespace illmtsc {

enum class BackendErrorKind { Timeout, HttpStatus, MissingApiKey, MalformedBody, Connection };

// Stable lower-snake names for trace files.
std::string backend_error_name(BackendErrorKind kind);

struct BackendResult {
    bool ok = false;
    std::string text;  // completion text when ok
    BackendErrorKind error = BackendErrorKind::Connection;  // set when not ok
    std::string error_message;

    static BackendResult success(std::string completion);
    static BackendResult failure(BackendErrorKind kind, std::string message);
};

// A completion source. The view carries the same facts as the prompt; text
// backends ignore it, the scripted reviewer reads it instead of the prose.
class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual BackendResult complete(const PromptBundle& prompt, const ScenarioView& view) = 0;
};

enum class BackendKind { Scripted, Http };

struct RefinerConfig {
    int max_attempts = 3;
    PromptLevel prompt_level = PromptLevel::L3;
    BackendKind backend = BackendKind::Scripted;

    void validate() const;
};

struct AttemptRecord {
    std::uint64_t prompt_hash = 0;
    bool transport_error = false;
    BackendErrorKind transport_kind = BackendErrorKind::Connection;  // set when transport_error
    std::string error_message;                                       // set when transport_error
    std::string raw_response;  // set when the backend replied
    bool parsed = false;
    ParseErrorKind parse_error = ParseErrorKind::NoJson;  // set when a reply failed to parse
};

struct RefinementTrace {
    long long slot = 0;
    PhaseId rl_action = 0;
    std::vector<AttemptRecord> attempts;
    PhaseId executed_action = 0;
    bool overridden = false;     // executed_action != rl_action
    bool fallback_used = false;  // no attempt parsed; the proposal ran unreviewed
};

// One review pass: encode the scenario once, query up to max_attempts times
// with that identical prompt, execute the first well-formed decision, and fall
// back to the proposal when none arrives. Transport errors consume an attempt
// and never escape. The executed action is always either a parsed decision or
// exactly rl_action.
RefinementTrace refine(LlmBackend& backend, const DegradedObservation& deg_obs, PhaseId rl_action,
                       const std::array<bool, kNumMovements>& emergency_flags,
                       const RefinerConfig& cfg, long long slot = 0);

// Deterministic reviewer standing in for a hosted model. Rules in order:
// emergencies force the lowest phase that serves one; a proposal that leans on
// lost detector packets or serves under half the busiest reliably reported
// queue yields to the reliable phase with the largest queue (lower index on
// ties); otherwise the proposal stands. A phase is reliable when both of its
// movements arrived with no field lost; with no reliable phase the proposal
// stands regardless.
LlmDecision scripted_oracle_decision(const ScenarioView& view);

class ScriptedOracleBackend : public LlmBackend {
public:
    BackendResult complete(const PromptBundle& prompt, const ScenarioView& view) override;
};

struct HttpBackendConfig {
    std::string endpoint = "https://api.openai.com/v1/chat/completions";
    std::string model = "gpt-4";
    double temperature = 0.0;
    double timeout_s = 30.0;
    std::string api_key_env = "ILLM_TSC_API_KEY";

    void validate() const;
};

// Chat-completions client. The api key is read from the named environment
// variable at construction; a missing key fails complete() before any network
// traffic. One request per complete() call; retries belong to refine().
class HttpBackend : public LlmBackend {
public:
    explicit HttpBackend(HttpBackendConfig cfg);

    BackendResult complete(const PromptBundle& prompt, const ScenarioView& view) override;

    const HttpBackendConfig& config() const { return cfg_; }

private:
    HttpBackendConfig cfg_;
    std::optional<std::string> api_key_;
};

// The parts after the role joined with one newline between them; the bundle's
// rendered text equals role + "\n" + this.
std::string user_message(const PromptBundle& prompt);

}  // namespace illmtsc
