#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "illmtsc/hash.hpp"
#include "illmtsc/refiner.hpp"
#include "illmtsc/rng.hpp"

using namespace illmtsc;

namespace {

// A clean, fully delivered observation: modest queues everywhere, phase 0 lit.
DegradedObservation clean_observation() {
    DegradedObservation deg;
    for (int m = 0; m < kNumMovements; ++m) {
        deg.sv[m] = {4.0, 0.2, 22.5, 3.0, (m == 0 || m == 2) ? 1.0 : 0.0};
    }
    return deg;
}

void set_queue(DegradedObservation& deg, MovementId m, double queue) {
    deg.sv[m][3] = queue;
    deg.sv[m][2] = queue * 7.5;
}

void lose_movement(DegradedObservation& deg, MovementId m) {
    for (int c = 0; c < 4; ++c) {
        deg.sv[m][c] = 0.0;
        deg.loss_mask[m][c] = true;
    }
}

ScenarioView view_of(const DegradedObservation& deg, PhaseId rl_action,
                     const std::array<bool, kNumMovements>& emv = {}) {
    return make_view(deg, rl_action, emv);
}

struct CannedBackend : LlmBackend {
    std::vector<BackendResult> replies;
    std::size_t calls = 0;
    std::vector<std::string> seen_prompts;

    BackendResult complete(const PromptBundle& prompt, const ScenarioView&) override {
        seen_prompts.push_back(prompt.rendered);
        const std::size_t i = calls++;
        if (i < replies.size()) return replies[i];
        return BackendResult::failure(BackendErrorKind::Connection, "out of canned replies");
    }
};

}  // namespace

TEST_CASE("scripted oracle endorses a clean proposal") {
    const DegradedObservation deg = clean_observation();
    const LlmDecision d = scripted_oracle_decision(view_of(deg, 1));
    CHECK(d.decision == 1);
    CHECK(d.explanation == "Phase 1 stands as proposed.");
}

TEST_CASE("scripted oracle serves an emergency vehicle's phase") {
    DegradedObservation deg = clean_observation();
    std::array<bool, kNumMovements> emv{};
    emv[7] = true;  // E3_s, phase 2
    const LlmDecision d = scripted_oracle_decision(view_of(deg, 0, emv));
    CHECK(d.decision == 2);
    CHECK(d.analysis == "Movement E3_s reports an emergency vehicle.");
}

TEST_CASE("two emergencies resolve to the lower phase index") {
    const DegradedObservation deg = clean_observation();
    std::array<bool, kNumMovements> emv{};
    emv[4] = true;  // E2_l, phase 3
    emv[3] = true;  // E1_s, phase 1
    const LlmDecision d = scripted_oracle_decision(view_of(deg, 0, emv));
    CHECK(d.decision == 1);
    CHECK(d.analysis == "Movement E1_s reports an emergency vehicle.");
}

TEST_CASE("emergency rule precedes the lost-data rule") {
    DegradedObservation deg = clean_observation();
    lose_movement(deg, 0);
    std::array<bool, kNumMovements> emv{};
    emv[6] = true;  // E3_l, phase 3
    const LlmDecision d = scripted_oracle_decision(view_of(deg, 0, emv));
    CHECK(d.decision == 3);
}

TEST_CASE("a proposal leaning on lost packets yields to the busiest intact phase") {
    DegradedObservation deg = clean_observation();
    lose_movement(deg, 0);  // E0_l: phases 0 and 1 each cover one lost movement
    lose_movement(deg, 1);  // E0_s
    set_queue(deg, 7, 21.0);
    const LlmDecision d = scripted_oracle_decision(view_of(deg, 0));
    CHECK(d.decision == 2);
    CHECK(d.analysis == "The proposed phase relies on movements whose detector packets were lost.");
    CHECK(d.explanation == "Phase 2 carries the largest reliably reported queue.");
}

TEST_CASE("a single lost field on one movement is enough to divert") {
    DegradedObservation deg = clean_observation();
    deg.loss_mask[2][1] = true;  // E1_l occupancy only; phase 0 is no longer reliable
    deg.sv[2][1] = 0.0;
    set_queue(deg, 5, 9.0);
    const LlmDecision d = scripted_oracle_decision(view_of(deg, 0));
    CHECK(d.decision == 2);
}

TEST_CASE("a starved proposal yields to the dominant queue") {
    DegradedObservation deg = clean_observation();
    set_queue(deg, 0, 1.0);
    set_queue(deg, 2, 0.0);
    set_queue(deg, 5, 12.0);
    set_queue(deg, 7, 9.0);
    const LlmDecision d = scripted_oracle_decision(view_of(deg, 0));
    CHECK(d.decision == 2);
    CHECK(d.analysis ==
          "The proposed phase serves under half the queue of the busiest reliably reported phase.");
}

TEST_CASE("exactly half the dominant queue is tolerated") {
    DegradedObservation deg = clean_observation();
    set_queue(deg, 0, 5.0);
    set_queue(deg, 2, 5.0);
    set_queue(deg, 5, 12.0);
    set_queue(deg, 7, 8.0);  // phase 2 totals 20, proposal totals 10
    const LlmDecision d = scripted_oracle_decision(view_of(deg, 0));
    CHECK(d.decision == 0);
}

TEST_CASE("queue ties resolve to the lower phase index") {
    DegradedObservation deg = clean_observation();
    lose_movement(deg, 0);
    for (int m = 1; m < kNumMovements; ++m) set_queue(deg, m, 6.0);
    // Phases 1, 2, 3 are reliable and all total 12.
    const LlmDecision d = scripted_oracle_decision(view_of(deg, 0));
    CHECK(d.decision == 1);
}

TEST_CASE("with no reliable phase the proposal stands") {
    DegradedObservation deg = clean_observation();
    for (MovementId m : {0, 1, 5, 4}) lose_movement(deg, m);  // one per phase
    const LlmDecision d = scripted_oracle_decision(view_of(deg, 3));
    CHECK(d.decision == 3);
}

TEST_CASE("scripted replies are byte-identical across calls") {
    DegradedObservation deg = clean_observation();
    lose_movement(deg, 4);
    std::array<bool, kNumMovements> emv{};
    emv[1] = true;
    ScriptedOracleBackend backend;
    const PromptBundle bundle = encode_scenario(deg, 2, emv, PromptLevel::L3);
    const ScenarioView view = view_of(deg, 2, emv);
    const BackendResult a = backend.complete(bundle, view);
    const BackendResult b = backend.complete(bundle, view);
    REQUIRE(a.ok);
    CHECK(a.text == b.text);
    const ParseOutcome parsed = parse_response(a.text);
    REQUIRE(parsed.ok);
    CHECK(parsed.value.decision == 1);
}

TEST_CASE("refine executes the first well-formed decision and stops") {
    CannedBackend backend;
    backend.replies.push_back(BackendResult::success(R"({"decision":2,"analysis":"","explanation":""})"));
    RefinerConfig cfg;
    const DegradedObservation deg = clean_observation();
    const RefinementTrace trace = refine(backend, deg, 0, {}, cfg, 17);
    CHECK(trace.slot == 17);
    CHECK(trace.executed_action == 2);
    CHECK(trace.overridden);
    CHECK_FALSE(trace.fallback_used);
    REQUIRE(trace.attempts.size() == 1);
    CHECK(trace.attempts[0].parsed);
    CHECK(backend.calls == 1);
}

TEST_CASE("refine falls back to the proposal after max_attempts failures") {
    CannedBackend backend;
    for (int i = 0; i < 3; ++i)
        backend.replies.push_back(BackendResult::success("no json here at all"));
    RefinerConfig cfg;
    const DegradedObservation deg = clean_observation();
    const RefinementTrace trace = refine(backend, deg, 1, {}, cfg);
    CHECK(trace.executed_action == 1);
    CHECK(trace.fallback_used);
    CHECK_FALSE(trace.overridden);
    REQUIRE(trace.attempts.size() == 3);
    for (const AttemptRecord& rec : trace.attempts) {
        CHECK_FALSE(rec.parsed);
        CHECK(rec.parse_error == ParseErrorKind::NoJson);
        CHECK(rec.raw_response == "no json here at all");
    }
    CHECK(backend.calls == 3);
}

TEST_CASE("transport errors consume attempts and are recorded") {
    CannedBackend backend;
    backend.replies.push_back(BackendResult::failure(BackendErrorKind::Timeout, "read timed out"));
    backend.replies.push_back(BackendResult::success(R"({"decision":3})"));
    RefinerConfig cfg;
    const DegradedObservation deg = clean_observation();
    const RefinementTrace trace = refine(backend, deg, 0, {}, cfg);
    CHECK(trace.executed_action == 3);
    CHECK_FALSE(trace.fallback_used);
    REQUIRE(trace.attempts.size() == 2);
    CHECK(trace.attempts[0].transport_error);
    CHECK(trace.attempts[0].transport_kind == BackendErrorKind::Timeout);
    CHECK(trace.attempts[0].error_message == "read timed out");
    CHECK(trace.attempts[1].parsed);
}

TEST_CASE("an out-of-range decision counts as a failed attempt") {
    CannedBackend backend;
    backend.replies.push_back(BackendResult::success(R"({"decision":7})"));
    backend.replies.push_back(BackendResult::success(R"({"decision":0})"));
    RefinerConfig cfg;
    const DegradedObservation deg = clean_observation();
    const RefinementTrace trace = refine(backend, deg, 2, {}, cfg);
    CHECK(trace.executed_action == 0);
    CHECK(trace.overridden);
    REQUIRE(trace.attempts.size() == 2);
    CHECK(trace.attempts[0].parse_error == ParseErrorKind::OutOfRange);
}

TEST_CASE("every attempt re-sends the identical prompt") {
    CannedBackend backend;
    for (int i = 0; i < 5; ++i)
        backend.replies.push_back(BackendResult::failure(BackendErrorKind::Connection, "down"));
    RefinerConfig cfg;
    cfg.max_attempts = 5;
    DegradedObservation deg = clean_observation();
    lose_movement(deg, 3);
    const RefinementTrace trace = refine(backend, deg, 1, {}, cfg);
    REQUIRE(backend.seen_prompts.size() == 5);
    REQUIRE(trace.attempts.size() == 5);
    const std::uint64_t expected = fnv1a64(backend.seen_prompts[0]);
    for (const std::string& prompt : backend.seen_prompts) CHECK(prompt == backend.seen_prompts[0]);
    for (const AttemptRecord& rec : trace.attempts) CHECK(rec.prompt_hash == expected);
}

TEST_CASE("a backend echoing the proposal does not count as an override") {
    ScriptedOracleBackend backend;
    RefinerConfig cfg;
    const DegradedObservation deg = clean_observation();
    const RefinementTrace trace = refine(backend, deg, 1, {}, cfg);
    CHECK(trace.executed_action == 1);
    CHECK_FALSE(trace.overridden);
    CHECK_FALSE(trace.fallback_used);
}

TEST_CASE("refine rejects a non-positive attempt budget") {
    ScriptedOracleBackend backend;
    RefinerConfig cfg;
    cfg.max_attempts = 0;
    const DegradedObservation deg = clean_observation();
    CHECK_THROWS_WITH_AS(refine(backend, deg, 0, {}, cfg),
                         "RefinerConfig.max_attempts must be >= 1", ConfigError);
}

TEST_CASE("the executed action is always a parsed decision or the proposal") {
    struct RandomBackend : LlmBackend {
        Rng rng{123};
        BackendResult complete(const PromptBundle&, const ScenarioView&) override {
            const double roll = rng.uniform();
            if (roll < 0.25) return BackendResult::failure(BackendErrorKind::Connection, "down");
            if (roll < 0.5) return BackendResult::success("garbage with no braces");
            if (roll < 0.6) return BackendResult::success(R"({"decision":9})");
            const int k = rng.uniform_int(4);
            return BackendResult::success("{\"decision\":" + std::to_string(k) + "}");
        }
    };
    RandomBackend backend;
    RefinerConfig cfg;
    const DegradedObservation deg = clean_observation();
    for (int trial = 0; trial < 500; ++trial) {
        const PhaseId rl = trial % kNumPhases;
        const RefinementTrace trace = refine(backend, deg, rl, {}, cfg);
        CHECK(trace.attempts.size() <= static_cast<std::size_t>(cfg.max_attempts));
        CHECK(trace.executed_action >= 0);
        CHECK(trace.executed_action < kNumPhases);
        bool parsed_any = false;
        for (const AttemptRecord& rec : trace.attempts) parsed_any = parsed_any || rec.parsed;
        CHECK(trace.fallback_used == !parsed_any);
        if (trace.fallback_used) CHECK(trace.executed_action == rl);
        if (trace.overridden) CHECK(trace.executed_action != rl);
    }
}

namespace {

// In-process chat-completions stub. Each test installs a handler; the server
// listens on a loopback port picked by the OS.
class StubServer {
public:
    explicit StubServer(httplib::Server::Handler handler) {
        server_.Post("/v1/chat/completions", std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~StubServer() {
        server_.stop();
        thread_.join();
    }

    std::string endpoint() const {
        return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
    }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
};

HttpBackendConfig stub_config(const StubServer& stub) {
    HttpBackendConfig cfg;
    cfg.endpoint = stub.endpoint();
    cfg.model = "stub-model";
    cfg.timeout_s = 5.0;
    return cfg;
}

std::string chat_reply(const std::string& content) {
    nlohmann::json reply = {{"choices", {{{"message", {{"content", content}}}}}}};
    return reply.dump();
}

}  // namespace

TEST_CASE("http backend returns the completion text verbatim") {
    setenv("ILLM_TSC_API_KEY", "test-key-123", 1);
    nlohmann::json seen_body;
    std::string seen_auth;
    StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
        seen_body = nlohmann::json::parse(req.body, nullptr, false);
        seen_auth = req.get_header_value("Authorization");
        res.set_content(chat_reply("{\"decision\":3}"), "application/json");
    });
    HttpBackend backend(stub_config(stub));
    const DegradedObservation deg = clean_observation();
    const PromptBundle bundle = encode_scenario(deg, 1, {}, PromptLevel::L3);
    const BackendResult result = backend.complete(bundle, view_of(deg, 1));
    REQUIRE(result.ok);
    CHECK(result.text == "{\"decision\":3}");

    CHECK(seen_auth == "Bearer test-key-123");
    REQUIRE_FALSE(seen_body.is_discarded());
    CHECK(seen_body["model"] == "stub-model");
    CHECK(seen_body["temperature"] == 0.0);
    REQUIRE(seen_body["messages"].size() == 2);
    CHECK(seen_body["messages"][0]["role"] == "system");
    CHECK(seen_body["messages"][0]["content"] == bundle.role);
    CHECK(seen_body["messages"][1]["role"] == "user");
    CHECK(seen_body["messages"][1]["content"] == user_message(bundle));
    CHECK(bundle.rendered == bundle.role + "\n" + user_message(bundle));
}

TEST_CASE("http backend reports a non-2xx status distinctly") {
    setenv("ILLM_TSC_API_KEY", "test-key-123", 1);
    StubServer stub([](const httplib::Request&, httplib::Response& res) {
        res.status = 500;
        res.set_content("overloaded", "text/plain");
    });
    HttpBackend backend(stub_config(stub));
    const DegradedObservation deg = clean_observation();
    const BackendResult result =
        backend.complete(encode_scenario(deg, 0, {}, PromptLevel::L1), view_of(deg, 0));
    REQUIRE_FALSE(result.ok);
    CHECK(result.error == BackendErrorKind::HttpStatus);
    CHECK(result.error_message == "http status 500");
}

TEST_CASE("http backend reports malformed reply bodies distinctly") {
    setenv("ILLM_TSC_API_KEY", "test-key-123", 1);
    SUBCASE("not json") {
        StubServer stub([](const httplib::Request&, httplib::Response& res) {
            res.set_content("<html>oops</html>", "text/html");
        });
        HttpBackend backend(stub_config(stub));
        const DegradedObservation deg = clean_observation();
        const BackendResult result =
            backend.complete(encode_scenario(deg, 0, {}, PromptLevel::L1), view_of(deg, 0));
        REQUIRE_FALSE(result.ok);
        CHECK(result.error == BackendErrorKind::MalformedBody);
    }
    SUBCASE("json without the expected shape") {
        StubServer stub([](const httplib::Request&, httplib::Response& res) {
            res.set_content(R"({"choices":[{"message":{}}]})", "application/json");
        });
        HttpBackend backend(stub_config(stub));
        const DegradedObservation deg = clean_observation();
        const BackendResult result =
            backend.complete(encode_scenario(deg, 0, {}, PromptLevel::L1), view_of(deg, 0));
        REQUIRE_FALSE(result.ok);
        CHECK(result.error == BackendErrorKind::MalformedBody);
        CHECK(result.error_message == "response body lacks choices[0].message.content");
    }
}

TEST_CASE("a missing api key fails before any network traffic") {
    unsetenv("ILLM_TSC_API_KEY");
    std::atomic<int> hits{0};
    StubServer stub([&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.set_content(chat_reply("{\"decision\":0}"), "application/json");
    });
    HttpBackend backend(stub_config(stub));
    const DegradedObservation deg = clean_observation();
    const BackendResult result =
        backend.complete(encode_scenario(deg, 0, {}, PromptLevel::L1), view_of(deg, 0));
    REQUIRE_FALSE(result.ok);
    CHECK(result.error == BackendErrorKind::MissingApiKey);
    CHECK(result.error_message == "environment variable ILLM_TSC_API_KEY is not set");
    CHECK(hits.load() == 0);
}

TEST_CASE("a key exported after construction is not picked up") {
    unsetenv("ILLM_TSC_API_KEY");
    StubServer stub([](const httplib::Request&, httplib::Response& res) {
        res.set_content(chat_reply("{\"decision\":0}"), "application/json");
    });
    HttpBackend backend(stub_config(stub));
    setenv("ILLM_TSC_API_KEY", "late", 1);
    const DegradedObservation deg = clean_observation();
    const BackendResult result =
        backend.complete(encode_scenario(deg, 0, {}, PromptLevel::L1), view_of(deg, 0));
    CHECK_FALSE(result.ok);
    CHECK(result.error == BackendErrorKind::MissingApiKey);
}

TEST_CASE("a stalled reply times out") {
    setenv("ILLM_TSC_API_KEY", "test-key-123", 1);
    StubServer stub([](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(std::chrono::milliseconds(400));
        res.set_content(chat_reply("{\"decision\":0}"), "application/json");
    });
    HttpBackendConfig cfg = stub_config(stub);
    cfg.timeout_s = 0.05;
    HttpBackend backend(cfg);
    const DegradedObservation deg = clean_observation();
    const BackendResult result =
        backend.complete(encode_scenario(deg, 0, {}, PromptLevel::L1), view_of(deg, 0));
    REQUIRE_FALSE(result.ok);
    CHECK(result.error == BackendErrorKind::Timeout);
}

TEST_CASE("http backend config is validated") {
    HttpBackendConfig cfg;
    cfg.timeout_s = 0.0;
    CHECK_THROWS_WITH_AS(HttpBackend{cfg}, "HttpBackendConfig.timeout_s must be > 0", ConfigError);
    HttpBackendConfig bad_url;
    bad_url.endpoint = "localhost:8080/v1";
    CHECK_THROWS_WITH_AS(HttpBackend{bad_url},
                         "HttpBackendConfig.endpoint must be an absolute http(s) URL", ConfigError);
}

TEST_CASE("refine drives the http backend end to end") {
    setenv("ILLM_TSC_API_KEY", "test-key-123", 1);
    std::atomic<int> hits{0};
    StubServer stub([&](const httplib::Request&, httplib::Response& res) {
        const int n = ++hits;
        if (n == 1) {
            res.status = 503;
            return;
        }
        res.set_content(chat_reply("Sure! ```json\n{\"decision\":2}\n```"), "application/json");
    });
    HttpBackend backend(stub_config(stub));
    RefinerConfig cfg;
    const DegradedObservation deg = clean_observation();
    const RefinementTrace trace = refine(backend, deg, 0, {}, cfg);
    CHECK(trace.executed_action == 2);
    CHECK(trace.overridden);
    REQUIRE(trace.attempts.size() == 2);
    CHECK(trace.attempts[0].transport_error);
    CHECK(trace.attempts[0].transport_kind == BackendErrorKind::HttpStatus);
    CHECK(trace.attempts[1].parsed);
    CHECK(hits.load() == 2);
}

TEST_CASE("backend error names are stable") {
    CHECK(backend_error_name(BackendErrorKind::Timeout) == "timeout");
    CHECK(backend_error_name(BackendErrorKind::HttpStatus) == "http_status");
    CHECK(backend_error_name(BackendErrorKind::MissingApiKey) == "missing_api_key");
    CHECK(backend_error_name(BackendErrorKind::MalformedBody) == "malformed_body");
    CHECK(backend_error_name(BackendErrorKind::Connection) == "connection");
}
