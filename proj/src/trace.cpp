#include "illmtsc/trace.hpp"

#include <cinttypes>
#include <cstdio>
#include <istream>
#include <ostream>

#include "json.hpp"

#include "illmtsc/hash.hpp"

namespace illmtsc {

namespace {

using Json = nlohmann::ordered_json;

constexpr int kTraceFormatVersion = 1;

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, value);
    return std::string(buf);
}

std::uint64_t parse_hex64(const std::string& text) {
    return std::strtoull(text.c_str(), nullptr, 16);
}

std::string parse_error_name(ParseErrorKind kind) {
    switch (kind) {
        case ParseErrorKind::NoJson: return "no_json";
        case ParseErrorKind::BadDecision: return "bad_decision";
        case ParseErrorKind::OutOfRange: return "out_of_range";
    }
    return "no_json";
}

ParseErrorKind parse_error_from_name(const std::string& name) {
    if (name == "no_json") return ParseErrorKind::NoJson;
    if (name == "bad_decision") return ParseErrorKind::BadDecision;
    if (name == "out_of_range") return ParseErrorKind::OutOfRange;
    throw TraceError("unknown parse_error '" + name + "'");
}

BackendErrorKind backend_error_from_name(const std::string& name) {
    if (name == "timeout") return BackendErrorKind::Timeout;
    if (name == "http_status") return BackendErrorKind::HttpStatus;
    if (name == "missing_api_key") return BackendErrorKind::MissingApiKey;
    if (name == "malformed_body") return BackendErrorKind::MalformedBody;
    if (name == "connection") return BackendErrorKind::Connection;
    throw TraceError("unknown error_kind '" + name + "'");
}

Json refinement_to_json(const RefinementTrace& trace) {
    Json attempts = Json::array();
    for (const AttemptRecord& rec : trace.attempts) {
        Json a;
        a["prompt_hash"] = hex64(rec.prompt_hash);
        a["transport_error"] = rec.transport_error;
        if (rec.transport_error) {
            a["error_kind"] = backend_error_name(rec.transport_kind);
            a["error_message"] = rec.error_message;
        } else {
            a["raw_response"] = rec.raw_response;
        }
        a["parsed"] = rec.parsed;
        if (!rec.transport_error && !rec.parsed) a["parse_error"] = parse_error_name(rec.parse_error);
        attempts.push_back(std::move(a));
    }
    Json j;
    j["rl_action"] = trace.rl_action;
    j["executed_action"] = trace.executed_action;
    j["overridden"] = trace.overridden;
    j["fallback_used"] = trace.fallback_used;
    j["attempts"] = std::move(attempts);
    return j;
}

RefinementTrace refinement_from_json(const Json& j, long long slot) {
    RefinementTrace trace;
    trace.slot = slot;
    trace.rl_action = j.at("rl_action").get<PhaseId>();
    trace.executed_action = j.at("executed_action").get<PhaseId>();
    trace.overridden = j.at("overridden").get<bool>();
    trace.fallback_used = j.at("fallback_used").get<bool>();
    for (const Json& a : j.at("attempts")) {
        AttemptRecord rec;
        rec.prompt_hash = parse_hex64(a.at("prompt_hash").get<std::string>());
        rec.transport_error = a.at("transport_error").get<bool>();
        if (rec.transport_error) {
            rec.transport_kind = backend_error_from_name(a.at("error_kind").get<std::string>());
            rec.error_message = a.at("error_message").get<std::string>();
        } else {
            rec.raw_response = a.at("raw_response").get<std::string>();
        }
        rec.parsed = a.at("parsed").get<bool>();
        if (!rec.transport_error && !rec.parsed)
            rec.parse_error = parse_error_from_name(a.at("parse_error").get<std::string>());
        trace.attempts.push_back(std::move(rec));
    }
    return trace;
}

Json stats_to_json(const MetricStats& stats) {
    Json j;
    j["n"] = stats.count;
    j["mean_travel_s"] = stats.mean_travel_time_s ? Json(*stats.mean_travel_time_s) : Json(nullptr);
    j["mean_wait_s"] = stats.mean_waiting_time_s ? Json(*stats.mean_waiting_time_s) : Json(nullptr);
    j["mean_speed_mps"] = stats.mean_speed_mps ? Json(*stats.mean_speed_mps) : Json(nullptr);
    return j;
}

MetricStats stats_from_json(const Json& j) {
    MetricStats stats;
    stats.count = j.at("n").get<std::size_t>();
    if (!j.at("mean_travel_s").is_null()) stats.mean_travel_time_s = j.at("mean_travel_s").get<double>();
    if (!j.at("mean_wait_s").is_null()) stats.mean_waiting_time_s = j.at("mean_wait_s").get<double>();
    if (!j.at("mean_speed_mps").is_null()) stats.mean_speed_mps = j.at("mean_speed_mps").get<double>();
    return stats;
}

// Pulls one line and parses it, converting every failure into a TraceError
// that names the line.
class LineReader {
public:
    LineReader(std::istream& in, long long line_base) : in_(in), line_(line_base) {}

    Json next(const char* expectation) {
        std::string line;
        ++line_;
        if (!std::getline(in_, line))
            throw TraceError("trace line " + std::to_string(line_) + ": expected " +
                             expectation + ", found end of input");
        Json j = Json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("type"))
            throw TraceError("trace line " + std::to_string(line_) + ": not a trace record");
        return j;
    }

    long long line() const { return line_; }

    TraceError error(const std::string& message) const {
        return TraceError("trace line " + std::to_string(line_) + ": " + message);
    }

private:
    std::istream& in_;
    long long line_;
};

}  // namespace

std::uint64_t observation_digest(const Observation& obs) {
    std::string printed;
    char buf[32];
    for (const auto& row : obs.sv) {
        for (double entry : row) {
            std::snprintf(buf, sizeof buf, "%.17g;", entry);
            printed += buf;
        }
    }
    return fnv1a64(printed);
}

void write_trace(std::ostream& out, const EpisodeResult& episode) {
    Json header;
    header["type"] = "header";
    header["format_version"] = kTraceFormatVersion;
    header["scenario"] = episode.scenario;
    header["policy"] = episode.policy;
    header["seed"] = episode.seed;
    header["spawned"] = episode.spawned;
    header["slots"] = episode.slots.size();
    out << header.dump() << '\n';

    for (const SlotRecord& slot : episode.slots) {
        Json j;
        j["type"] = "slot";
        j["slot"] = slot.slot;
        j["true_obs_digest"] = hex64(slot.true_obs_digest);
        Json sv = Json::array();
        for (const auto& row : slot.degraded.sv) sv.push_back(row);
        j["deg_sv"] = std::move(sv);
        Json mask = Json::array();
        for (const auto& row : slot.degraded.loss_mask) mask.push_back(row);
        j["loss_mask"] = std::move(mask);
        j["rl_action"] = slot.rl_action;
        j["executed_action"] = slot.executed_action;
        j["reward"] = slot.reward;
        j["arrivals"] = slot.arrivals;
        j["departures"] = slot.departures;
        if (slot.refinement) j["refinement"] = refinement_to_json(*slot.refinement);
        out << j.dump() << '\n';
    }

    for (const VehicleRecord& v : episode.vehicles) {
        Json j;
        j["type"] = "vehicle";
        j["id"] = v.id;
        j["movement"] = v.movement;
        j["emergency"] = v.emergency;
        j["t_arrival"] = v.t_arrival;
        j["t_depart"] = v.t_depart;
        j["travel_s"] = v.travel_s;
        j["wait_s"] = v.wait_s;
        j["speed_mps"] = v.speed_mps;
        out << j.dump() << '\n';
    }

    Json footer;
    footer["type"] = "metrics";
    footer["completed"] = episode.metrics.completed;
    footer["in_flight"] = episode.metrics.in_flight;
    footer["all"] = stats_to_json(episode.metrics.all);
    footer["emergency"] = stats_to_json(episode.metrics.emergency);
    out << footer.dump() << '\n';
}

EpisodeResult read_trace(std::istream& in, long long line_base) {
    LineReader reader(in, line_base);
    EpisodeResult episode;
    try {
        Json header = reader.next("a header record");
        if (header["type"] != "header") throw reader.error("expected a header record");
        const int version = header.at("format_version").get<int>();
        if (version != kTraceFormatVersion)
            throw reader.error("trace format version " + std::to_string(version) + ", expected " +
                               std::to_string(kTraceFormatVersion));
        episode.scenario = header.at("scenario").get<std::string>();
        episode.policy = header.at("policy").get<std::string>();
        episode.seed = header.at("seed").get<std::uint64_t>();
        episode.spawned = header.at("spawned").get<std::uint64_t>();
        const auto n_slots = header.at("slots").get<std::size_t>();

        for (std::size_t k = 0; k < n_slots; ++k) {
            Json j = reader.next("a slot record");
            if (j["type"] != "slot") throw reader.error("expected a slot record");
            SlotRecord slot;
            slot.slot = j.at("slot").get<long long>();
            if (slot.slot != static_cast<long long>(k))
                throw reader.error("slot index " + std::to_string(slot.slot) + ", expected " +
                                   std::to_string(k));
            slot.true_obs_digest = parse_hex64(j.at("true_obs_digest").get<std::string>());
            const Json& sv = j.at("deg_sv");
            const Json& mask = j.at("loss_mask");
            if (sv.size() != kNumMovements || mask.size() != kNumMovements)
                throw reader.error("degraded state must cover all movements");
            for (int m = 0; m < kNumMovements; ++m) {
                slot.degraded.sv[m] = sv[m].get<std::array<double, 5>>();
                slot.degraded.loss_mask[m] = mask[m].get<std::array<bool, 4>>();
            }
            slot.rl_action = j.at("rl_action").get<PhaseId>();
            slot.executed_action = j.at("executed_action").get<PhaseId>();
            slot.reward = j.at("reward").get<double>();
            slot.arrivals = j.at("arrivals").get<int>();
            slot.departures = j.at("departures").get<int>();
            if (j.contains("refinement"))
                slot.refinement = refinement_from_json(j.at("refinement"), slot.slot);
            episode.slots.push_back(std::move(slot));
        }

        Json j = reader.next("a vehicle or metrics record");
        while (j["type"] == "vehicle") {
            VehicleRecord v;
            v.id = j.at("id").get<std::uint64_t>();
            v.movement = j.at("movement").get<MovementId>();
            v.emergency = j.at("emergency").get<bool>();
            v.t_arrival = j.at("t_arrival").get<double>();
            v.t_depart = j.at("t_depart").get<double>();
            v.travel_s = j.at("travel_s").get<double>();
            v.wait_s = j.at("wait_s").get<double>();
            v.speed_mps = j.at("speed_mps").get<double>();
            episode.vehicles.push_back(v);
            j = reader.next("a vehicle or metrics record");
        }

        if (j["type"] != "metrics") throw reader.error("expected a metrics record");
        episode.metrics.completed = j.at("completed").get<std::size_t>();
        episode.metrics.in_flight = j.at("in_flight").get<std::size_t>();
        episode.metrics.all = stats_from_json(j.at("all"));
        episode.metrics.emergency = stats_from_json(j.at("emergency"));
    } catch (const Json::exception& e) {
        throw reader.error(e.what());
    }
    return episode;
}

std::vector<EpisodeResult> read_traces(std::istream& in) {
    std::vector<EpisodeResult> episodes;
    long long line_base = 0;
    while (in.peek() != std::char_traits<char>::eof()) {
        episodes.push_back(read_trace(in, line_base));
        const EpisodeResult& e = episodes.back();
        line_base += 2 + static_cast<long long>(e.slots.size()) +
                     static_cast<long long>(e.vehicles.size());
    }
    return episodes;
}

MetricsReport recompute_metrics(const EpisodeResult& episode) {
    MetricsReport report;
    double travel_all = 0.0, wait_all = 0.0, speed_all = 0.0;
    double travel_emv = 0.0, wait_emv = 0.0, speed_emv = 0.0;
    std::size_t n_all = 0, n_emv = 0;
    for (const VehicleRecord& v : episode.vehicles) {
        travel_all += v.travel_s;
        wait_all += v.wait_s;
        speed_all += v.speed_mps;
        ++n_all;
        if (v.emergency) {
            travel_emv += v.travel_s;
            wait_emv += v.wait_s;
            speed_emv += v.speed_mps;
            ++n_emv;
        }
    }
    report.all.count = n_all;
    if (n_all > 0) {
        report.all.mean_travel_time_s = travel_all / static_cast<double>(n_all);
        report.all.mean_waiting_time_s = wait_all / static_cast<double>(n_all);
        report.all.mean_speed_mps = speed_all / static_cast<double>(n_all);
    }
    report.emergency.count = n_emv;
    if (n_emv > 0) {
        report.emergency.mean_travel_time_s = travel_emv / static_cast<double>(n_emv);
        report.emergency.mean_waiting_time_s = wait_emv / static_cast<double>(n_emv);
        report.emergency.mean_speed_mps = speed_emv / static_cast<double>(n_emv);
    }
    report.completed = episode.vehicles.size();
    report.in_flight = static_cast<std::size_t>(episode.spawned) - episode.vehicles.size();
    return report;
}

ReplaySummary replay_trace(std::istream& in, std::ostream& out, bool verbose) {
    ReplaySummary summary;
    long long line_base = 0;
    while (in.peek() != std::char_traits<char>::eof()) {
        const EpisodeResult episode = read_trace(in, line_base);
        line_base += 2 + static_cast<long long>(episode.slots.size()) +
                     static_cast<long long>(episode.vehicles.size());
        ++summary.episodes;
        out << "episode " << episode.scenario << "/" << episode.policy << " seed " << episode.seed
            << ": " << episode.slots.size() << " slots, " << episode.vehicles.size()
            << " vehicles completed\n";
        for (const SlotRecord& slot : episode.slots) {
            ++summary.slots;
            out << "  slot " << slot.slot << ": ";
            if (slot.refinement && slot.refinement->overridden) {
                out << "rl " << slot.rl_action << " -> executed " << slot.executed_action
                    << " (override)";
                ++summary.overrides;
            } else {
                out << "phase " << slot.executed_action;
            }
            if (slot.refinement && slot.refinement->fallback_used) {
                out << " (fallback)";
                ++summary.fallbacks;
            }
            out << ", reward " << slot.reward << ", arrivals " << slot.arrivals << ", departures "
                << slot.departures << "\n";
            if (verbose && slot.refinement) {
                for (std::size_t i = 0; i < slot.refinement->attempts.size(); ++i) {
                    const AttemptRecord& rec = slot.refinement->attempts[i];
                    out << "    attempt " << (i + 1) << " [" << hex64(rec.prompt_hash) << "]: ";
                    if (rec.transport_error)
                        out << backend_error_name(rec.transport_kind) << ": " << rec.error_message;
                    else if (rec.parsed)
                        out << "parsed: " << rec.raw_response;
                    else
                        out << parse_error_name(rec.parse_error) << ": " << rec.raw_response;
                    out << "\n";
                }
            }
        }
        const MetricsReport& m = episode.metrics;
        out << "  completed " << m.completed << ", in flight " << m.in_flight;
        if (m.all.mean_waiting_time_s) out << ", mean wait " << *m.all.mean_waiting_time_s << " s";
        if (m.emergency.count > 0 && m.emergency.mean_waiting_time_s)
            out << ", emv mean wait " << *m.emergency.mean_waiting_time_s << " s";
        out << "\n";
    }
    return summary;
}

}  // namespace illmtsc
