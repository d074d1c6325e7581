#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "illmtsc/channel.hpp"
#include "illmtsc/refiner.hpp"
#include "illmtsc/sim.hpp"

namespace illmtsc {

struct TraceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SlotRecord {
    long long slot = 0;
    std::uint64_t true_obs_digest = 0;  // fnv1a64 over the printed true state
    DegradedObservation degraded;       // equals the true state under normal comms
    PhaseId rl_action = 0;              // the proposal; equals executed_action without a reviewer
    PhaseId executed_action = 0;
    double reward = 0.0;
    int arrivals = 0;
    int departures = 0;
    std::optional<RefinementTrace> refinement;
};

struct VehicleRecord {
    std::uint64_t id = 0;
    MovementId movement = 0;
    bool emergency = false;
    double t_arrival = 0.0;
    double t_depart = 0.0;
    double travel_s = 0.0;
    double wait_s = 0.0;
    double speed_mps = 0.0;
};

struct EpisodeResult {
    std::string scenario;
    std::string policy;
    std::uint64_t seed = 0;
    std::uint64_t spawned = 0;
    std::vector<SlotRecord> slots;
    std::vector<VehicleRecord> vehicles;  // departed, in departure order
    MetricsReport metrics;
};

std::uint64_t observation_digest(const Observation& obs);

// One JSON object per line: a header record, each slot, each departed
// vehicle, then a metrics footer.
void write_trace(std::ostream& out, const EpisodeResult& episode);

// Reads exactly one episode, leaving the stream at the next one. Malformed
// input throws TraceError naming the 1-based line, counted from line_base.
EpisodeResult read_trace(std::istream& in, long long line_base = 0);

std::vector<EpisodeResult> read_traces(std::istream& in);

// Rebuilt from the vehicle records with the simulator's summation order, so a
// faithful trace reproduces the emitted report bit for bit.
MetricsReport recompute_metrics(const EpisodeResult& episode);

struct ReplaySummary {
    std::size_t episodes = 0;
    std::size_t slots = 0;
    std::size_t overrides = 0;
    std::size_t fallbacks = 0;
};

// Prints a per-slot report of every episode in the stream; verbose adds the
// review attempts' raw responses. Read-only.
ReplaySummary replay_trace(std::istream& in, std::ostream& out, bool verbose);

}  // namespace illmtsc
