#pragma once

#include <array>

#include "illmtsc/movement.hpp"
#include "illmtsc/sim.hpp"

namespace illmtsc {

struct FixedTimeConfig {
    double phase_duration_s = 25.0;

    // Throws ConfigError unless the duration is a positive multiple of slot_s.
    void validate(double slot_s) const;
};

// Cyclic schedule 0,1,2,3 with equal dwell; never inspects traffic.
PhaseId fixed_time_policy(double clock_s, const FixedTimeConfig& cfg);

struct SotlConfig {
    double threshold_veh_s = 30.0;
    double min_green_s = 10.0;

    // Throws ConfigError unless both are positive and min_green_s is a
    // multiple of slot_s.
    void validate(double slot_s) const;
};

struct SotlState {
    PhaseId current_phase = 0;
    double green_held_s = 0.0;
    // Vehicle-seconds accrued behind red, per movement.
    std::array<double, kNumMovements> pressure{};
};

// Self-organizing control: red movements build pressure at queue x slot_s per
// call; once the green has held min_green_s and some pressure reaches the
// threshold, the phase of the highest-pressure movement (lower index on ties)
// takes over and that phase's pressure drops to zero.
PhaseId sotl_policy(const Observation& obs, SotlState& state, const SotlConfig& cfg, double slot_s);

// Serves the phase whose movements hold the most queued vehicles; lower phase
// index on ties.
PhaseId longest_queue_policy(const Observation& obs);

}  // namespace illmtsc
