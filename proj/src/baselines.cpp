#include "illmtsc/baselines.hpp"

#include <cmath>

namespace illmtsc {

void FixedTimeConfig::validate(double slot_s) const {
    if (!(phase_duration_s > 0.0) || std::fmod(phase_duration_s, slot_s) != 0.0)
        throw ConfigError("FixedTimeConfig.phase_duration_s must be a positive multiple of slot_s");
}

PhaseId fixed_time_policy(double clock_s, const FixedTimeConfig& cfg) {
    const auto cycles = static_cast<long long>(clock_s / cfg.phase_duration_s);
    return static_cast<PhaseId>(cycles % kNumPhases);
}

void SotlConfig::validate(double slot_s) const {
    if (!(threshold_veh_s > 0.0)) throw ConfigError("SotlConfig.threshold_veh_s must be > 0");
    if (!(min_green_s > 0.0) || std::fmod(min_green_s, slot_s) != 0.0)
        throw ConfigError("SotlConfig.min_green_s must be a positive multiple of slot_s");
}

PhaseId sotl_policy(const Observation& obs, SotlState& state, const SotlConfig& cfg, double slot_s) {
    for (MovementId m = 0; m < kNumMovements; ++m) {
        if (phase_contains(state.current_phase, m)) continue;
        state.pressure[static_cast<std::size_t>(m)] +=
            obs.sv[static_cast<std::size_t>(m)][3] * slot_s;
    }

    if (state.green_held_s >= cfg.min_green_s) {
        MovementId hottest = -1;
        double top = -1.0;
        for (MovementId m = 0; m < kNumMovements; ++m) {
            const double p = state.pressure[static_cast<std::size_t>(m)];
            if (p > top) {
                top = p;
                hottest = m;
            }
        }
        if (top >= cfg.threshold_veh_s) {
            state.current_phase = phase_of_movement(hottest);
            state.green_held_s = 0.0;
            for (MovementId m : kPhaseMovements[static_cast<std::size_t>(state.current_phase)])
                state.pressure[static_cast<std::size_t>(m)] = 0.0;
        }
    }

    // One more slot now runs under the phase chosen here, so at the next
    // call's test green_held_s equals the seconds actually commanded.
    state.green_held_s += slot_s;
    return state.current_phase;
}

PhaseId longest_queue_policy(const Observation& obs) {
    PhaseId best = 0;
    double top = -1.0;
    for (PhaseId p = 0; p < kNumPhases; ++p) {
        double queue = 0.0;
        for (MovementId m : kPhaseMovements[static_cast<std::size_t>(p)])
            queue += obs.sv[static_cast<std::size_t>(m)][3];
        if (queue > top) {
            top = queue;
            best = p;
        }
    }
    return best;
}

}  // namespace illmtsc
