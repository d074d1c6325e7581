#pragma once

#include <array>
#include <cstddef>
#include <string>

namespace illmtsc {

// Movement indices 0..7 in fixed order: (E0_l, E0_s, E1_l, E1_s, E2_l, E2_s,
// E3_l, E3_s). Entrance i contributes a left turn (_l) and a straight (_s);
// right turns are always permitted and not modeled.
inline constexpr int kNumMovements = 8;
inline constexpr int kNumPhases = 4;

using MovementId = int;
using PhaseId = int;

inline constexpr std::array<const char*, kNumMovements> kMovementNames = {
    "E0_l", "E0_s", "E1_l", "E1_s", "E2_l", "E2_s", "E3_l", "E3_s"};

// The four phases partition the eight movements:
//   Phase 0 = {E0_l, E1_l}   Phase 1 = {E0_s, E1_s}
//   Phase 2 = {E2_s, E3_s}   Phase 3 = {E2_l, E3_l}
inline constexpr std::array<std::array<MovementId, 2>, kNumPhases> kPhaseMovements = {{
    {0, 2},
    {1, 3},
    {5, 7},
    {4, 6},
}};

inline constexpr bool phase_contains(PhaseId phase, MovementId m) {
    return kPhaseMovements[static_cast<std::size_t>(phase)][0] == m ||
           kPhaseMovements[static_cast<std::size_t>(phase)][1] == m;
}

// The phase that gives green to movement m.
inline constexpr PhaseId phase_of_movement(MovementId m) {
    for (int p = 0; p < kNumPhases; ++p) {
        if (phase_contains(p, m)) return p;
    }
    return -1;  // unreachable for m in 0..7
}

inline std::string movement_name(MovementId m) { return kMovementNames[static_cast<std::size_t>(m)]; }

inline bool valid_phase(int p) { return p >= 0 && p < kNumPhases; }
inline bool valid_movement(int m) { return m >= 0 && m < kNumMovements; }

}  // namespace illmtsc
