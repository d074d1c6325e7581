#pragma once

#include <array>
#include <cstdint>

#include "illmtsc/movement.hpp"
#include "illmtsc/rng.hpp"
#include "illmtsc/sim.hpp"

namespace illmtsc {

// One packet carries one movement's SV1-SV4 by default; per-element mode
// treats every entry as its own packet.
enum class ChannelGranularity { PerMovementPacket, PerElement };

struct ChannelConfig {
    double loss_prob = 0.2;
    double noise_scale = 0.1;
    std::uint64_t seed = 0;
    ChannelGranularity granularity = ChannelGranularity::PerMovementPacket;

    void validate() const;
};

// Agent-visible observation after transit. Lost entries hold exactly 0.0 and
// the matching mask bits are set; SV5 is controller-local and never degraded.
struct DegradedObservation {
    std::array<std::array<double, 5>, kNumMovements> sv{};
    std::array<std::array<bool, 4>, kNumMovements> loss_mask{};

    bool movement_lost(MovementId m) const {
        const auto& row = loss_mask[static_cast<std::size_t>(m)];
        return row[0] && row[1] && row[2] && row[3];
    }
};

// Pure form: a fresh RNG from cfg.seed, so identical (obs, cfg) gives
// identical output.
DegradedObservation degrade(const Observation& obs, const ChannelConfig& cfg);

// Stream form for slot sequences: the RNG persists across apply() calls.
class Channel {
public:
    explicit Channel(const ChannelConfig& cfg);

    DegradedObservation apply(const Observation& obs);

    const ChannelConfig& config() const { return cfg_; }

private:
    ChannelConfig cfg_;
    Rng rng_;
};

struct ChannelStatistics {
    double empirical_loss_rate = 0.0;
    double empirical_noise_std = 0.0;
};

// Transmits n_packets zero-valued packets and measures what the channel did
// to them: the observed loss fraction and the std of surviving entries.
ChannelStatistics loss_statistics(const ChannelConfig& cfg, int n_packets);

}  // namespace illmtsc
