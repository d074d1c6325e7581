#include "illmtsc/channel.hpp"

#include <cmath>

namespace illmtsc {

void ChannelConfig::validate() const {
    if (loss_prob < 0.0 || loss_prob > 1.0) {
        throw ConfigError("ChannelConfig.loss_prob must be in [0,1]");
    }
    if (noise_scale < 0.0) {
        throw ConfigError("ChannelConfig.noise_scale must be >= 0");
    }
}

namespace {

// Draws in movement-major, column-minor order. A lost packet consumes only
// its loss draw, never noise draws.
DegradedObservation degrade_with(const Observation& obs, const ChannelConfig& cfg, Rng& rng) {
    DegradedObservation out;
    out.sv = obs.sv;
    for (int m = 0; m < kNumMovements; ++m) {
        const auto mi = static_cast<std::size_t>(m);
        if (cfg.granularity == ChannelGranularity::PerMovementPacket) {
            if (rng.bernoulli(cfg.loss_prob)) {
                for (int c = 0; c < 4; ++c) {
                    out.sv[mi][static_cast<std::size_t>(c)] = 0.0;
                    out.loss_mask[mi][static_cast<std::size_t>(c)] = true;
                }
            } else {
                for (int c = 0; c < 4; ++c) {
                    out.sv[mi][static_cast<std::size_t>(c)] += cfg.noise_scale * rng.normal();
                }
            }
        } else {
            for (int c = 0; c < 4; ++c) {
                const auto ci = static_cast<std::size_t>(c);
                if (rng.bernoulli(cfg.loss_prob)) {
                    out.sv[mi][ci] = 0.0;
                    out.loss_mask[mi][ci] = true;
                } else {
                    out.sv[mi][ci] += cfg.noise_scale * rng.normal();
                }
            }
        }
    }
    return out;
}

}  // namespace

DegradedObservation degrade(const Observation& obs, const ChannelConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    return degrade_with(obs, cfg, rng);
}

Channel::Channel(const ChannelConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {
    cfg_.validate();
}

DegradedObservation Channel::apply(const Observation& obs) {
    return degrade_with(obs, cfg_, rng_);
}

ChannelStatistics loss_statistics(const ChannelConfig& cfg, int n_packets) {
    cfg.validate();
    Rng rng(cfg.seed);
    const int elements_per_packet = cfg.granularity == ChannelGranularity::PerMovementPacket ? 4 : 1;
    std::int64_t lost = 0;
    std::int64_t survived_entries = 0;
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int k = 0; k < n_packets; ++k) {
        if (rng.bernoulli(cfg.loss_prob)) {
            ++lost;
            continue;
        }
        for (int c = 0; c < elements_per_packet; ++c) {
            const double value = cfg.noise_scale * rng.normal();
            sum += value;
            sum_sq += value * value;
            ++survived_entries;
        }
    }
    ChannelStatistics stats;
    stats.empirical_loss_rate = static_cast<double>(lost) / static_cast<double>(n_packets);
    if (survived_entries > 0) {
        const double mean = sum / static_cast<double>(survived_entries);
        const double var = sum_sq / static_cast<double>(survived_entries) - mean * mean;
        stats.empirical_noise_std = std::sqrt(std::max(0.0, var));
    }
    return stats;
}

}  // namespace illmtsc
