#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "illmtsc/movement.hpp"
#include "illmtsc/rng.hpp"

namespace illmtsc {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SimConfig {
    int slot_s = 5;
    int yellow_s = 3;
    double lane_length_m = 150.0;
    double free_flow_speed_mps = 13.89;
    double vehicle_footprint_m = 7.5;  // length + gap
    double saturation_headway_s = 2.0;
    std::array<double, kNumMovements> arrival_rate_vps = {0.03, 0.08, 0.03, 0.08,
                                                          0.03, 0.08, 0.03, 0.08};
    double emergency_prob = 0.005;
    int episode_duration_s = 3600;

    // Throws ConfigError naming the offending field.
    void validate() const;
};

struct Vehicle {
    std::uint64_t id = 0;
    MovementId movement = 0;
    double t_arrival = 0.0;     // entered the approach
    double t_join_queue = 0.0;  // scheduled arrival at the stop line
    std::optional<double> t_depart;
    double waiting_s = 0.0;  // whole seconds spent stationary in the queue
    bool is_emergency = false;
};

// The 8x5 movement-state matrix. Columns: SV1 flow speed (m/s, -1 when the
// movement holds no vehicles), SV2 mean occupancy over the slot (0..1),
// SV3 jam length in meters, SV4 jam length in vehicles, SV5 passable flag.
struct Observation {
    std::array<std::array<double, 5>, kNumMovements> sv{};
};

struct SlotOutcome {
    double reward = 0.0;  // -(waiting accrued in slot) / max(1, vehicles present)
    Observation true_observation;
    std::array<bool, kNumMovements> emergency_present{};
    int vehicles_discharged = 0;
    double waiting_accrued_s = 0.0;
    int vehicles_arrived = 0;
};

struct MetricStats {
    std::optional<double> mean_travel_time_s;
    std::optional<double> mean_waiting_time_s;
    std::optional<double> mean_speed_mps;
    std::size_t count = 0;
};

struct MetricsReport {
    MetricStats all;
    MetricStats emergency;
    std::size_t completed = 0;
    std::size_t in_flight = 0;
};

// Deterministic point-queue intersection: vehicles traverse the approach at
// free-flow speed, join a vertical FIFO queue at the stop line, and discharge
// one per saturation headway while their movement is green.
class Simulation {
public:
    Simulation(const SimConfig& config, std::uint64_t seed);

    // Advances one decision slot at 1 s resolution. A phase change spends the
    // first yellow_s seconds with every movement held.
    SlotOutcome advance_slot(PhaseId action);

    // Observation at a slot boundary given the slot-averaged occupancy per
    // movement. SV1-SV4 are sampled from the current state.
    Observation observe(const std::array<double, kNumMovements>& slot_occupancy_avg) const;

    // Observation with instantaneous occupancy, for the first slot of an
    // episode before any slot-average exists.
    Observation observe_instantaneous() const;

    MetricsReport metrics_snapshot() const;

    // True when an emergency vehicle is queued on or approaching the movement.
    std::array<bool, kNumMovements> emergency_present() const;

    // Injects n already-queued vehicles at the stop line of a movement. Used
    // to stage scenario snapshots; counts as arrivals at the current clock.
    void seed_queue(MovementId movement, int n, bool emergency = false);

    int clock_s() const { return clock_s_; }
    PhaseId current_phase() const { return current_phase_; }
    const SimConfig& config() const { return config_; }
    std::uint64_t vehicles_spawned() const { return next_vehicle_id_; }
    std::size_t vehicles_departed() const { return departed_.size(); }
    std::size_t vehicles_in_flight() const;
    const std::vector<Vehicle>& departed() const { return departed_; }
    double queue_length_m(MovementId m) const;
    int queue_count(MovementId m) const { return static_cast<int>(queues_[static_cast<std::size_t>(m)].size()); }

private:
    void step_second();
    double instantaneous_occupancy(MovementId m) const;
    void spawn_arrivals();
    void join_queues();
    void discharge();
    void accrue_waiting();

    SimConfig config_;
    int clock_s_ = 0;
    PhaseId current_phase_ = 0;
    int yellow_remaining_s_ = 0;
    std::array<std::deque<Vehicle>, kNumMovements> queues_;
    std::array<std::vector<Vehicle>, kNumMovements> approaching_;
    std::array<double, kNumMovements> discharge_credit_{};
    std::vector<Vehicle> departed_;
    std::uint64_t next_vehicle_id_ = 0;
    Rng rng_;

    // per-slot accumulators, reset by advance_slot
    int slot_discharged_ = 0;
    int slot_arrivals_ = 0;
    double slot_waiting_ = 0.0;
};

}  // namespace illmtsc
