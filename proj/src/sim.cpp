#include "illmtsc/sim.hpp"

#include <algorithm>
#include <cmath>

namespace illmtsc {

void SimConfig::validate() const {
    if (slot_s <= 0) throw ConfigError("SimConfig.slot_s must be positive");
    if (yellow_s < 0) throw ConfigError("SimConfig.yellow_s must be non-negative");
    if (slot_s <= yellow_s) throw ConfigError("SimConfig.slot_s must exceed yellow_s");
    for (int m = 0; m < kNumMovements; ++m) {
        if (arrival_rate_vps[static_cast<std::size_t>(m)] < 0.0) {
            throw ConfigError("SimConfig.arrival_rate_vps[" + movement_name(m) + "] must be >= 0");
        }
    }
    if (emergency_prob < 0.0 || emergency_prob > 1.0) {
        throw ConfigError("SimConfig.emergency_prob must be in [0,1]");
    }
    if (lane_length_m < vehicle_footprint_m) {
        throw ConfigError("SimConfig.lane_length_m must be >= vehicle_footprint_m");
    }
    if (vehicle_footprint_m <= 0.0) throw ConfigError("SimConfig.vehicle_footprint_m must be positive");
    if (free_flow_speed_mps <= 0.0) throw ConfigError("SimConfig.free_flow_speed_mps must be positive");
    if (saturation_headway_s <= 0.0) throw ConfigError("SimConfig.saturation_headway_s must be positive");
    if (episode_duration_s <= 0) throw ConfigError("SimConfig.episode_duration_s must be positive");
}

Simulation::Simulation(const SimConfig& config, std::uint64_t seed)
    : config_(config), rng_(seed) {
    config_.validate();
}

double Simulation::queue_length_m(MovementId m) const {
    return static_cast<double>(queues_[static_cast<std::size_t>(m)].size()) * config_.vehicle_footprint_m;
}

std::size_t Simulation::vehicles_in_flight() const {
    std::size_t n = 0;
    for (int m = 0; m < kNumMovements; ++m) {
        n += queues_[static_cast<std::size_t>(m)].size() + approaching_[static_cast<std::size_t>(m)].size();
    }
    return n;
}

double Simulation::instantaneous_occupancy(MovementId m) const {
    const auto mi = static_cast<std::size_t>(m);
    double occupied =
        static_cast<double>(queues_[mi].size() + approaching_[mi].size()) * config_.vehicle_footprint_m;
    return std::min(1.0, occupied / config_.lane_length_m);
}

void Simulation::spawn_arrivals() {
    const double now = static_cast<double>(clock_s_);
    for (int m = 0; m < kNumMovements; ++m) {
        const auto mi = static_cast<std::size_t>(m);
        const int n = rng_.poisson(config_.arrival_rate_vps[mi]);
        for (int k = 0; k < n; ++k) {
            Vehicle v;
            v.id = next_vehicle_id_++;
            v.movement = m;
            v.t_arrival = now;
            v.is_emergency = rng_.bernoulli(config_.emergency_prob);
            const double jam = std::min(queue_length_m(m), config_.lane_length_m);
            double join = now + (config_.lane_length_m - jam) / config_.free_flow_speed_mps;
            // the lane is FIFO: never scheduled ahead of the vehicle in front
            if (!approaching_[mi].empty()) {
                join = std::max(join, approaching_[mi].back().t_join_queue);
            }
            v.t_join_queue = join;
            approaching_[mi].push_back(v);
            ++slot_arrivals_;
        }
    }
}

void Simulation::join_queues() {
    const double now = static_cast<double>(clock_s_);
    for (int m = 0; m < kNumMovements; ++m) {
        auto& app = approaching_[static_cast<std::size_t>(m)];
        std::size_t joined = 0;
        while (joined < app.size() && app[joined].t_join_queue <= now) {
            queues_[static_cast<std::size_t>(m)].push_back(app[joined]);
            ++joined;
        }
        app.erase(app.begin(), app.begin() + static_cast<std::ptrdiff_t>(joined));
    }
}

void Simulation::discharge() {
    const bool in_yellow = yellow_remaining_s_ > 0;
    const double now = static_cast<double>(clock_s_);
    for (int m = 0; m < kNumMovements; ++m) {
        const auto mi = static_cast<std::size_t>(m);
        const bool green = !in_yellow && phase_contains(current_phase_, m);
        if (!green) {
            discharge_credit_[mi] = 0.0;
            continue;
        }
        discharge_credit_[mi] += 1.0 / config_.saturation_headway_s;
        int slots = static_cast<int>(std::floor(discharge_credit_[mi]));
        discharge_credit_[mi] -= static_cast<double>(slots);
        auto& queue = queues_[mi];
        while (slots > 0 && !queue.empty()) {
            Vehicle v = queue.front();
            queue.pop_front();
            v.t_depart = now + 1.0;
            departed_.push_back(v);
            ++slot_discharged_;
            --slots;
        }
    }
}

void Simulation::accrue_waiting() {
    for (int m = 0; m < kNumMovements; ++m) {
        for (Vehicle& v : queues_[static_cast<std::size_t>(m)]) {
            v.waiting_s += 1.0;
            slot_waiting_ += 1.0;
        }
    }
}

void Simulation::step_second() {
    spawn_arrivals();
    join_queues();
    discharge();
    accrue_waiting();
    if (yellow_remaining_s_ > 0) --yellow_remaining_s_;
    ++clock_s_;
}

SlotOutcome Simulation::advance_slot(PhaseId action) {
    if (!valid_phase(action)) {
        throw std::invalid_argument("advance_slot: action must be a phase in 0..3");
    }
    const std::size_t present_base = vehicles_in_flight();
    slot_discharged_ = 0;
    slot_arrivals_ = 0;
    slot_waiting_ = 0.0;

    if (action != current_phase_) {
        yellow_remaining_s_ = config_.yellow_s;
        current_phase_ = action;
    }

    std::array<double, kNumMovements> occ_sum{};
    for (int s = 0; s < config_.slot_s; ++s) {
        step_second();
        for (int m = 0; m < kNumMovements; ++m) {
            occ_sum[static_cast<std::size_t>(m)] += instantaneous_occupancy(m);
        }
    }

    std::array<double, kNumMovements> occ_avg{};
    for (int m = 0; m < kNumMovements; ++m) {
        occ_avg[static_cast<std::size_t>(m)] = occ_sum[static_cast<std::size_t>(m)] / config_.slot_s;
    }

    SlotOutcome out;
    const std::size_t present = present_base + static_cast<std::size_t>(slot_arrivals_);
    out.reward = slot_waiting_ == 0.0
                     ? 0.0
                     : -slot_waiting_ / static_cast<double>(std::max<std::size_t>(1, present));
    out.true_observation = observe(occ_avg);
    out.emergency_present = emergency_present();
    out.vehicles_discharged = slot_discharged_;
    out.waiting_accrued_s = slot_waiting_;
    out.vehicles_arrived = slot_arrivals_;
    return out;
}

Observation Simulation::observe(const std::array<double, kNumMovements>& slot_occupancy_avg) const {
    Observation obs;
    for (int m = 0; m < kNumMovements; ++m) {
        const auto mi = static_cast<std::size_t>(m);
        const auto queued = queues_[mi].size();
        const auto moving = approaching_[mi].size();
        auto& row = obs.sv[mi];
        row[0] = (queued + moving) == 0
                     ? -1.0
                     : (static_cast<double>(moving) * config_.free_flow_speed_mps) /
                           static_cast<double>(queued + moving);
        row[1] = std::clamp(slot_occupancy_avg[mi], 0.0, 1.0);
        row[2] = static_cast<double>(queued) * config_.vehicle_footprint_m;
        row[3] = static_cast<double>(queued);
        row[4] = phase_contains(current_phase_, m) ? 1.0 : 0.0;
    }
    return obs;
}

Observation Simulation::observe_instantaneous() const {
    std::array<double, kNumMovements> occ{};
    for (int m = 0; m < kNumMovements; ++m) {
        occ[static_cast<std::size_t>(m)] = instantaneous_occupancy(m);
    }
    return observe(occ);
}

std::array<bool, kNumMovements> Simulation::emergency_present() const {
    std::array<bool, kNumMovements> flags{};
    for (int m = 0; m < kNumMovements; ++m) {
        const auto mi = static_cast<std::size_t>(m);
        for (const Vehicle& v : queues_[mi]) {
            if (v.is_emergency) flags[mi] = true;
        }
        for (const Vehicle& v : approaching_[mi]) {
            if (v.is_emergency) flags[mi] = true;
        }
    }
    return flags;
}

void Simulation::seed_queue(MovementId movement, int n, bool emergency) {
    if (!valid_movement(movement)) throw std::invalid_argument("seed_queue: movement out of range");
    for (int k = 0; k < n; ++k) {
        Vehicle v;
        v.id = next_vehicle_id_++;
        v.movement = movement;
        v.t_arrival = static_cast<double>(clock_s_);
        v.t_join_queue = static_cast<double>(clock_s_);
        v.is_emergency = emergency;
        queues_[static_cast<std::size_t>(movement)].push_back(v);
    }
}

MetricsReport Simulation::metrics_snapshot() const {
    MetricsReport report;
    double travel_all = 0.0, wait_all = 0.0, speed_all = 0.0;
    double travel_emv = 0.0, wait_emv = 0.0, speed_emv = 0.0;
    std::size_t n_all = 0, n_emv = 0;
    for (const Vehicle& v : departed_) {
        const double travel = *v.t_depart - v.t_arrival;
        const double speed = config_.lane_length_m / travel;
        travel_all += travel;
        wait_all += v.waiting_s;
        speed_all += speed;
        ++n_all;
        if (v.is_emergency) {
            travel_emv += travel;
            wait_emv += v.waiting_s;
            speed_emv += speed;
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
    report.completed = departed_.size();
    report.in_flight = vehicles_in_flight();
    return report;
}

}  // namespace illmtsc
