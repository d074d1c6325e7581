#include "illmtsc/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <unordered_set>
#include <utility>

#include "illmtsc/checkpoint.hpp"

namespace illmtsc {

void ScenarioConfig::validate() const {
    if (name.empty()) throw ConfigError("ScenarioConfig.name must not be empty");
    sim.validate();
    if (comm == CommMode::Degraded) channel.validate();
}

std::string policy_name(PolicyKind kind) {
    switch (kind) {
        case PolicyKind::FixedTime: return "fixed";
        case PolicyKind::Sotl: return "sotl";
        case PolicyKind::LongestQueue: return "longest-queue";
        case PolicyKind::Rl: return "rl";
        case PolicyKind::Illm: return "illm";
    }
    return "fixed";
}

PolicyKind policy_kind_from_name(const std::string& name) {
    if (name == "fixed") return PolicyKind::FixedTime;
    if (name == "sotl") return PolicyKind::Sotl;
    if (name == "longest-queue") return PolicyKind::LongestQueue;
    if (name == "rl") return PolicyKind::Rl;
    if (name == "illm") return PolicyKind::Illm;
    throw ConfigError("unknown policy '" + name +
                      "'; expected fixed, sotl, longest-queue, rl, or illm");
}

std::string display_name(const PolicyStackConfig& cfg) {
    return cfg.label.empty() ? policy_name(cfg.kind) : cfg.label;
}

PolicyRuntime make_policy_runtime(const PolicyStackConfig& cfg) {
    PolicyRuntime rt;
    rt.cfg = cfg;
    if (cfg.kind == PolicyKind::Rl || cfg.kind == PolicyKind::Illm) {
        if (cfg.checkpoint_path.empty())
            throw ConfigError("PolicyStackConfig.checkpoint_path is required for the " +
                              policy_name(cfg.kind) + " stack");
        rt.weights = load_checkpoint(cfg.checkpoint_path);
    }
    if (cfg.kind == PolicyKind::Illm) {
        cfg.refiner.validate();
        if (cfg.refiner.backend == BackendKind::Http)
            rt.owned_backend = std::make_unique<HttpBackend>(cfg.http);
        else
            rt.owned_backend = std::make_unique<ScriptedOracleBackend>();
        rt.backend = rt.owned_backend.get();
    }
    return rt;
}

PhaseId greedy_action(const NetworkWeights& weights,
                      const std::array<std::array<double, 5>, kNumMovements>& sv) {
    const std::array<double, kNumPhases> probs = policy_forward(weights, flatten_state(sv));
    PhaseId best = 0;
    for (PhaseId a = 1; a < kNumPhases; ++a) {
        if (probs[static_cast<std::size_t>(a)] > probs[static_cast<std::size_t>(best)]) best = a;
    }
    return best;
}

EpisodeResult run_episode(const ScenarioConfig& scenario, PolicyRuntime& policy,
                          std::uint64_t seed) {
    scenario.validate();
    const PolicyStackConfig& pc = policy.cfg;
    switch (pc.kind) {
        case PolicyKind::FixedTime:
            pc.fixed_time.validate(static_cast<double>(scenario.sim.slot_s));
            break;
        case PolicyKind::Sotl:
            pc.sotl.validate(static_cast<double>(scenario.sim.slot_s));
            break;
        case PolicyKind::LongestQueue:
            break;
        case PolicyKind::Rl:
        case PolicyKind::Illm:
            if (!policy.weights)
                throw ConfigError("the " + policy_name(pc.kind) + " stack has no loaded weights");
            if (pc.kind == PolicyKind::Illm) {
                pc.refiner.validate();
                if (policy.backend == nullptr)
                    throw ConfigError("the illm stack has no reviewer backend");
            }
            break;
    }

    Simulation sim(scenario.sim, seed);
    std::optional<Channel> channel;
    if (scenario.comm == CommMode::Degraded) {
        ChannelConfig ch = scenario.channel;
        ch.seed = Rng::derive(seed, 3);
        channel.emplace(ch);
    }
    SotlState sotl_state;
    const double slot_s = static_cast<double>(scenario.sim.slot_s);

    EpisodeResult episode;
    episode.scenario = scenario.name;
    episode.policy = display_name(pc);
    episode.seed = seed;

    Observation obs = sim.observe_instantaneous();
    long long slot = 0;
    while (sim.clock_s() < scenario.sim.episode_duration_s) {
        DegradedObservation deg;
        if (channel)
            deg = channel->apply(obs);
        else
            deg.sv = obs.sv;

        SlotRecord rec;
        rec.slot = slot;
        rec.true_obs_digest = observation_digest(obs);
        rec.degraded = deg;

        PhaseId executed = 0;
        switch (pc.kind) {
            case PolicyKind::FixedTime:
                executed = fixed_time_policy(static_cast<double>(sim.clock_s()), pc.fixed_time);
                break;
            case PolicyKind::Sotl: {
                Observation visible;
                visible.sv = deg.sv;
                executed = sotl_policy(visible, sotl_state, pc.sotl, slot_s);
                break;
            }
            case PolicyKind::LongestQueue: {
                Observation visible;
                visible.sv = deg.sv;
                executed = longest_queue_policy(visible);
                break;
            }
            case PolicyKind::Rl:
                executed = greedy_action(*policy.weights, deg.sv);
                break;
            case PolicyKind::Illm: {
                const PhaseId proposal = greedy_action(*policy.weights, deg.sv);
                rec.refinement = refine(*policy.backend, deg, proposal, sim.emergency_present(),
                                        pc.refiner, slot);
                rec.rl_action = proposal;
                executed = rec.refinement->executed_action;
                break;
            }
        }
        if (!rec.refinement) rec.rl_action = executed;
        rec.executed_action = executed;

        const SlotOutcome out = sim.advance_slot(executed);
        rec.reward = out.reward;
        rec.arrivals = out.vehicles_arrived;
        rec.departures = out.vehicles_discharged;
        episode.slots.push_back(std::move(rec));
        obs = out.true_observation;
        ++slot;
    }

    episode.spawned = sim.vehicles_spawned();
    for (const Vehicle& v : sim.departed()) {
        VehicleRecord r;
        r.id = v.id;
        r.movement = v.movement;
        r.emergency = v.is_emergency;
        r.t_arrival = v.t_arrival;
        r.t_depart = *v.t_depart;
        r.travel_s = *v.t_depart - v.t_arrival;
        r.wait_s = v.waiting_s;
        r.speed_mps = scenario.sim.lane_length_m / r.travel_s;
        episode.vehicles.push_back(r);
    }
    episode.metrics = sim.metrics_snapshot();
    return episode;
}

CellSummary summarize_cell(const std::string& scenario, const std::string& policy,
                           std::uint64_t base_seed, const std::vector<EpisodeResult>& episodes) {
    CellSummary cell;
    cell.scenario = scenario;
    cell.policy = policy;
    cell.base_seed = base_seed;
    cell.episodes = episodes.size();

    double travel_all = 0.0, wait_all = 0.0, speed_all = 0.0;
    double travel_emv = 0.0, wait_emv = 0.0, speed_emv = 0.0;
    std::size_t n_all = 0, n_emv = 0;
    for (const EpisodeResult& ep : episodes) {
        const MetricStats& a = ep.metrics.all;
        if (a.count > 0) {
            const auto n = static_cast<double>(a.count);
            travel_all += *a.mean_travel_time_s * n;
            wait_all += *a.mean_waiting_time_s * n;
            speed_all += *a.mean_speed_mps * n;
            n_all += a.count;
        }
        const MetricStats& e = ep.metrics.emergency;
        if (e.count > 0) {
            const auto n = static_cast<double>(e.count);
            travel_emv += *e.mean_travel_time_s * n;
            wait_emv += *e.mean_waiting_time_s * n;
            speed_emv += *e.mean_speed_mps * n;
            n_emv += e.count;
        }
    }
    cell.all.count = n_all;
    if (n_all > 0) {
        cell.all.mean_travel_time_s = travel_all / static_cast<double>(n_all);
        cell.all.mean_waiting_time_s = wait_all / static_cast<double>(n_all);
        cell.all.mean_speed_mps = speed_all / static_cast<double>(n_all);
    }
    cell.emergency.count = n_emv;
    if (n_emv > 0) {
        cell.emergency.mean_travel_time_s = travel_emv / static_cast<double>(n_emv);
        cell.emergency.mean_waiting_time_s = wait_emv / static_cast<double>(n_emv);
        cell.emergency.mean_speed_mps = speed_emv / static_cast<double>(n_emv);
    }
    return cell;
}

namespace {

void require_distinct_seeds(const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    std::unordered_set<std::uint64_t> seen;
    for (std::uint64_t s : seeds) {
        if (!seen.insert(s).second) throw ConfigError("seeds must be distinct");
    }
}

}  // namespace

std::vector<CellSummary> compare(const std::vector<ScenarioConfig>& scenarios,
                                 const std::vector<PolicyStackConfig>& policies,
                                 const std::vector<std::uint64_t>& seeds) {
    require_distinct_seeds(seeds);
    std::vector<CellSummary> rows;
    for (const ScenarioConfig& scenario : scenarios) {
        for (const PolicyStackConfig& pol : policies) {
            try {
                PolicyRuntime rt = make_policy_runtime(pol);
                std::vector<EpisodeResult> episodes;
                episodes.reserve(seeds.size());
                for (std::uint64_t seed : seeds) episodes.push_back(run_episode(scenario, rt, seed));
                rows.push_back(
                    summarize_cell(scenario.name, display_name(pol), seeds.front(), episodes));
            } catch (const std::exception& e) {
                CellSummary cell;
                cell.scenario = scenario.name;
                cell.policy = display_name(pol);
                cell.base_seed = seeds.front();
                cell.failed = true;
                cell.failure = e.what();
                rows.push_back(std::move(cell));
            }
        }
    }
    return rows;
}

std::vector<AblationRow> ablate_prompts(const std::vector<PromptLevel>& levels,
                                        const ScenarioConfig& scenario,
                                        const PolicyStackConfig& illm_policy,
                                        const std::vector<std::uint64_t>& seeds) {
    require_distinct_seeds(seeds);
    if (levels.empty()) throw ConfigError("at least one prompt level is required");

    std::vector<AblationRow> rows;
    for (PromptLevel level : levels) {
        AblationRow row;
        row.level = level;
        PolicyStackConfig pol = illm_policy;
        pol.kind = PolicyKind::Illm;
        pol.refiner.prompt_level = level;
        try {
            PolicyRuntime rt = make_policy_runtime(pol);
            double wait_sum = 0.0;
            std::size_t n = 0;
            for (std::uint64_t seed : seeds) {
                const EpisodeResult ep = run_episode(scenario, rt, seed);
                ++row.episodes;
                if (ep.metrics.all.count > 0) {
                    wait_sum +=
                        *ep.metrics.all.mean_waiting_time_s * static_cast<double>(ep.metrics.all.count);
                    n += ep.metrics.all.count;
                }
            }
            row.n_vehicles = n;
            if (n > 0) row.mean_wait_s = wait_sum / static_cast<double>(n);
        } catch (const std::exception& e) {
            row.failed = true;
            row.failure = e.what();
        }
        rows.push_back(std::move(row));
    }

    // Normalize by level 1 when it ran; otherwise by the lowest level that did.
    const AblationRow* base = nullptr;
    for (const AblationRow& row : rows) {
        if (row.failed || !row.mean_wait_s) continue;
        if (base == nullptr || static_cast<int>(row.level) < static_cast<int>(base->level))
            base = &row;
        if (row.level == PromptLevel::L1) {
            base = &row;
            break;
        }
    }
    if (base != nullptr && *base->mean_wait_s > 0.0) {
        for (AblationRow& row : rows) {
            if (!row.failed && row.mean_wait_s) row.wait_ratio = *row.mean_wait_s / *base->mean_wait_s;
        }
    }
    return rows;
}

namespace {

std::string format_double(double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", value);
    return std::string(buf);
}

std::string cell_or_empty(const std::optional<double>& value) {
    return value ? format_double(*value) : std::string();
}

std::string stats_cells(const MetricStats& all, const MetricStats& emergency) {
    return std::to_string(all.count) + "," + cell_or_empty(all.mean_travel_time_s) + "," +
           cell_or_empty(all.mean_waiting_time_s) + "," + cell_or_empty(all.mean_speed_mps) + "," +
           std::to_string(emergency.count) + "," + cell_or_empty(emergency.mean_travel_time_s) +
           "," + cell_or_empty(emergency.mean_waiting_time_s) + "," +
           cell_or_empty(emergency.mean_speed_mps);
}

}  // namespace

std::string metrics_csv_header() {
    return "scenario,policy,seed,n_vehicles,mean_travel_s,mean_wait_s,mean_speed_mps,"
           "emv_n,emv_travel_s,emv_wait_s,emv_speed_mps";
}

std::string metrics_csv_row(const EpisodeResult& episode) {
    return episode.scenario + "," + episode.policy + "," + std::to_string(episode.seed) + "," +
           stats_cells(episode.metrics.all, episode.metrics.emergency);
}

std::string metrics_csv_row(const CellSummary& cell) {
    if (cell.failed) {
        return cell.scenario + "," + cell.policy + "," + std::to_string(cell.base_seed) +
               ",failed,,,,,,,";
    }
    return cell.scenario + "," + cell.policy + "," + std::to_string(cell.base_seed) + "," +
           stats_cells(cell.all, cell.emergency);
}

std::string ablation_csv_header() {
    return "level,episodes,n_vehicles,mean_wait_s,wait_ratio";
}

std::string ablation_csv_row(const AblationRow& row) {
    if (row.failed) return std::to_string(static_cast<int>(row.level)) + ",failed,,,";
    return std::to_string(static_cast<int>(row.level)) + "," + std::to_string(row.episodes) + "," +
           std::to_string(row.n_vehicles) + "," + cell_or_empty(row.mean_wait_s) + "," +
           cell_or_empty(row.wait_ratio);
}

EpisodeResult run_case(const std::string& name) {
    SimConfig sim_cfg;
    sim_cfg.arrival_rate_vps = {};
    sim_cfg.emergency_prob = 0.0;
    sim_cfg.episode_duration_s = 15;  // three review slots

    Simulation sim(sim_cfg, 1);
    PhaseId pinned = 0;
    bool drop_e0 = false;

    const auto stage_balanced = [&sim] {
        sim.seed_queue(0, 2);
        sim.seed_queue(1, 4);
        sim.seed_queue(2, 2);
        sim.seed_queue(3, 4);
        sim.seed_queue(4, 2);
        sim.seed_queue(5, 2);
        sim.seed_queue(6, 2);
        sim.seed_queue(7, 2);
    };

    if (name == "case1") {
        // A sound proposal: phase 1 holds the longest queues and clean data.
        stage_balanced();
        pinned = 1;
    } else if (name == "case2") {
        // An emergency vehicle is third in line on E3_s while phase 0 is proposed.
        stage_balanced();
        sim.seed_queue(7, 1, true);
        pinned = 0;
    } else if (name == "case3") {
        // Both E0 packets are dropped and E3_s holds 21 vehicles; phase 0 is
        // proposed on missing data.
        sim.seed_queue(0, 2);
        sim.seed_queue(1, 3);
        sim.seed_queue(2, 2);
        sim.seed_queue(3, 3);
        sim.seed_queue(7, 21);
        drop_e0 = true;
        pinned = 0;
    } else {
        throw ConfigError("unknown case '" + name + "'; expected case1, case2, or case3");
    }

    ScriptedOracleBackend backend;
    const RefinerConfig refiner_cfg;

    EpisodeResult episode;
    episode.scenario = name;
    episode.policy = "illm";
    episode.seed = 1;

    Observation obs = sim.observe_instantaneous();
    long long slot = 0;
    while (sim.clock_s() < sim_cfg.episode_duration_s) {
        DegradedObservation deg;
        deg.sv = obs.sv;
        if (drop_e0) {
            for (MovementId m : {0, 1}) {
                for (int c = 0; c < 4; ++c) {
                    deg.sv[static_cast<std::size_t>(m)][static_cast<std::size_t>(c)] = 0.0;
                    deg.loss_mask[static_cast<std::size_t>(m)][static_cast<std::size_t>(c)] = true;
                }
            }
        }

        SlotRecord rec;
        rec.slot = slot;
        rec.true_obs_digest = observation_digest(obs);
        rec.degraded = deg;
        rec.rl_action = pinned;
        rec.refinement = refine(backend, deg, pinned, sim.emergency_present(), refiner_cfg, slot);
        rec.executed_action = rec.refinement->executed_action;

        const SlotOutcome out = sim.advance_slot(rec.executed_action);
        rec.reward = out.reward;
        rec.arrivals = out.vehicles_arrived;
        rec.departures = out.vehicles_discharged;
        episode.slots.push_back(std::move(rec));
        obs = out.true_observation;
        ++slot;
    }

    episode.spawned = sim.vehicles_spawned();
    for (const Vehicle& v : sim.departed()) {
        VehicleRecord r;
        r.id = v.id;
        r.movement = v.movement;
        r.emergency = v.is_emergency;
        r.t_arrival = v.t_arrival;
        r.t_depart = *v.t_depart;
        r.travel_s = *v.t_depart - v.t_arrival;
        r.wait_s = v.waiting_s;
        r.speed_mps = sim_cfg.lane_length_m / r.travel_s;
        episode.vehicles.push_back(r);
    }
    episode.metrics = sim.metrics_snapshot();
    return episode;
}

}  // namespace illmtsc
