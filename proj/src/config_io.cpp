#include "illmtsc/config_io.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include "json.hpp"

namespace illmtsc {

namespace {

using Json = nlohmann::json;

void check_object(const Json& j, std::initializer_list<const char*> allowed,
                  const std::string& where) {
    if (!j.is_object()) throw ConfigError("config: " + where + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* key : allowed) known = known || it.key() == key;
        if (!known) throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
    }
}

template <class T>
void read_field(const Json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

SimConfig sim_from_json(const Json& j) {
    check_object(j,
                 {"slot_s", "yellow_s", "lane_length_m", "free_flow_speed_mps",
                  "vehicle_footprint_m", "saturation_headway_s", "arrival_rate_vps",
                  "emergency_prob", "episode_duration_s"},
                 "sim");
    SimConfig cfg;
    read_field(j, "slot_s", cfg.slot_s);
    read_field(j, "yellow_s", cfg.yellow_s);
    read_field(j, "lane_length_m", cfg.lane_length_m);
    read_field(j, "free_flow_speed_mps", cfg.free_flow_speed_mps);
    read_field(j, "vehicle_footprint_m", cfg.vehicle_footprint_m);
    read_field(j, "saturation_headway_s", cfg.saturation_headway_s);
    if (j.contains("arrival_rate_vps")) {
        const Json& rates = j.at("arrival_rate_vps");
        if (!rates.is_array() || rates.size() != kNumMovements)
            throw ConfigError("config: sim.arrival_rate_vps must list one rate per movement");
        for (int m = 0; m < kNumMovements; ++m)
            cfg.arrival_rate_vps[static_cast<std::size_t>(m)] = rates[m].get<double>();
    }
    read_field(j, "emergency_prob", cfg.emergency_prob);
    read_field(j, "episode_duration_s", cfg.episode_duration_s);
    return cfg;
}

ChannelConfig channel_from_json(const Json& j) {
    check_object(j, {"loss_prob", "noise_scale", "seed", "granularity"}, "channel");
    ChannelConfig cfg;
    read_field(j, "loss_prob", cfg.loss_prob);
    read_field(j, "noise_scale", cfg.noise_scale);
    read_field(j, "seed", cfg.seed);
    if (j.contains("granularity")) {
        const auto name = j.at("granularity").get<std::string>();
        if (name == "per_movement_packet")
            cfg.granularity = ChannelGranularity::PerMovementPacket;
        else if (name == "per_element")
            cfg.granularity = ChannelGranularity::PerElement;
        else
            throw ConfigError("config: unknown channel.granularity '" + name + "'");
    }
    return cfg;
}

PpoConfig ppo_from_json(const Json& j) {
    check_object(j,
                 {"gamma", "gae_lambda", "clip_eps", "value_coef", "entropy_coef", "learning_rate",
                  "rollout_slots", "epochs_per_rollout", "minibatch", "total_slots", "seed"},
                 "ppo");
    PpoConfig cfg;
    read_field(j, "gamma", cfg.gamma);
    read_field(j, "gae_lambda", cfg.gae_lambda);
    read_field(j, "clip_eps", cfg.clip_eps);
    read_field(j, "value_coef", cfg.value_coef);
    read_field(j, "entropy_coef", cfg.entropy_coef);
    read_field(j, "learning_rate", cfg.learning_rate);
    read_field(j, "rollout_slots", cfg.rollout_slots);
    read_field(j, "epochs_per_rollout", cfg.epochs_per_rollout);
    read_field(j, "minibatch", cfg.minibatch);
    read_field(j, "total_slots", cfg.total_slots);
    read_field(j, "seed", cfg.seed);
    return cfg;
}

ScenarioConfig scenario_from_json(const Json& j) {
    check_object(j, {"name", "comm", "sim", "channel"}, "scenario");
    ScenarioConfig cfg;
    read_field(j, "name", cfg.name);
    if (j.contains("comm")) {
        const auto name = j.at("comm").get<std::string>();
        if (name == "normal")
            cfg.comm = CommMode::Normal;
        else if (name == "degraded")
            cfg.comm = CommMode::Degraded;
        else
            throw ConfigError("config: unknown scenario.comm '" + name + "'");
    }
    if (j.contains("sim")) cfg.sim = sim_from_json(j.at("sim"));
    if (j.contains("channel")) cfg.channel = channel_from_json(j.at("channel"));
    return cfg;
}

FixedTimeConfig fixed_time_from_json(const Json& j) {
    check_object(j, {"phase_duration_s"}, "fixed_time");
    FixedTimeConfig cfg;
    read_field(j, "phase_duration_s", cfg.phase_duration_s);
    return cfg;
}

SotlConfig sotl_from_json(const Json& j) {
    check_object(j, {"threshold_veh_s", "min_green_s"}, "sotl");
    SotlConfig cfg;
    read_field(j, "threshold_veh_s", cfg.threshold_veh_s);
    read_field(j, "min_green_s", cfg.min_green_s);
    return cfg;
}

RefinerConfig refiner_from_json(const Json& j) {
    check_object(j, {"max_attempts", "prompt_level", "backend"}, "refiner");
    RefinerConfig cfg;
    read_field(j, "max_attempts", cfg.max_attempts);
    if (j.contains("prompt_level")) cfg.prompt_level = prompt_level_from_int(j.at("prompt_level").get<int>());
    if (j.contains("backend")) {
        const auto name = j.at("backend").get<std::string>();
        if (name == "scripted")
            cfg.backend = BackendKind::Scripted;
        else if (name == "http")
            cfg.backend = BackendKind::Http;
        else
            throw ConfigError("config: unknown refiner.backend '" + name + "'");
    }
    return cfg;
}

HttpBackendConfig http_from_json(const Json& j) {
    check_object(j, {"endpoint", "model", "temperature", "timeout_s", "api_key_env"}, "http");
    HttpBackendConfig cfg;
    read_field(j, "endpoint", cfg.endpoint);
    read_field(j, "model", cfg.model);
    read_field(j, "temperature", cfg.temperature);
    read_field(j, "timeout_s", cfg.timeout_s);
    read_field(j, "api_key_env", cfg.api_key_env);
    return cfg;
}

PolicyStackConfig policy_from_json(const Json& j) {
    check_object(j, {"kind", "label", "fixed_time", "sotl", "refiner", "http", "checkpoint_path"},
                 "policy");
    PolicyStackConfig cfg;
    if (j.contains("kind")) cfg.kind = policy_kind_from_name(j.at("kind").get<std::string>());
    read_field(j, "label", cfg.label);
    if (j.contains("fixed_time")) cfg.fixed_time = fixed_time_from_json(j.at("fixed_time"));
    if (j.contains("sotl")) cfg.sotl = sotl_from_json(j.at("sotl"));
    if (j.contains("refiner")) cfg.refiner = refiner_from_json(j.at("refiner"));
    if (j.contains("http")) cfg.http = http_from_json(j.at("http"));
    read_field(j, "checkpoint_path", cfg.checkpoint_path);
    return cfg;
}

Json parse_document(const std::string& text) {
    Json j = Json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config: not valid JSON");
    return j;
}

template <class Fn>
auto guarded(Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

}  // namespace

TrainFileConfig parse_train_config(const std::string& text) {
    return guarded([&] {
        const Json j = parse_document(text);
        check_object(j, {"sim", "ppo"}, "the train config");
        TrainFileConfig cfg;
        if (j.contains("sim")) cfg.sim = sim_from_json(j.at("sim"));
        if (j.contains("ppo")) cfg.ppo = ppo_from_json(j.at("ppo"));
        return cfg;
    });
}

ScenarioConfig parse_scenario_config(const std::string& text) {
    return guarded([&] {
        const Json j = parse_document(text);
        check_object(j, {"scenario"}, "the eval config");
        ScenarioConfig cfg;
        if (j.contains("scenario")) cfg = scenario_from_json(j.at("scenario"));
        return cfg;
    });
}

PolicyStackConfig parse_policy_config(const std::string& text) {
    return guarded([&] { return policy_from_json(parse_document(text)); });
}

CompareFileConfig parse_compare_config(const std::string& text) {
    return guarded([&] {
        const Json j = parse_document(text);
        check_object(j, {"scenarios", "policies", "seeds"}, "the compare config");
        CompareFileConfig cfg;
        if (!j.contains("scenarios") || !j.contains("policies") || !j.contains("seeds"))
            throw ConfigError("config: the compare config needs scenarios, policies, and seeds");
        for (const Json& s : j.at("scenarios")) cfg.scenarios.push_back(scenario_from_json(s));
        for (const Json& p : j.at("policies")) cfg.policies.push_back(policy_from_json(p));
        for (const Json& s : j.at("seeds")) cfg.seeds.push_back(s.get<std::uint64_t>());
        return cfg;
    });
}

TrainFileConfig load_train_config(const std::string& path) {
    return parse_train_config(slurp(path));
}

ScenarioConfig load_scenario_config(const std::string& path) {
    return parse_scenario_config(slurp(path));
}

CompareFileConfig load_compare_config(const std::string& path) {
    return parse_compare_config(slurp(path));
}

}  // namespace illmtsc
