#include "illmtsc/checkpoint.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <vector>

#include "json.hpp"

namespace illmtsc {

namespace {

constexpr int kFormatVersion = 1;

nlohmann::json encode_doubles(const std::vector<double>& values) {
    nlohmann::json arr = nlohmann::json::array();
    char buf[40];
    for (double v : values) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        arr.push_back(std::string(buf));
    }
    return arr;
}

std::vector<double> decode_doubles(const nlohmann::json& arr, const std::string& field) {
    if (!arr.is_array()) throw CheckpointFormatError("checkpoint field " + field + " is not an array");
    std::vector<double> values;
    values.reserve(arr.size());
    for (const auto& item : arr) {
        if (!item.is_string()) {
            throw CheckpointFormatError("checkpoint field " + field + " holds a non-string entry");
        }
        const std::string& s = item.get_ref<const std::string&>();
        char* end = nullptr;
        const double v = std::strtod(s.c_str(), &end);
        if (end != s.c_str() + s.size() || s.empty()) {
            throw CheckpointFormatError("checkpoint field " + field + " holds unparseable number '" +
                                        s + "'");
        }
        if (!std::isfinite(v)) {
            throw CheckpointFormatError("checkpoint field " + field + " holds non-finite value '" + s +
                                        "'");
        }
        values.push_back(v);
    }
    return values;
}

nlohmann::json encode_cfg(const PpoConfig& cfg) {
    return nlohmann::json{{"gamma", cfg.gamma},
                          {"gae_lambda", cfg.gae_lambda},
                          {"clip_eps", cfg.clip_eps},
                          {"value_coef", cfg.value_coef},
                          {"entropy_coef", cfg.entropy_coef},
                          {"learning_rate", cfg.learning_rate},
                          {"rollout_slots", cfg.rollout_slots},
                          {"epochs_per_rollout", cfg.epochs_per_rollout},
                          {"minibatch", cfg.minibatch},
                          {"total_slots", cfg.total_slots},
                          {"seed", cfg.seed}};
}

PpoConfig decode_cfg(const nlohmann::json& j) {
    PpoConfig cfg;
    cfg.gamma = j.at("gamma").get<double>();
    cfg.gae_lambda = j.at("gae_lambda").get<double>();
    cfg.clip_eps = j.at("clip_eps").get<double>();
    cfg.value_coef = j.at("value_coef").get<double>();
    cfg.entropy_coef = j.at("entropy_coef").get<double>();
    cfg.learning_rate = j.at("learning_rate").get<double>();
    cfg.rollout_slots = j.at("rollout_slots").get<int>();
    cfg.epochs_per_rollout = j.at("epochs_per_rollout").get<int>();
    cfg.minibatch = j.at("minibatch").get<int>();
    cfg.total_slots = j.at("total_slots").get<long long>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

void check_shape(const std::vector<int>& stored, const std::vector<int>& expected,
                 const std::string& which) {
    if (stored != expected) {
        std::string msg = "checkpoint " + which + " architecture [";
        for (std::size_t i = 0; i < stored.size(); ++i) {
            if (i) msg += ",";
            msg += std::to_string(stored[i]);
        }
        msg += "] does not match this build's [";
        for (std::size_t i = 0; i < expected.size(); ++i) {
            if (i) msg += ",";
            msg += std::to_string(expected[i]);
        }
        msg += "]";
        throw CheckpointShapeError(msg);
    }
}

void assign_sized(std::vector<double>& dst, std::vector<double> src, std::size_t expected,
                  const std::string& field) {
    if (src.size() != expected) {
        throw CheckpointShapeError("checkpoint field " + field + " has " +
                                   std::to_string(src.size()) + " entries, expected " +
                                   std::to_string(expected));
    }
    dst = std::move(src);
}

}  // namespace

void save_checkpoint(const NetworkWeights& weights, const std::string& path) {
    nlohmann::json doc;
    doc["format_version"] = kFormatVersion;
    doc["architecture"] = {{"policy", weights.policy.layer_sizes()},
                           {"value", weights.value.layer_sizes()}};
    doc["policy_params"] = encode_doubles(weights.policy.params());
    doc["value_params"] = encode_doubles(weights.value.params());
    doc["adam"] = {{"step", weights.adam_step},
                   {"policy_m", encode_doubles(weights.policy_m)},
                   {"policy_v", encode_doubles(weights.policy_v)},
                   {"value_m", encode_doubles(weights.value_m)},
                   {"value_v", encode_doubles(weights.value_v)}};
    doc["ppo_cfg"] = encode_cfg(weights.cfg);

    std::ofstream out(path);
    if (!out) throw CheckpointFormatError("cannot open " + path + " for writing");
    out << doc.dump(2) << "\n";
    if (!out) throw CheckpointFormatError("failed writing checkpoint to " + path);
}

NetworkWeights load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CheckpointFormatError("cannot open " + path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointFormatError("malformed checkpoint " + path + ": " + e.what());
    }

    try {
        const int version = doc.at("format_version").get<int>();
        if (version != kFormatVersion) {
            throw CheckpointVersionError("checkpoint format version " + std::to_string(version) +
                                         ", expected " + std::to_string(kFormatVersion));
        }
        NetworkWeights w;
        check_shape(doc.at("architecture").at("policy").get<std::vector<int>>(),
                    w.policy.layer_sizes(), "policy");
        check_shape(doc.at("architecture").at("value").get<std::vector<int>>(),
                    w.value.layer_sizes(), "value");
        assign_sized(w.policy.params(), decode_doubles(doc.at("policy_params"), "policy_params"),
                     w.policy.param_count(), "policy_params");
        assign_sized(w.value.params(), decode_doubles(doc.at("value_params"), "value_params"),
                     w.value.param_count(), "value_params");
        const auto& adam = doc.at("adam");
        w.adam_step = adam.at("step").get<long long>();
        assign_sized(w.policy_m, decode_doubles(adam.at("policy_m"), "adam.policy_m"),
                     w.policy.param_count(), "adam.policy_m");
        assign_sized(w.policy_v, decode_doubles(adam.at("policy_v"), "adam.policy_v"),
                     w.policy.param_count(), "adam.policy_v");
        assign_sized(w.value_m, decode_doubles(adam.at("value_m"), "adam.value_m"),
                     w.value.param_count(), "adam.value_m");
        assign_sized(w.value_v, decode_doubles(adam.at("value_v"), "adam.value_v"),
                     w.value.param_count(), "adam.value_v");
        w.cfg = decode_cfg(doc.at("ppo_cfg"));
        return w;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointFormatError("malformed checkpoint " + path + ": " + e.what());
    }
}

}  // namespace illmtsc
