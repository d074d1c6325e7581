#include "illmtsc/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <utility>

namespace illmtsc {

void PpoConfig::validate() const {
    if (gamma <= 0.0 || gamma >= 1.0) throw ConfigError("PpoConfig.gamma must be in (0,1)");
    if (gae_lambda < 0.0 || gae_lambda > 1.0) throw ConfigError("PpoConfig.gae_lambda must be in [0,1]");
    if (clip_eps <= 0.0) throw ConfigError("PpoConfig.clip_eps must be positive");
    if (value_coef < 0.0) throw ConfigError("PpoConfig.value_coef must be >= 0");
    if (entropy_coef < 0.0) throw ConfigError("PpoConfig.entropy_coef must be >= 0");
    if (learning_rate <= 0.0) throw ConfigError("PpoConfig.learning_rate must be positive");
    if (rollout_slots <= 0) throw ConfigError("PpoConfig.rollout_slots must be positive");
    if (epochs_per_rollout <= 0) throw ConfigError("PpoConfig.epochs_per_rollout must be positive");
    if (minibatch <= 0) throw ConfigError("PpoConfig.minibatch must be positive");
    if (total_slots < 0) throw ConfigError("PpoConfig.total_slots must be >= 0");
}

NetworkWeights NetworkWeights::init(std::uint64_t seed) {
    NetworkWeights w;
    Rng rng(seed);
    w.policy.init_glorot(rng);
    w.value.init_glorot(rng);
    w.policy_m.assign(w.policy.param_count(), 0.0);
    w.policy_v.assign(w.policy.param_count(), 0.0);
    w.value_m.assign(w.value.param_count(), 0.0);
    w.value_v.assign(w.value.param_count(), 0.0);
    w.adam_step = 0;
    return w;
}

std::vector<double> flatten_state(const std::array<std::array<double, 5>, kNumMovements>& sv) {
    // divisors sized to the physical ranges: free-flow speed ~14 m/s, lane
    // 150 m, and a 20-vehicle queue treated as full scale
    static constexpr std::array<double, 5> kScale = {15.0, 1.0, 150.0, 20.0, 1.0};
    std::vector<double> flat;
    flat.reserve(kObsFlatSize);
    for (int m = 0; m < kNumMovements; ++m) {
        for (int c = 0; c < 5; ++c) {
            flat.push_back(sv[static_cast<std::size_t>(m)][static_cast<std::size_t>(c)] /
                           kScale[static_cast<std::size_t>(c)]);
        }
    }
    return flat;
}

std::array<double, kNumPhases> softmax(const std::array<double, kNumPhases>& logits) {
    std::array<double, kNumPhases> probs{};
    double max_logit = logits[0];
    for (double v : logits) max_logit = std::max(max_logit, v);
    double sum = 0.0;
    for (int k = 0; k < kNumPhases; ++k) {
        probs[static_cast<std::size_t>(k)] = std::exp(logits[static_cast<std::size_t>(k)] - max_logit);
        sum += probs[static_cast<std::size_t>(k)];
    }
    for (double& p : probs) p /= sum;
    return probs;
}

namespace {

std::array<double, kNumPhases> to_logit_array(const std::vector<double>& v) {
    std::array<double, kNumPhases> out{};
    for (int k = 0; k < kNumPhases; ++k) out[static_cast<std::size_t>(k)] = v[static_cast<std::size_t>(k)];
    return out;
}

}  // namespace

std::array<double, kNumPhases> policy_forward(const NetworkWeights& weights,
                                              const std::vector<double>& obs_flat) {
    return softmax(to_logit_array(weights.policy.forward(obs_flat)));
}

double value_forward(const NetworkWeights& weights, const std::vector<double>& obs_flat) {
    return weights.value.forward(obs_flat)[0];
}

int categorical_sample(const std::array<double, kNumPhases>& probs, Rng& rng) {
    const double u = rng.uniform();
    double cum = 0.0;
    for (int k = 0; k < kNumPhases; ++k) {
        cum += probs[static_cast<std::size_t>(k)];
        if (u < cum) return k;
    }
    return kNumPhases - 1;
}

void compute_gae(RolloutBuffer& buffer, double gamma, double gae_lambda) {
    const std::size_t n = buffer.size();
    if (n == 0) throw std::invalid_argument("compute_gae: empty buffer");
    if (buffer.values.size() != n || buffer.dones.size() != n || buffer.obs.size() != n ||
        buffer.actions.size() != n || buffer.logp_old.size() != n) {
        throw std::invalid_argument("compute_gae: buffer sequences have unequal lengths");
    }
    buffer.advantages.assign(n, 0.0);
    buffer.return_targets.assign(n, 0.0);
    double carry = 0.0;
    for (std::size_t t = n; t-- > 0;) {
        const double not_done = 1.0 - buffer.dones[t];
        const double v_next = t + 1 < n ? buffer.values[t + 1] : buffer.bootstrap_value;
        const double delta = buffer.rewards[t] + gamma * v_next * not_done - buffer.values[t];
        carry = delta + gamma * gae_lambda * not_done * carry;
        buffer.advantages[t] = carry;
        buffer.return_targets[t] = carry + buffer.values[t];
    }
}

PpoStats ppo_objective(const std::vector<PpoSample>& batch, const Mlp& policy, const Mlp& value,
                       const PpoConfig& cfg, std::vector<double>& policy_grad,
                       std::vector<double>& value_grad) {
    if (batch.empty()) throw std::invalid_argument("ppo_objective: empty batch");
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    PpoStats stats;
    for (const PpoSample& sample : batch) {
        Mlp::Trace policy_trace;
        const auto probs = softmax(to_logit_array(policy.forward_trace(*sample.obs, policy_trace)));
        const int a = sample.action;
        if (!valid_phase(a)) throw std::invalid_argument("ppo_objective: action out of range");

        const double logp = std::log(probs[static_cast<std::size_t>(a)]);
        double log_ratio = logp - sample.logp_old;
        bool clamped = false;
        if (std::abs(log_ratio) > 20.0) {
            log_ratio = std::clamp(log_ratio, -20.0, 20.0);
            clamped = true;
            ++stats.clamped_ratios;
        }
        const double ratio = std::exp(log_ratio);
        const double clipped = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
        const double s_plain = ratio * sample.advantage;
        const double s_clip = clipped * sample.advantage;
        stats.policy_term += std::min(s_plain, s_clip);
        // the clipped branch wins only when the ratio sits outside the clip
        // window, where its derivative is zero
        const double d_surr_d_ratio = (!clamped && s_plain <= s_clip) ? sample.advantage : 0.0;

        double entropy = 0.0;
        for (double p : probs) entropy -= p * std::log(p);
        stats.entropy += entropy;

        std::vector<double> d_logits(kNumPhases, 0.0);
        for (int k = 0; k < kNumPhases; ++k) {
            const double pk = probs[static_cast<std::size_t>(k)];
            const double indicator = k == a ? 1.0 : 0.0;
            const double d_logp = indicator - pk;
            const double d_entropy = -pk * (std::log(pk) + entropy);
            d_logits[static_cast<std::size_t>(k)] =
                inv_n * (-d_surr_d_ratio * ratio * d_logp - cfg.entropy_coef * d_entropy);
        }
        policy.backward(policy_trace, d_logits, policy_grad);

        Mlp::Trace value_trace;
        const double v = value.forward_trace(*sample.obs, value_trace)[0];
        const double residual = v - sample.return_target;
        stats.value_loss += residual * residual;
        std::vector<double> d_value = {inv_n * cfg.value_coef * 2.0 * residual};
        value.backward(value_trace, d_value, value_grad);
    }
    stats.policy_term *= inv_n;
    stats.value_loss *= inv_n;
    stats.entropy *= inv_n;
    stats.loss = -stats.policy_term + cfg.value_coef * stats.value_loss -
                 cfg.entropy_coef * stats.entropy;
    return stats;
}

void adam_update(std::vector<double>& params, const std::vector<double>& grad,
                 std::vector<double>& m, std::vector<double>& v, long long step, double lr) {
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;
    if (params.size() != grad.size() || params.size() != m.size() || params.size() != v.size()) {
        throw std::invalid_argument("adam_update: buffer size mismatch");
    }
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * grad[i];
        v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * grad[i] * grad[i];
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + kEps);
    }
}

SimEnv::SimEnv(const SimConfig& cfg) : cfg_(cfg) {}

std::vector<double> SimEnv::reset(std::uint64_t seed) {
    sim_ = std::make_unique<Simulation>(cfg_, seed);
    return flatten_state(sim_->observe_instantaneous().sv);
}

std::pair<std::vector<double>, double> SimEnv::step(int action) {
    SlotOutcome out = sim_->advance_slot(action);
    return {flatten_state(out.true_observation.sv), out.reward};
}

bool SimEnv::done() const {
    return sim_->clock_s() >= cfg_.episode_duration_s;
}

TrainResult train(const EnvFactory& env_factory, const PpoConfig& cfg) {
    cfg.validate();
    TrainResult result;
    result.weights = NetworkWeights::init(Rng::derive(cfg.seed, 0));
    result.weights.cfg = cfg;
    NetworkWeights& w = result.weights;

    const long long n_rollouts = cfg.total_slots / cfg.rollout_slots;
    if (n_rollouts == 0) return result;

    Rng action_rng(Rng::derive(cfg.seed, 1));
    Rng shuffle_rng(Rng::derive(cfg.seed, 2));
    std::uint64_t episode_counter = 0;
    auto env = env_factory();
    std::vector<double> obs = env->reset(Rng::derive(cfg.seed, 1000 + episode_counter++));
    double episode_return = 0.0;

    std::vector<double> policy_grad(w.policy.param_count());
    std::vector<double> value_grad(w.value.param_count());

    for (long long rollout = 0; rollout < n_rollouts; ++rollout) {
        RolloutBuffer buf;
        double reward_sum = 0.0;
        for (int t = 0; t < cfg.rollout_slots; ++t) {
            const auto probs = policy_forward(w, obs);
            const double v = value_forward(w, obs);
            const int a = categorical_sample(probs, action_rng);
            auto [next_obs, r] = env->step(a);
            buf.obs.push_back(std::move(obs));
            buf.actions.push_back(a);
            buf.logp_old.push_back(std::log(probs[static_cast<std::size_t>(a)]));
            buf.rewards.push_back(r);
            buf.values.push_back(v);
            reward_sum += r;
            episode_return += r;
            if (env->done()) {
                buf.dones.push_back(1.0);
                result.episode_returns.push_back(episode_return);
                episode_return = 0.0;
                obs = env->reset(Rng::derive(cfg.seed, 1000 + episode_counter++));
            } else {
                buf.dones.push_back(0.0);
                obs = std::move(next_obs);
            }
        }
        buf.bootstrap_value = buf.dones.back() == 1.0 ? 0.0 : value_forward(w, obs);
        compute_gae(buf, cfg.gamma, cfg.gae_lambda);

        // normalized once per rollout, before any update epoch
        double mean = 0.0;
        for (double a : buf.advantages) mean += a;
        mean /= static_cast<double>(buf.size());
        double var = 0.0;
        for (double a : buf.advantages) var += (a - mean) * (a - mean);
        const double std_dev = std::sqrt(var / static_cast<double>(buf.size()));
        for (double& a : buf.advantages) a = (a - mean) / (std_dev + 1e-8);

        result.learning_curve.push_back(reward_sum / static_cast<double>(cfg.rollout_slots));

        std::vector<std::size_t> order(buf.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        int rollout_clamped = 0;
        for (int epoch = 0; epoch < cfg.epochs_per_rollout; ++epoch) {
            for (std::size_t i = order.size(); i-- > 1;) {
                const std::size_t j = shuffle_rng.uniform_int(i + 1);
                std::swap(order[i], order[j]);
            }
            for (std::size_t start = 0; start < order.size();
                 start += static_cast<std::size_t>(cfg.minibatch)) {
                const std::size_t stop =
                    std::min(order.size(), start + static_cast<std::size_t>(cfg.minibatch));
                std::vector<PpoSample> batch;
                batch.reserve(stop - start);
                for (std::size_t k = start; k < stop; ++k) {
                    const std::size_t idx = order[k];
                    batch.push_back({&buf.obs[idx], buf.actions[idx], buf.logp_old[idx],
                                     buf.advantages[idx], buf.return_targets[idx]});
                }
                std::fill(policy_grad.begin(), policy_grad.end(), 0.0);
                std::fill(value_grad.begin(), value_grad.end(), 0.0);
                PpoStats stats = ppo_objective(batch, w.policy, w.value, cfg, policy_grad, value_grad);
                if (!std::isfinite(stats.loss)) {
                    throw TrainingError(
                        "train: non-finite loss " + std::to_string(stats.loss) + " at rollout " +
                        std::to_string(rollout) + " epoch " + std::to_string(epoch) +
                        " update " + std::to_string(w.adam_step) +
                        " (policy_term=" + std::to_string(stats.policy_term) +
                        ", value_loss=" + std::to_string(stats.value_loss) +
                        ", entropy=" + std::to_string(stats.entropy) + ")");
                }
                rollout_clamped += stats.clamped_ratios;
                ++w.adam_step;
                adam_update(w.policy.params(), policy_grad, w.policy_m, w.policy_v, w.adam_step,
                            cfg.learning_rate);
                adam_update(w.value.params(), value_grad, w.value_m, w.value_v, w.adam_step,
                            cfg.learning_rate);
            }
        }
        if (rollout_clamped > 0) {
            std::fprintf(stderr, "warning: rollout %lld clamped %d policy ratios (|log ratio| > 20)\n",
                         rollout, rollout_clamped);
            result.total_clamped_ratios += rollout_clamped;
        }
    }
    return result;
}

}  // namespace illmtsc
