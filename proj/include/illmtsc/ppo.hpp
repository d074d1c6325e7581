#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "illmtsc/mlp.hpp"
#include "illmtsc/movement.hpp"
#include "illmtsc/rng.hpp"
#include "illmtsc/sim.hpp"

namespace illmtsc {

struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PpoConfig {
    double gamma = 0.99;
    double gae_lambda = 0.9;
    double clip_eps = 0.2;
    double value_coef = 0.5;
    double entropy_coef = 0.01;
    double learning_rate = 3e-4;
    int rollout_slots = 1024;
    int epochs_per_rollout = 4;
    int minibatch = 64;
    long long total_slots = 102400;
    std::uint64_t seed = 0;

    void validate() const;
};

inline constexpr int kObsFlatSize = kNumMovements * 5;

// Policy head emits 4 phase logits; value head a scalar return estimate.
// Adam moment buffers are kept with the weights so training can resume from
// a checkpoint mid-run.
struct NetworkWeights {
    Mlp policy{{kObsFlatSize, 64, 64, kNumPhases}};
    Mlp value{{kObsFlatSize, 64, 64, 1}};
    std::vector<double> policy_m, policy_v;
    std::vector<double> value_m, value_v;
    long long adam_step = 0;
    PpoConfig cfg;

    static NetworkWeights init(std::uint64_t seed);
};

// Row-major flattening of the 8x5 state matrix with fixed input scales so
// every entry lands roughly in [-1, 1] and the tanh layers stay responsive.
std::vector<double> flatten_state(const std::array<std::array<double, 5>, kNumMovements>& sv);

std::array<double, kNumPhases> softmax(const std::array<double, kNumPhases>& logits);

std::array<double, kNumPhases> policy_forward(const NetworkWeights& weights,
                                              const std::vector<double>& obs_flat);

double value_forward(const NetworkWeights& weights, const std::vector<double>& obs_flat);

int categorical_sample(const std::array<double, kNumPhases>& probs, Rng& rng);

inline double td_advantage(double r_next, double v_s, double v_s_next, double gamma) {
    return r_next + gamma * v_s_next - v_s;
}

struct RolloutBuffer {
    std::vector<std::vector<double>> obs;
    std::vector<int> actions;
    std::vector<double> logp_old;
    std::vector<double> rewards;
    std::vector<double> values;
    std::vector<double> dones;  // 1.0 when the episode ended on this slot
    double bootstrap_value = 0.0;

    std::vector<double> advantages;
    std::vector<double> return_targets;

    std::size_t size() const { return rewards.size(); }
};

// Fills advantages and return targets by the backward trace-decay recursion;
// gae_lambda = 0 reduces to the one-step temporal-difference advantage.
void compute_gae(RolloutBuffer& buffer, double gamma, double gae_lambda);

struct PpoSample {
    const std::vector<double>* obs = nullptr;
    int action = 0;
    double logp_old = 0.0;
    double advantage = 0.0;
    double return_target = 0.0;
};

struct PpoStats {
    double loss = 0.0;
    double policy_term = 0.0;  // mean clipped surrogate (maximized)
    double value_loss = 0.0;
    double entropy = 0.0;
    int clamped_ratios = 0;  // |log ratio| > 20, ratio clamped, gradient dropped
};

// Minimized objective: -policy_term + value_coef * value_loss
// - entropy_coef * entropy. Accumulates analytic gradients into policy_grad
// and value_grad (sized to the respective param counts, zeroed by caller).
PpoStats ppo_objective(const std::vector<PpoSample>& batch, const Mlp& policy, const Mlp& value,
                       const PpoConfig& cfg, std::vector<double>& policy_grad,
                       std::vector<double>& value_grad);

// Adaptive moment estimation with bias correction; step is the 1-based update
// count shared by both networks.
void adam_update(std::vector<double>& params, const std::vector<double>& grad,
                 std::vector<double>& m, std::vector<double>& v, long long step, double lr);

// Episode interface the trainer drives; observations arrive already flattened.
class RolloutEnv {
public:
    virtual ~RolloutEnv() = default;
    virtual std::vector<double> reset(std::uint64_t seed) = 0;
    virtual std::pair<std::vector<double>, double> step(int action) = 0;
    virtual bool done() const = 0;
};

// Training environment over the intersection simulator: undegraded
// observations, one episode per simulator lifetime.
class SimEnv : public RolloutEnv {
public:
    explicit SimEnv(const SimConfig& cfg);
    std::vector<double> reset(std::uint64_t seed) override;
    std::pair<std::vector<double>, double> step(int action) override;
    bool done() const override;

private:
    SimConfig cfg_;
    std::unique_ptr<Simulation> sim_;
};

using EnvFactory = std::function<std::unique_ptr<RolloutEnv>()>;

struct TrainResult {
    NetworkWeights weights;
    // mean per-slot reward of each rollout, in collection order
    std::vector<double> learning_curve;
    std::vector<double> episode_returns;
    int total_clamped_ratios = 0;
};

TrainResult train(const EnvFactory& env_factory, const PpoConfig& cfg);

}  // namespace illmtsc
