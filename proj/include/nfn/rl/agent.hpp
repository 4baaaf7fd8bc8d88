#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "nfn/common.hpp"
#include "nfn/network.hpp"
#include "nfn/neurogenesis.hpp"
#include "nfn/rl/env.hpp"
#include "nfn/rl/mlp.hpp"
#include "nfn/rl/replay.hpp"

namespace nfn::rl {

// Differentiable function approximator usable as a dueling head or trunk.
// forward_train/backward/apply_step form one training step; infer is pure.
class Net {
 public:
  virtual ~Net() = default;
  virtual int in_dim() const = 0;
  virtual int out_dim() const = 0;
  virtual Matrix forward_train(const Matrix& X, Rng& rng) = 0;
  virtual Matrix infer(const Matrix& X) const = 0;
  // Accumulates parameter gradients against the last forward_train, returns
  // d_input.
  virtual Matrix backward(const Matrix& d_y) = 0;
  // Optimizer step plus housekeeping (width clamps, neurogenesis).
  virtual void apply_step(Rng& rng) = 0;
  virtual void copy_from(const Net& other) = 0;
  virtual std::unique_ptr<Net> clone() const = 0;
  // Cheap digest of all mutable state; evaluation must not change it.
  virtual uint64_t fingerprint() const = 0;
  // The underlying fuzzy stack, or nullptr for non-NFN nets.
  virtual const NfnStack* nfn_stack() const { return nullptr; }
};

std::unique_ptr<Net> make_nfn_net(NfnStack stack, double learning_rate,
                                  NeurogenesisConfig neuro);
std::unique_ptr<Net> make_mlp_net(Mlp mlp, double learning_rate);

// Dueling aggregation Q(s, a) = V(s) + A(s, a) - mean_a A(s, a). The value
// net must have out_dim 1. With a trunk, both heads read its output;
// otherwise they read the raw state.
class DuelModel {
 public:
  DuelModel(std::unique_ptr<Net> value, std::unique_ptr<Net> advantage,
            std::unique_ptr<Net> trunk = nullptr);
  DuelModel(const DuelModel& other);
  DuelModel& operator=(const DuelModel& other);

  int state_dim() const;
  int action_count() const;

  Matrix q_values(const Matrix& states) const;

  // One MSE step on the taken actions only; returns the loss.
  double train_step(const Matrix& states, const std::vector<int>& actions,
                    const std::vector<double>& targets, Rng& rng);

  void sync_from(const DuelModel& online);
  uint64_t fingerprint() const;

  const Net& value_net() const { return *value_; }
  const Net& advantage_net() const { return *advantage_; }
  const Net* trunk_net() const { return trunk_.get(); }

 private:
  std::unique_ptr<Net> value_;
  std::unique_ptr<Net> advantage_;
  std::unique_ptr<Net> trunk_;
};

// y_b = r_b + gamma * (1 - terminal_b) * Qt(b, argmax_a Qo(b, a)): the online
// net picks the action, the target net evaluates it.
std::vector<double> ddql_targets(const Matrix& q_next_online, const Matrix& q_next_target,
                                 const std::vector<double>& rewards,
                                 const std::vector<uint8_t>& terminals, double gamma);

// One double-DQL update on a replay batch; returns the loss.
double ddql_update(DuelModel& online, const DuelModel& target,
                   const std::vector<const Transition*>& batch, double gamma, Rng& rng);

// rate = 1 is uniform random; rate = 0 is greedy and consumes no randomness.
int act_epsilon_greedy(const DuelModel& model, const std::vector<double>& observation,
                       double rate, Rng& rng);

// Greedy rollout; returns the undiscounted episode return.
double run_episode_greedy(const DuelModel& model, Environment& env, uint64_t seed);
double run_episode_scripted(Environment& env, int (*policy)(const std::vector<double>&),
                            uint64_t seed);

struct RlConfig {
  int epochs = 40;
  int steps_per_epoch = 500;
  int eval_episodes = 25;
  int batch_size = 32;
  size_t memory = 10000;
  int frames = 1;  // action repeat
  double gamma = 0.95;
  int target_sync = 1000;  // updates between hard target copies
  int warmup = 500;        // transitions before updates start
  uint64_t seed = 1;
  std::string metrics_path;  // per-epoch JSONL; empty disables
};

struct EpochStats {
  int epoch = 0;
  double mean = 0.0;
  double sd = 0.0;
  double slope = 0.0;  // least-squares slope of epoch means so far
  double exploration = 1.0;
  int64_t env_steps = 0;
};

struct RlResult {
  std::vector<EpochStats> epochs;
  double best_mean = -1e300;
  double final_mean = 0.0;
  int64_t env_steps = 0;
  int64_t updates = 0;
};

// Epsilon-greedy double-DQL with annealed exploration
// (rate = max(0.1, 0.9999^updates)) and periodic greedy evaluation.
RlResult train_rl(DuelModel& online, DuelModel& target, Environment& env,
                  const RlConfig& config);

}  // namespace nfn::rl
