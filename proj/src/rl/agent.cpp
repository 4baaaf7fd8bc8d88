#include "nfn/rl/agent.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "nfn/diagnostics.hpp"
#include "nfn/training.hpp"

namespace nfn::rl {

namespace {

uint64_t fnv1a(const void* data, size_t bytes, uint64_t h = 1469598103934665603ull) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

uint64_t fnv1a(const std::vector<double>& v, uint64_t h) {
  return v.empty() ? h : fnv1a(v.data(), v.size() * sizeof(double), h);
}

uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t x = a + 0x9E3779B97F4A7C15ull * (b + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

class NfnNet final : public Net {
 public:
  NfnNet(NfnStack stack, double lr, NeurogenesisConfig neuro)
      : stack_(std::move(stack)), adam_(lr), neuro_(neuro) {
    for (int k = 0; k < stack_.block_count(); ++k)
      states_.emplace_back(stack_.block(k).in_dim());
  }
  NfnNet(const NfnNet&) = default;

  int in_dim() const override { return stack_.in_dim(); }
  int out_dim() const override { return stack_.out_dim(); }

  Matrix forward_train(const Matrix& X, Rng& rng) override {
    return stack_.forward(X, rng, StructureForward::Hard, &tape_);
  }

  Matrix infer(const Matrix& X) const override { return stack_.infer(X); }

  Matrix backward(const Matrix& d_y) override {
    grads_ = stack_.backward(tape_, d_y);
    has_grads_ = true;
    return grads_.d_input;
  }

  void apply_step(Rng& rng) override {
    if (!has_grads_) throw UsageError("apply_step without accumulated gradients");
    std::vector<ParamBinding> params = bind_params(stack_, grads_);
    adam_.step(params);
    for (int k = 0; k < stack_.block_count(); ++k)
      stack_.block(k).layer().clamp_widths(neuro_.width_floor_factor);
    if (neuro_.epsilon > 0.0) {
      for (int k = 0; k < stack_.block_count(); ++k) {
        CompletenessReport report = completeness_from_tape(
            tape_.blocks[k], stack_.block(k).layer(), neuro_.epsilon);
        states_[k].observe(report, tape_.blocks[k].X);
        for (const SproutEvent& e : states_[k].sprout(stack_.block(k), k, neuro_, 0, rng))
          remap_after_growth(adam_, stack_, k, e.growth);
      }
    }
    has_grads_ = false;
  }

  void copy_from(const Net& other) override {
    const auto* src = dynamic_cast<const NfnNet*>(&other);
    if (!src) throw StructuralError("copy_from requires matching net types");
    stack_ = src->stack_;
    // Optimizer and accumulator state deliberately stays local: a target
    // copy needs behavior, not training state.
  }

  std::unique_ptr<Net> clone() const override { return std::make_unique<NfnNet>(*this); }

  const NfnStack* nfn_stack() const override { return &stack_; }

  uint64_t fingerprint() const override {
    uint64_t h = 1469598103934665603ull;
    for (int k = 0; k < stack_.block_count(); ++k) {
      const NfnBlock& b = stack_.block(k);
      h = fnv1a(b.layer().centers().data, h);
      h = fnv1a(b.layer().widths().data, h);
      h = fnv1a(b.bank().logits().data, h);
      h = fnv1a(b.head().W.data, h);
      h = fnv1a(b.head().b.data, h);
      h = fnv1a(b.head().cf, h);
      const int age = b.bank().noise_age();
      h = fnv1a(&age, sizeof age, h);
      const uint64_t version = b.version();
      h = fnv1a(&version, sizeof version, h);
    }
    const int64_t steps = adam_.step_count();
    h = fnv1a(&steps, sizeof steps, h);
    return h;
  }

 private:
  NfnStack stack_;
  Adam adam_;
  NeurogenesisConfig neuro_;
  std::vector<NeurogenesisState> states_;
  NfnStack::Tape tape_;
  NfnStack::Gradients grads_;
  bool has_grads_ = false;
};

class MlpNet final : public Net {
 public:
  MlpNet(Mlp mlp, double lr) : mlp_(std::move(mlp)), adam_(lr) {}
  MlpNet(const MlpNet&) = default;

  int in_dim() const override { return mlp_.in_dim(); }
  int out_dim() const override { return mlp_.out_dim(); }

  Matrix forward_train(const Matrix& X, Rng&) override { return mlp_.forward_train(X); }
  Matrix infer(const Matrix& X) const override { return mlp_.forward(X); }
  Matrix backward(const Matrix& d_y) override {
    Matrix dx = mlp_.backward(d_y);
    has_grads_ = true;
    return dx;
  }

  void apply_step(Rng&) override {
    if (!has_grads_) throw UsageError("apply_step without accumulated gradients");
    adam_.step(mlp_.bindings("mlp."));
    has_grads_ = false;
  }

  void copy_from(const Net& other) override {
    const auto* src = dynamic_cast<const MlpNet*>(&other);
    if (!src) throw StructuralError("copy_from requires matching net types");
    mlp_.copy_parameters_from(src->mlp_);
  }

  std::unique_ptr<Net> clone() const override { return std::make_unique<MlpNet>(*this); }

  uint64_t fingerprint() const override {
    uint64_t h = 1469598103934665603ull;
    for (const std::vector<double>* p : mlp_.parameters()) h = fnv1a(*p, h);
    const int64_t steps = adam_.step_count();
    h = fnv1a(&steps, sizeof steps, h);
    return h;
  }

 private:
  Mlp mlp_;
  Adam adam_;
  bool has_grads_ = false;
};

}  // namespace

std::unique_ptr<Net> make_nfn_net(NfnStack stack, double learning_rate,
                                  NeurogenesisConfig neuro) {
  return std::make_unique<NfnNet>(std::move(stack), learning_rate, neuro);
}

std::unique_ptr<Net> make_mlp_net(Mlp mlp, double learning_rate) {
  return std::make_unique<MlpNet>(std::move(mlp), learning_rate);
}

DuelModel::DuelModel(std::unique_ptr<Net> value, std::unique_ptr<Net> advantage,
                     std::unique_ptr<Net> trunk)
    : value_(std::move(value)), advantage_(std::move(advantage)), trunk_(std::move(trunk)) {
  if (!value_ || !advantage_) throw ConfigError("duel model needs value and advantage nets");
  if (value_->out_dim() != 1) throw StructuralError("value net must have out_dim 1");
  const int feed = trunk_ ? trunk_->out_dim() : value_->in_dim();
  if (value_->in_dim() != feed || advantage_->in_dim() != feed)
    throw StructuralError("duel heads must consume the trunk output (or the raw state)");
  if (advantage_->out_dim() < 2) throw StructuralError("advantage net needs >= 2 actions");
}

DuelModel::DuelModel(const DuelModel& other)
    : value_(other.value_->clone()),
      advantage_(other.advantage_->clone()),
      trunk_(other.trunk_ ? other.trunk_->clone() : nullptr) {}

DuelModel& DuelModel::operator=(const DuelModel& other) {
  value_ = other.value_->clone();
  advantage_ = other.advantage_->clone();
  trunk_ = other.trunk_ ? other.trunk_->clone() : nullptr;
  return *this;
}

int DuelModel::state_dim() const { return trunk_ ? trunk_->in_dim() : value_->in_dim(); }
int DuelModel::action_count() const { return advantage_->out_dim(); }

Matrix DuelModel::q_values(const Matrix& states) const {
  Matrix h = trunk_ ? trunk_->infer(states) : states;
  Matrix v = value_->infer(h);
  Matrix a = advantage_->infer(h);
  const int A = a.cols;
  Matrix q(a.rows, A);
  for (int b = 0; b < a.rows; ++b) {
    double mean = 0.0;
    for (int k = 0; k < A; ++k) mean += a(b, k);
    mean /= A;
    for (int k = 0; k < A; ++k) q(b, k) = v(b, 0) + a(b, k) - mean;
  }
  return q;
}

double DuelModel::train_step(const Matrix& states, const std::vector<int>& actions,
                             const std::vector<double>& targets, Rng& rng) {
  const int B = states.rows;
  if (static_cast<int>(actions.size()) != B || static_cast<int>(targets.size()) != B)
    throw StructuralError("train_step batch arrays disagree");
  Matrix h = trunk_ ? trunk_->forward_train(states, rng) : states;
  Matrix v = value_->forward_train(h, rng);
  Matrix a = advantage_->forward_train(h, rng);
  const int A = a.cols;

  double loss = 0.0;
  Matrix d_v(B, 1);
  Matrix d_a(B, A);
  for (int b = 0; b < B; ++b) {
    const int act = actions[b];
    if (act < 0 || act >= A) throw InputError("action index out of range in batch");
    double mean = 0.0;
    for (int k = 0; k < A; ++k) mean += a(b, k);
    mean /= A;
    const double q = v(b, 0) + a(b, act) - mean;
    const double e = q - targets[b];
    loss += e * e / B;
    // Loss touches only the taken action's Q value.
    const double dq = 2.0 * e / B;
    d_v(b, 0) = dq;
    for (int k = 0; k < A; ++k) d_a(b, k) = dq * ((k == act ? 1.0 : 0.0) - 1.0 / A);
  }
  if (!std::isfinite(loss)) throw TrainingError("Q loss became non-finite");

  Matrix d_h_value = value_->backward(d_v);
  Matrix d_h_adv = advantage_->backward(d_a);
  if (trunk_) {
    Matrix d_h(d_h_value.rows, d_h_value.cols);
    for (size_t i = 0; i < d_h.data.size(); ++i)
      d_h.data[i] = d_h_value.data[i] + d_h_adv.data[i];
    trunk_->backward(d_h);
    trunk_->apply_step(rng);
  }
  value_->apply_step(rng);
  advantage_->apply_step(rng);
  return loss;
}

void DuelModel::sync_from(const DuelModel& online) {
  value_->copy_from(*online.value_);
  advantage_->copy_from(*online.advantage_);
  if (trunk_ && online.trunk_) trunk_->copy_from(*online.trunk_);
}

uint64_t DuelModel::fingerprint() const {
  uint64_t h = value_->fingerprint();
  h ^= advantage_->fingerprint() + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
  if (trunk_) h ^= trunk_->fingerprint() + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
  return h;
}

std::vector<double> ddql_targets(const Matrix& q_next_online, const Matrix& q_next_target,
                                 const std::vector<double>& rewards,
                                 const std::vector<uint8_t>& terminals, double gamma) {
  const int B = q_next_online.rows;
  if (q_next_target.rows != B || q_next_target.cols != q_next_online.cols)
    throw StructuralError("ddql_targets: Q tables disagree");
  if (static_cast<int>(rewards.size()) != B || static_cast<int>(terminals.size()) != B)
    throw StructuralError("ddql_targets: batch arrays disagree");
  if (gamma < 0.0 || gamma >= 1.0) throw ConfigError("gamma must lie in [0, 1)");
  std::vector<double> y(B);
  for (int b = 0; b < B; ++b) {
    int best = 0;
    for (int k = 1; k < q_next_online.cols; ++k)
      if (q_next_online(b, k) > q_next_online(b, best)) best = k;
    y[b] = rewards[b];
    if (!terminals[b]) y[b] += gamma * q_next_target(b, best);
  }
  return y;
}

double ddql_update(DuelModel& online, const DuelModel& target,
                   const std::vector<const Transition*>& batch, double gamma, Rng& rng) {
  if (batch.empty()) throw InputError("empty ddql batch");
  const int B = static_cast<int>(batch.size());
  const int S = online.state_dim();
  Matrix states(B, S);
  Matrix next_states(B, S);
  std::vector<int> actions(B);
  std::vector<double> rewards(B);
  std::vector<uint8_t> terminals(B);
  for (int b = 0; b < B; ++b) {
    const Transition& t = *batch[b];
    if (static_cast<int>(t.state.size()) != S || static_cast<int>(t.next_state.size()) != S)
      throw StructuralError("transition width does not match the model");
    for (int c = 0; c < S; ++c) {
      states(b, c) = t.state[c];
      next_states(b, c) = t.next_state[c];
    }
    actions[b] = t.action;
    rewards[b] = t.reward;
    terminals[b] = t.terminal ? 1 : 0;
  }
  Matrix q_next_online = online.q_values(next_states);
  Matrix q_next_target = target.q_values(next_states);
  std::vector<double> y = ddql_targets(q_next_online, q_next_target, rewards, terminals, gamma);
  return online.train_step(states, actions, y, rng);
}

int act_epsilon_greedy(const DuelModel& model, const std::vector<double>& observation,
                       double rate, Rng& rng) {
  if (rate < 0.0 || rate > 1.0) throw ConfigError("exploration rate must lie in [0, 1]");
  const int A = model.action_count();
  if (rate > 0.0) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < rate) {
      std::uniform_int_distribution<int> pick(0, A - 1);
      return pick(rng);
    }
  }
  Matrix s(1, static_cast<int>(observation.size()));
  for (size_t i = 0; i < observation.size(); ++i) s(0, static_cast<int>(i)) = observation[i];
  Matrix q = model.q_values(s);
  int best = 0;
  for (int k = 1; k < A; ++k)
    if (q(0, k) > q(0, best)) best = k;
  return best;
}

double run_episode_greedy(const DuelModel& model, Environment& env, uint64_t seed) {
  std::vector<double> obs = env.reset(seed);
  double total = 0.0;
  Rng unused(0);
  for (int t = 0; t < 100000; ++t) {
    const int a = act_epsilon_greedy(model, obs, 0.0, unused);
    StepResult r = env.step(a);
    total += r.reward;
    if (r.terminal) break;
    obs = std::move(r.observation);
  }
  return total;
}

double run_episode_scripted(Environment& env, int (*policy)(const std::vector<double>&),
                            uint64_t seed) {
  std::vector<double> obs = env.reset(seed);
  double total = 0.0;
  for (int t = 0; t < 100000; ++t) {
    StepResult r = env.step(policy(obs));
    total += r.reward;
    if (r.terminal) break;
    obs = std::move(r.observation);
  }
  return total;
}

RlResult train_rl(DuelModel& online, DuelModel& target, Environment& env,
                  const RlConfig& config) {
  if (config.epochs < 1 || config.steps_per_epoch < 1 || config.eval_episodes < 1)
    throw ConfigError("epochs, steps_per_epoch and eval_episodes must be positive");
  if (config.frames < 1) throw ConfigError("frames must be >= 1");
  Rng rng(config.seed);
  ReplayBuffer buffer(config.memory);
  std::ofstream metrics;
  if (!config.metrics_path.empty()) {
    metrics.open(config.metrics_path);
    if (!metrics) throw InputError("cannot open metrics path " + config.metrics_path);
  }

  std::unique_ptr<Environment> eval_env = make_environment(env.name());
  RlResult result;
  std::vector<double> epoch_means;
  int64_t episode_counter = 0;
  std::vector<double> obs = env.reset(mix_seed(config.seed, episode_counter++));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (int step = 0; step < config.steps_per_epoch; ++step) {
      const double rate =
          std::max(0.1, std::pow(0.9999, static_cast<double>(result.updates)));
      const int action = act_epsilon_greedy(online, obs, rate, rng);
      Transition t;
      t.state = obs;
      t.action = action;
      bool terminal = false;
      double reward = 0.0;
      std::vector<double> next = obs;
      for (int f = 0; f < config.frames && !terminal; ++f) {
        StepResult r = env.step(action);
        reward += r.reward;
        terminal = r.terminal;
        next = std::move(r.observation);
      }
      t.reward = reward;
      t.next_state = next;
      t.terminal = terminal;
      buffer.push(std::move(t));
      ++result.env_steps;
      if (terminal) {
        obs = env.reset(mix_seed(config.seed, episode_counter++));
      } else {
        obs = std::move(next);
      }

      if (buffer.size() >= static_cast<size_t>(std::max(config.warmup, config.batch_size))) {
        std::vector<const Transition*> batch = buffer.sample(config.batch_size, rng);
        ddql_update(online, target, batch, config.gamma, rng);
        ++result.updates;
        if (result.updates % config.target_sync == 0) target.sync_from(online);
      }
    }

    // Greedy evaluation on a twin environment; must leave the model intact.
    std::vector<double> returns(config.eval_episodes);
    for (int e = 0; e < config.eval_episodes; ++e) {
      returns[e] =
          run_episode_greedy(online, *eval_env, mix_seed(config.seed ^ 0xE7A1ull, epoch * 1000 + e));
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.env_steps = result.env_steps;
    stats.exploration = std::max(0.1, std::pow(0.9999, static_cast<double>(result.updates)));
    for (double r : returns) stats.mean += r;
    stats.mean /= config.eval_episodes;
    for (double r : returns) stats.sd += (r - stats.mean) * (r - stats.mean);
    stats.sd = std::sqrt(stats.sd / config.eval_episodes);
    epoch_means.push_back(stats.mean);
    stats.slope = least_squares_slope(epoch_means);
    result.epochs.push_back(stats);
    result.best_mean = std::max(result.best_mean, stats.mean);
    result.final_mean = stats.mean;
    if (metrics) {
      nlohmann::json row = {{"epoch", stats.epoch},   {"mean", stats.mean},
                            {"sd", stats.sd},         {"slope", stats.slope},
                            {"exploration", stats.exploration}, {"env_steps", stats.env_steps}};
      metrics << row.dump() << "\n";
    }
  }
  return result;
}

}  // namespace nfn::rl
