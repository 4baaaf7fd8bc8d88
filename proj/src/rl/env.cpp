#include "nfn/rl/env.hpp"

#include <cmath>

namespace nfn::rl {

namespace {

void check_ready(bool reset_done) {
  if (!reset_done) throw UsageError("step() before reset()");
}

void check_action(int action, int count) {
  if (action < 0 || action >= count) throw InputError("action index out of range");
}

std::vector<double> checked(std::vector<double> obs) {
  for (double v : obs) {
    if (!std::isfinite(v)) throw EnvError("environment produced a non-finite observation");
  }
  return obs;
}

// Reflect x into [-bound, bound], flipping v on each bounce.
void bounce(double& x, double& v, double bound) {
  while (x > bound || x < -bound) {
    if (x > bound) {
      x = 2.0 * bound - x;
      v = -v;
    } else {
      x = -2.0 * bound - x;
      v = -v;
    }
  }
}

// A target slides along a wall; the agent steers a crosshair and fires a
// projectile that lands `kDelay` steps later at the crosshair position frozen
// at fire time. Hitting within kTolerance ends the episode with +1; misses
// cost 0.1, every step costs 0.01 * |aim - target|.
//
// Observation: {(target_x - aim_x) / 2, 10 * target_v, aim_x, ready} with
// ready = 1 when no projectile is in flight; the crosshair-relative first
// component mirrors the screen-space view a player has, and every component
// stays in [-1, 1]. Actions: 0 aim left, 1 aim right, 2 fire.
class TrackAndShoot final : public Environment {
 public:
  static constexpr int kDelay = 2;
  static constexpr double kTolerance = 0.15;
  static constexpr double kSpeed = 0.05;
  static constexpr double kAimStep = 0.1;
  static constexpr double kBound = 0.9;
  static constexpr int kMaxSteps = 120;

  std::string name() const override { return "track_and_shoot"; }
  int observation_dim() const override { return 4; }
  int action_count() const override { return 3; }

  std::vector<double> reset(uint64_t seed) override {
    rng_.seed(seed);
    std::uniform_real_distribution<double> pos(-0.8, 0.8);
    target_x_ = pos(rng_);
    target_v_ = (rng_() & 1) ? kSpeed : -kSpeed;
    aim_x_ = 0.0;
    in_flight_ = false;
    impact_x_ = 0.0;
    countdown_ = 0;
    steps_ = 0;
    live_ = true;
    return checked(observe());
  }

  StepResult step(int action) override {
    check_ready(live_);
    check_action(action, action_count());
    StepResult out;
    if (action == 0) aim_x_ = std::max(-1.0, aim_x_ - kAimStep);
    if (action == 1) aim_x_ = std::min(1.0, aim_x_ + kAimStep);
    if (action == 2 && !in_flight_) {
      in_flight_ = true;
      impact_x_ = aim_x_;
      countdown_ = kDelay;
    }
    target_x_ += target_v_;
    bounce(target_x_, target_v_, kBound);
    if (in_flight_) {
      if (--countdown_ == 0) {
        in_flight_ = false;
        if (std::abs(impact_x_ - target_x_) <= kTolerance) {
          out.reward += 1.0;
          out.terminal = true;
        } else {
          out.reward -= 0.1;
        }
      }
    }
    out.reward -= 0.01 * std::abs(aim_x_ - target_x_);
    if (++steps_ >= kMaxSteps) out.terminal = true;
    out.observation = checked(observe());
    return out;
  }

 private:
  Rng rng_;
  double target_x_ = 0.0;
  double target_v_ = kSpeed;
  double aim_x_ = 0.0;
  bool in_flight_ = false;
  double impact_x_ = 0.0;
  int countdown_ = 0;
  int steps_ = 0;
  bool live_ = false;

  std::vector<double> observe() const {
    return {0.5 * (target_x_ - aim_x_), 10.0 * target_v_, aim_x_, in_flight_ ? 0.0 : 1.0};
  }
};

// Two obstacles fall toward a line; the agent sidesteps them. Surviving a
// step pays 0.05, getting hit costs 1 and ends the episode.
// Observation: {agent_x, o1_x, o1_y, o2_x, o2_y}. Actions: left, stay, right.
class DodgeLine final : public Environment {
 public:
  static constexpr double kAgentStep = 0.15;
  static constexpr double kFallSpeed = 0.2;
  static constexpr double kHitRadius = 0.2;
  static constexpr int kMaxSteps = 100;

  std::string name() const override { return "dodge_line"; }
  int observation_dim() const override { return 5; }
  int action_count() const override { return 3; }

  std::vector<double> reset(uint64_t seed) override {
    rng_.seed(seed);
    std::uniform_real_distribution<double> pos(-1.0, 1.0);
    agent_x_ = pos(rng_) * 0.5;
    ox_[0] = pos(rng_);
    oy_[0] = 1.0;
    ox_[1] = pos(rng_);
    oy_[1] = 1.5;
    steps_ = 0;
    live_ = true;
    return checked(observe());
  }

  StepResult step(int action) override {
    check_ready(live_);
    check_action(action, action_count());
    StepResult out;
    if (action == 0) agent_x_ = std::max(-1.0, agent_x_ - kAgentStep);
    if (action == 2) agent_x_ = std::min(1.0, agent_x_ + kAgentStep);
    std::uniform_real_distribution<double> pos(-1.0, 1.0);
    std::uniform_real_distribution<double> stagger(0.0, 0.5);
    for (int k = 0; k < 2; ++k) {
      oy_[k] -= kFallSpeed;
      if (oy_[k] <= 0.0) {
        if (std::abs(ox_[k] - agent_x_) <= kHitRadius) {
          out.reward -= 1.0;
          out.terminal = true;
        }
        ox_[k] = pos(rng_);
        oy_[k] = 1.0 + stagger(rng_);
      }
    }
    if (!out.terminal) out.reward += 0.05;
    if (++steps_ >= kMaxSteps) out.terminal = true;
    out.observation = checked(observe());
    return out;
  }

 private:
  Rng rng_;
  double agent_x_ = 0.0;
  double ox_[2] = {0.0, 0.0};
  double oy_[2] = {1.0, 1.5};
  int steps_ = 0;
  bool live_ = false;

  std::vector<double> observe() const {
    return {agent_x_, ox_[0], oy_[0], ox_[1], oy_[1]};
  }
};

// Walk to a token and collect it: +1 and the token respawns. Missed collects
// cost 0.05, every step costs 0.01. Fixed-length episodes.
// Observation: {agent_x, token_x, token_x - agent_x}. Actions: left, right,
// collect.
class Gather final : public Environment {
 public:
  static constexpr double kAgentStep = 0.1;
  static constexpr double kCollectRadius = 0.15;
  static constexpr int kMaxSteps = 100;

  std::string name() const override { return "gather"; }
  int observation_dim() const override { return 3; }
  int action_count() const override { return 3; }

  std::vector<double> reset(uint64_t seed) override {
    rng_.seed(seed);
    std::uniform_real_distribution<double> pos(-1.0, 1.0);
    agent_x_ = pos(rng_);
    token_x_ = pos(rng_);
    steps_ = 0;
    live_ = true;
    return checked(observe());
  }

  StepResult step(int action) override {
    check_ready(live_);
    check_action(action, action_count());
    StepResult out;
    if (action == 0) agent_x_ = std::max(-1.0, agent_x_ - kAgentStep);
    if (action == 1) agent_x_ = std::min(1.0, agent_x_ + kAgentStep);
    if (action == 2) {
      if (std::abs(agent_x_ - token_x_) <= kCollectRadius) {
        out.reward += 1.0;
        std::uniform_real_distribution<double> pos(-1.0, 1.0);
        token_x_ = pos(rng_);
      } else {
        out.reward -= 0.05;
      }
    }
    out.reward -= 0.01;
    if (++steps_ >= kMaxSteps) out.terminal = true;
    out.observation = checked(observe());
    return out;
  }

 private:
  Rng rng_;
  double agent_x_ = 0.0;
  double token_x_ = 0.0;
  int steps_ = 0;
  bool live_ = false;

  std::vector<double> observe() const {
    return {agent_x_, token_x_, token_x_ - agent_x_};
  }
};

}  // namespace

std::unique_ptr<Environment> make_environment(const std::string& name) {
  if (name == "track_and_shoot") return std::make_unique<TrackAndShoot>();
  if (name == "dodge_line") return std::make_unique<DodgeLine>();
  if (name == "gather") return std::make_unique<Gather>();
  throw ConfigError("unknown environment '" + name + "'");
}

int track_and_shoot_oracle(const std::vector<double>& observation) {
  if (observation.size() != 4) throw InputError("oracle expects a track_and_shoot observation");
  const double aim = observation[2];
  double tx = 2.0 * observation[0] + aim;
  double tv = observation[1] / 10.0;
  const bool ready = observation[3] > 0.5;
  for (int k = 0; k < TrackAndShoot::kDelay; ++k) {
    tx += tv;
    bounce(tx, tv, TrackAndShoot::kBound);
  }
  if (ready && std::abs(aim - tx) <= 0.06) return 2;
  return tx > aim ? 1 : 0;
}

}  // namespace nfn::rl
