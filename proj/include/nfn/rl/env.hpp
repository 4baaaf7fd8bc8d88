#pragma once

#include <memory>
#include <string>
#include <vector>

#include "nfn/common.hpp"

namespace nfn::rl {

struct StepResult {
  std::vector<double> observation;
  double reward = 0.0;
  bool terminal = false;
};

// Episodic environment with a vector observation and a discrete action set.
// reset(seed) fully determines the episode; identical seeds and action
// sequences replay identical trajectories.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual std::string name() const = 0;
  virtual int observation_dim() const = 0;
  virtual int action_count() const = 0;
  virtual std::vector<double> reset(uint64_t seed) = 0;
  virtual StepResult step(int action) = 0;
};

// Built-in names: "track_and_shoot", "dodge_line", "gather".
std::unique_ptr<Environment> make_environment(const std::string& name);

// Reference policy for track_and_shoot: lead the target by the projectile
// delay, close the gap, fire when the predicted miss is small.
int track_and_shoot_oracle(const std::vector<double>& observation);

}  // namespace nfn::rl
