#pragma once

#include <cstddef>
#include <vector>

#include "nfn/common.hpp"

namespace nfn::rl {

struct Transition {
  std::vector<double> state;
  int action = 0;
  double reward = 0.0;
  std::vector<double> next_state;
  bool terminal = false;
};

// Fixed-capacity ring buffer with FIFO eviction and uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(size_t capacity);

  void push(Transition t);
  size_t size() const { return items_.size(); }
  size_t capacity() const { return capacity_; }

  const Transition& at(size_t i) const;

  // Uniform with replacement; pointers stay valid until the next push.
  std::vector<const Transition*> sample(int batch, Rng& rng) const;

 private:
  size_t capacity_;
  size_t head_ = 0;  // next slot to overwrite once full
  std::vector<Transition> items_;
};

}  // namespace nfn::rl
