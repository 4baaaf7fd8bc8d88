#include "nfn/rl/replay.hpp"

namespace nfn::rl {

ReplayBuffer::ReplayBuffer(size_t capacity) : capacity_(capacity) {
  if (capacity < 1) throw ConfigError("replay capacity must be >= 1");
  items_.reserve(capacity);
}

void ReplayBuffer::push(Transition t) {
  for (double v : t.state)
    if (!std::isfinite(v)) throw InputError("transition state is non-finite");
  for (double v : t.next_state)
    if (!std::isfinite(v)) throw InputError("transition next_state is non-finite");
  if (!std::isfinite(t.reward)) throw InputError("transition reward is non-finite");
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
  } else {
    items_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
  }
}

const Transition& ReplayBuffer::at(size_t i) const {
  if (i >= items_.size()) throw StructuralError("replay index out of range");
  return items_[i];
}

std::vector<const Transition*> ReplayBuffer::sample(int batch, Rng& rng) const {
  if (items_.empty()) throw UsageError("sampling from an empty replay buffer");
  if (batch < 1) throw ConfigError("batch size must be >= 1");
  std::uniform_int_distribution<size_t> pick(0, items_.size() - 1);
  std::vector<const Transition*> out(batch);
  for (int b = 0; b < batch; ++b) out[b] = &items_[pick(rng)];
  return out;
}

}  // namespace nfn::rl
