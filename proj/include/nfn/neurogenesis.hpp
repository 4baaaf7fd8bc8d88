#pragma once

#include <cstdint>
#include <vector>

#include "nfn/common.hpp"
#include "nfn/membership.hpp"
#include "nfn/network.hpp"

namespace nfn {

// Welford's online moments; numerically stable at large offsets.
class RunningMoments {
 public:
  void push(double value) {
    ++n_;
    const double delta = value - mean_;
    mean_ += delta / n_;
    m2_ += delta * (value - mean_);
  }

  long long count() const { return n_; }
  double mean() const { return mean_; }
  // Population variance (divides by n).
  double variance() const { return n_ > 0 ? m2_ / n_ : 0.0; }

  void reset() {
    n_ = 0;
    mean_ = 0.0;
    m2_ = 0.0;
  }

 private:
  long long n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct NeurogenesisConfig {
  double epsilon = 0.4;   // completeness threshold; <= 0 disables sprouting
  int delay_batches = 3;  // +mu: failing batches to accumulate before a sprout
  double width_floor_factor = 1e-4;
};

struct SproutEvent {
  int64_t step = 0;
  int block = 0;
  int attribute = 0;
  double center = 0.0;
  double width = 0.0;
  long long samples = 0;
  int batches_waited = 0;
  GrowthEvent growth;
};

// Per-attribute accumulators of epsilon-failing values for one block.
// observe() folds in one batch; sprout() adds a Gaussian set per attribute
// whose failure streak reached the configured delay.
class NeurogenesisState {
 public:
  explicit NeurogenesisState(int attribute_count);

  // Records the failing (row, attribute) values of one batch.
  void observe(const CompletenessReport& report, const Matrix& X);

  // Attributes currently at or past the delay threshold.
  std::vector<int> ripe(int delay_batches) const;

  // Grows the block at every ripe attribute; returns the emitted events.
  // Accumulators of sprouted attributes are reset.
  std::vector<SproutEvent> sprout(NfnBlock& block, int block_index,
                                  const NeurogenesisConfig& config, int64_t step, Rng& rng);

  int batches_observed(int attribute) const { return batches_[attribute]; }
  const RunningMoments& moments(int attribute) const { return moments_[attribute]; }

 private:
  std::vector<RunningMoments> moments_;
  std::vector<int> batches_;
};

// Failing pairs recomputed from a tape's log-membership tensor, identical to
// MembershipLayer::check_completeness at forward time.
CompletenessReport completeness_from_tape(const BlockTape& tape, const MembershipLayer& layer,
                                          double epsilon);

}  // namespace nfn
