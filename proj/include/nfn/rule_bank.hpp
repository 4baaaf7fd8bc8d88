#pragma once

#include <cstdint>
#include <vector>

#include "nfn/common.hpp"
#include "nfn/membership.hpp"

namespace nfn {

// Straight-through estimators for the categorical structure choice.
// STE: hard argmax of the logits, gradient through their softmax.
// STGE: hard argmax of Gumbel-perturbed, temperature-scaled logits,
// gradient through that softened sample.
enum class Estimator { STE, STGE };

// One sampled rule structure: per (rule, attribute) the chosen term slot and
// the soft relaxation the backward pass differentiates through. Disallowed
// slots carry exact zeros in `soft`.
struct StructureSample {
  int rule_count = 0;
  int attribute_count = 0;
  int max_terms = 0;
  Estimator estimator = Estimator::STE;
  double tau = 1.0;
  std::vector<int> chosen;  // rule_count x attribute_count, row-major
  Tensor3 soft;             // rule_count x attribute_count x max_terms

  int chosen_at(int rule, int attribute) const {
    return chosen[static_cast<size_t>(rule) * attribute_count + attribute];
  }
};

// Exponentially decayed per-(attribute, term) mass of membership activations;
// the evidence used to exclude starved terms from structure sampling.
class ScalarCardinality {
 public:
  ScalarCardinality() = default;
  ScalarCardinality(int attribute_count, int max_terms) : s_(attribute_count, max_terms) {}

  // S <- 0.99 S + sum_b mu(b, i, j) over active slots. Grows to follow the
  // layer when terms were added since the last call.
  void accumulate(const Tensor3& memberships, const MembershipLayer& layer);

  double value(int attribute, int term) const { return s_(attribute, term); }
  const Matrix& values() const { return s_; }
  // For checkpoint restore only; shape must match the layer grid.
  Matrix& values_mut() { return s_; }
  void sync_shape(const MembershipLayer& layer);

 private:
  Matrix s_;
};

// Allowed-slot mask (attribute_count x max_terms, 1 = sampleable): existing
// terms whose cardinality reaches the theta-th percentile of their
// attribute's existing terms. theta = 0 returns the plain existence mask.
// The per-attribute maximum always survives.
std::vector<uint8_t> constrain_structure(const MembershipLayer& layer,
                                         const ScalarCardinality& cardinality, double theta);

// Linear-interpolation percentile (inclusive ranks), theta in [0, 100].
double percentile(std::vector<double> values, double theta);

// Learnable categorical scores over term slots, one distribution per
// (rule, attribute). Owns the Gumbel noise cache and its retention age.
class RuleBank {
 public:
  RuleBank(int rule_count, const MembershipLayer& layer, Rng& rng);

  int rule_count() const { return rule_count_; }
  int attribute_count() const { return attribute_count_; }
  int max_terms() const { return max_terms_; }

  double logit(int rule, int attribute, int term) const { return logits_(rule, attribute, term); }
  double& logit_ref(int rule, int attribute, int term) { return logits_(rule, attribute, term); }
  const Tensor3& logits() const { return logits_; }
  // Flat parameter access for the optimizer; inactive slots must stay inert.
  Tensor3& logits_mut() { return logits_; }

  // Draws (or reuses, per the retention age) structure noise and returns the
  // hard selection plus its soft relaxation. `allowed` is the optional
  // constrain_structure mask; absent means the existence mask.
  // Noise lifecycle for STGE: the cached tensor is reused until it has served
  // retain_batches calls, then resampled. retain_batches = 1 resamples every
  // call. STE ignores the noise cache.
  StructureSample sample(const MembershipLayer& layer, Estimator estimator, double tau,
                         int retain_batches, Rng& rng,
                         const std::vector<uint8_t>* allowed = nullptr);

  // Deterministic selection for evaluation: argmax of the raw logits over
  // existing slots. Sampling noise is suspended (for either estimator), so
  // evaluation behavior is stable between noise redraws. Never mutates the
  // bank.
  std::vector<int> current_selection(const MembershipLayer& layer) const;

  // d(loss)/d(logits) for a sample, given upstream d(loss)/d(soft). Each
  // (rule, attribute) slice applies the softmax Jacobian at the sampled soft
  // weights, scaled by 1/tau for STGE. Masked slots get exact zeros.
  Tensor3 structure_gradient(const StructureSample& sample, const Tensor3& upstream) const;

  // Absorbs one term newly added to `attribute` of the layer: grows tensors
  // if the layer grid grew, initializes the new slot's logit to the mean of
  // the slice's existing logits and draws noise for it if a cache is live.
  // Calling it again with no new term to absorb is an error.
  void expand_terms(const MembershipLayer& layer, int attribute, Rng& rng);

  int noise_age() const { return noise_age_; }
  bool has_noise() const { return has_noise_; }

 private:
  int rule_count_;
  int attribute_count_;
  int max_terms_;
  std::vector<int> term_count_;
  Tensor3 logits_;
  Tensor3 noise_;
  bool has_noise_ = false;
  int noise_age_ = 0;

  void check_layer(const MembershipLayer& layer) const;
  void draw_noise(Rng& rng);
};

}  // namespace nfn
