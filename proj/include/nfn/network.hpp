#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nfn/common.hpp"
#include "nfn/membership.hpp"
#include "nfn/normalize.hpp"
#include "nfn/rule_bank.hpp"

namespace nfn {

// Preliminary firing accumulation: Sum adds the per-attribute log
// memberships of the selected terms, Mean divides the sum by the attribute
// count.
enum class FiringMode { Sum, Mean };

// How per-rule certainty factors enter defuzzification. Renormalized keeps
// the effective weights a convex combination; Raw multiplies them in as-is.
enum class CertaintyMode { Off, Renormalized, Raw };

// Hard runs the sampled one-hot structure; Soft runs the relaxed mixture the
// straight-through backward differentiates, so gradients are exact for it.
enum class StructureForward { Hard, Soft };

struct InferenceConfig {
  FiringMode mode = FiringMode::Sum;
  NormKind norm = NormKind::Softmax;
  bool layer_norm = false;
  CertaintyMode certainty = CertaintyMode::Off;
  Estimator estimator = Estimator::STE;
  double tau = 0.5;
  int retain_batches = 1;
  // Percentile for cardinality-constrained sampling; 0 disables.
  double theta = 0.0;
};

// First-order TSK consequents g_u(x) = W_u x + b_u plus certainty factors.
struct TskHead {
  int rule_count = 0;
  int out_dim = 0;
  int in_dim = 0;
  Tensor3 W;               // rule x out x in
  Matrix b;                // rule x out
  std::vector<double> cf;  // rule, init 1.0

  TskHead() = default;
  TskHead(int rules, int out, int in, Rng& rng);
};

// w[b][u] accumulated analytically in log space from the selected terms.
Matrix preliminary_firing(const MembershipLayer& layer, const Matrix& X,
                          const std::vector<int>& chosen, int rule_count, FiringMode mode);

// y = sum_u rho_u g_u(x); rho and the renormalization denominator are written
// through the optional out-params for the backward pass.
Matrix defuzzify(const Matrix& X, const Matrix& wbar, const TskHead& head, CertaintyMode mode,
                 Matrix* rho_out = nullptr, std::vector<double>* denom_out = nullptr);

// Everything the backward pass needs, captured by value at forward time.
struct BlockTape {
  Matrix X;
  Tensor3 logmu;  // batch x attribute x term (0 at inactive slots)
  StructureSample sample;
  StructureForward forward_mode = StructureForward::Hard;
  Matrix w_pre;
  LayerNormCache ln;
  Matrix wbar;
  Matrix rho;
  std::vector<double> denom;
  Tensor3 g;  // batch x rule x out
  Matrix y;
  uint64_t version = 0;
};

struct BlockGradients {
  Matrix d_centers;  // attribute x term
  Matrix d_widths;
  Tensor3 d_logits;  // rule x attribute x term
  Tensor3 d_W;
  Matrix d_b;
  std::vector<double> d_cf;
  std::vector<double> d_gain;
  std::vector<double> d_bias;
  Matrix d_input;  // batch x attribute
};

// Reported by add_term so optimizer state can follow the re-layout.
struct GrowthEvent {
  int attribute = 0;
  int slot = 0;
  // Old grid width when the term grid had to grow, 0 otherwise.
  int grid_grown_from = 0;
};

// One fuzzy block: membership layer, rule bank, normalization and TSK head.
class NfnBlock {
 public:
  NfnBlock(MembershipLayer layer, int rule_count, int out_dim, InferenceConfig config, Rng& rng);

  const MembershipLayer& layer() const { return layer_; }
  MembershipLayer& layer() { return layer_; }
  const RuleBank& bank() const { return bank_; }
  RuleBank& bank() { return bank_; }
  const TskHead& head() const { return head_; }
  TskHead& head() { return head_; }
  const InferenceConfig& config() const { return config_; }
  // Mutable for schedule-style adjustments (tau, retention, theta). Mode,
  // norm and feature switches must not change after construction.
  InferenceConfig& config() { return config_; }
  LayerNorm& layer_norm() { return ln_; }
  const LayerNorm& layer_norm() const { return ln_; }
  ScalarCardinality& cardinality() { return cardinality_; }
  const ScalarCardinality& cardinality() const { return cardinality_; }

  int in_dim() const { return layer_.attribute_count(); }
  int out_dim() const { return head_.out_dim; }
  int rule_count() const { return head_.rule_count; }
  uint64_t version() const { return version_; }

  // Training forward: samples structure (constrained when theta > 0),
  // accumulates term cardinality and fills the tape.
  Matrix forward(const Matrix& X, Rng& rng, StructureForward mode, BlockTape* tape);

  // Pure evaluation forward: current hard selection, frozen noise, no
  // mutation of any kind.
  Matrix infer(const Matrix& X) const;
  Matrix infer_with(const Matrix& X, const std::vector<int>& chosen) const;

  BlockGradients backward(const BlockTape& tape, const Matrix& d_y) const;

  // Adds a fuzzy set to an attribute and keeps bank tensors in sync.
  GrowthEvent add_term(int attribute, const GaussianSet& set, Rng& rng);

 private:
  MembershipLayer layer_;
  RuleBank bank_;
  TskHead head_;
  InferenceConfig config_;
  LayerNorm ln_;
  ScalarCardinality cardinality_;
  uint64_t version_ = 0;
};

// A stack of blocks; each block consumes the previous block's output.
class NfnStack {
 public:
  NfnStack() = default;
  explicit NfnStack(std::vector<NfnBlock> blocks);

  struct Tape {
    std::vector<BlockTape> blocks;
    uint64_t version = 0;
  };
  struct Gradients {
    std::vector<BlockGradients> blocks;
    Matrix d_input;
  };

  int block_count() const { return static_cast<int>(blocks_.size()); }
  NfnBlock& block(int i) { return blocks_[i]; }
  const NfnBlock& block(int i) const { return blocks_[i]; }
  int in_dim() const { return blocks_.front().in_dim(); }
  int out_dim() const { return blocks_.back().out_dim(); }
  uint64_t version() const;

  Matrix forward(const Matrix& X, Rng& rng, StructureForward mode, Tape* tape);
  Matrix infer(const Matrix& X) const;

  // Backpropagates through all blocks. The tape must come from the current
  // structure: growing any block invalidates older tapes.
  Gradients backward(const Tape& tape, const Matrix& d_y) const;

  GrowthEvent add_term(int block_index, int attribute, const GaussianSet& set, Rng& rng);

 private:
  std::vector<NfnBlock> blocks_;
};

}  // namespace nfn
