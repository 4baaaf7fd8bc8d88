#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "nfn/adam.hpp"
#include "nfn/common.hpp"
#include "nfn/network.hpp"
#include "nfn/neurogenesis.hpp"

namespace nfn {

struct LossGrad {
  double loss = 0.0;
  Matrix d_pred;
};

// Mean squared error over all batch rows and output dims.
LossGrad mse_loss(const Matrix& pred, const Matrix& target);

// Named optimizer views over every learnable buffer of the stack. Certainty
// factors and layer-norm parameters are bound only when their feature is on.
// The gradients object must stay alive while the bindings are used.
std::vector<ParamBinding> bind_params(NfnStack& stack, NfnStack::Gradients& grads);

// Re-layouts optimizer moments after a term grid grew.
void remap_after_growth(Adam& adam, const NfnStack& stack, int block_index,
                        const GrowthEvent& event);

struct FdFailure {
  std::string name;
  size_t index = 0;
  double analytic = 0.0;
  double fd = 0.0;
  double rel_err = 0.0;
};

struct FdReport {
  int params_checked = 0;
  double max_rel_err = 0.0;
  // Smallest distance of any w/2 entry to the entmax truncation threshold;
  // finite differences are unreliable when a perturbation crosses it.
  double entmax_min_margin = std::numeric_limits<double>::infinity();
  std::vector<FdFailure> failures;

  bool pass() const { return failures.empty(); }
};

// Central finite differences against the analytic backward pass on a copy of
// the stack, run in soft structure mode with frozen noise so the loss is a
// smooth deterministic function of the parameters.
FdReport gradient_check(const NfnStack& stack, const Matrix& X, const Matrix& Y,
                        double h_scale = 1e-5, double tol = 1e-4, uint64_t seed = 7);

struct SupervisedConfig {
  int steps = 2000;
  int batch_size = 32;
  double learning_rate = 1e-2;
  uint64_t seed = 1;
  NeurogenesisConfig neuro;
  bool neurogenesis = true;
  std::string metrics_path;  // JSONL; empty disables
  std::string events_path;   // JSONL; empty disables
};

struct FitResult {
  double final_loss = 0.0;
  std::vector<double> loss_history;
  int sprouts = 0;
  int total_structure_edits = 0;
};

// Minibatch regression with concurrent structure learning and batch-delayed
// neurogenesis. Metrics stream one JSON object per step:
// {"epsilon_failures":..,"loss":..,"step":..,"structure_edits":..,"term_counts":[..]}
FitResult fit_supervised(NfnStack& stack, Adam& adam, const Matrix& X, const Matrix& Y,
                         const SupervisedConfig& config);

}  // namespace nfn
