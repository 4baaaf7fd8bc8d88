#pragma once

#include <vector>

#include "nfn/common.hpp"

namespace nfn {

// Entropy index alpha of the firing normalizer. 1.0 is the dense softmax,
// 1.5 the exact sparse entmax solved by bisection.
enum class NormKind { Softmax, Entmax15 };

NormKind norm_kind_from_alpha(double alpha);
double alpha_of(NormKind kind);

// Max-subtracted softmax; safe for arbitrarily large negative inputs.
void softmax_row(const double* w, int n, double* out);

// Exact 1.5-entmax: out_u = max(w_u/2 - t, 0)^2 with t found by bisection on
// sum(out) = 1 over [max(w)/2 - 1, max(w)/2] (50 iterations).
void entmax15_row(const double* w, int n, double* out);

// d(loss)/dw given the forward output and upstream d(loss)/dout.
void softmax_backward_row(const double* out, const double* dout, int n, double* dw);
void entmax15_backward_row(const double* out, const double* dout, int n, double* dw);

Matrix normalize_firing(const Matrix& w, NormKind kind);
Matrix normalize_backward(const Matrix& out, const Matrix& dout, NormKind kind);

// Layer normalization over the rule dimension, with learnable gain and bias.
// Population variance, eps = 1e-5.
struct LayerNorm {
  std::vector<double> gain;
  std::vector<double> bias;
  double eps = 1e-5;

  explicit LayerNorm(int rule_count = 0)
      : gain(rule_count, 1.0), bias(rule_count, 0.0) {}

  int size() const { return static_cast<int>(gain.size()); }
};

// Per-row statistics retained for the backward pass.
struct LayerNormCache {
  Matrix xhat;                 // (w - mean) * invstd
  std::vector<double> invstd;  // one per batch row
};

Matrix layer_norm_forward(const LayerNorm& ln, const Matrix& w, LayerNormCache* cache);

// Accumulates d(gain), d(bias) and returns d(w).
Matrix layer_norm_backward(const LayerNorm& ln, const LayerNormCache& cache, const Matrix& dout,
                           std::vector<double>& d_gain, std::vector<double>& d_bias);

}  // namespace nfn
