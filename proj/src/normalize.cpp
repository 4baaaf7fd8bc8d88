#include "nfn/normalize.hpp"

#include <algorithm>
#include <cmath>

namespace nfn {

NormKind norm_kind_from_alpha(double alpha) {
  if (alpha == 1.0) return NormKind::Softmax;
  if (alpha == 1.5) return NormKind::Entmax15;
  throw ConfigError("alpha must be 1.0 (softmax) or 1.5 (entmax)");
}

double alpha_of(NormKind kind) { return kind == NormKind::Softmax ? 1.0 : 1.5; }

void softmax_row(const double* w, int n, double* out) {
  double m = w[0];
  for (int i = 1; i < n; ++i) m = std::max(m, w[i]);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = std::exp(w[i] - m);
    sum += out[i];
  }
  for (int i = 0; i < n; ++i) out[i] /= sum;
}

void entmax15_row(const double* w, int n, double* out) {
  double m = w[0];
  for (int i = 1; i < n; ++i) m = std::max(m, w[i]);
  double lo = m / 2.0 - 1.0;
  double hi = m / 2.0;
  for (int iter = 0; iter < 50; ++iter) {
    const double t = (lo + hi) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const double v = w[i] / 2.0 - t;
      if (v > 0.0) sum += v * v;
    }
    if (sum > 1.0)
      lo = t;
    else
      hi = t;
  }
  const double t = (lo + hi) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = w[i] / 2.0 - t;
    out[i] = v > 0.0 ? v * v : 0.0;
    sum += out[i];
  }
  // Bisection leaves sum within ~2^-50 of 1; rescale so rows sum to 1 exactly
  // up to rounding, preserving exact zeros.
  for (int i = 0; i < n; ++i) out[i] /= sum;
}

void softmax_backward_row(const double* out, const double* dout, int n, double* dw) {
  double dot = 0.0;
  for (int i = 0; i < n; ++i) dot += dout[i] * out[i];
  for (int i = 0; i < n; ++i) dw[i] = out[i] * (dout[i] - dot);
}

void entmax15_backward_row(const double* out, const double* dout, int n, double* dw) {
  // On the support s_u = sqrt(out_u): dw_v = s_v * (dout_v - sum(dout s)/sum(s)).
  double num = 0.0;
  double den = 0.0;
  for (int i = 0; i < n; ++i) {
    if (out[i] > 0.0) {
      const double s = std::sqrt(out[i]);
      num += dout[i] * s;
      den += s;
    }
  }
  const double q = den > 0.0 ? num / den : 0.0;
  for (int i = 0; i < n; ++i) {
    dw[i] = out[i] > 0.0 ? std::sqrt(out[i]) * (dout[i] - q) : 0.0;
  }
}

Matrix normalize_firing(const Matrix& w, NormKind kind) {
  if (w.cols < 1) throw StructuralError("normalize_firing needs at least one rule");
  require_finite(w, "preliminary firing");
  Matrix out(w.rows, w.cols);
  for (int b = 0; b < w.rows; ++b) {
    if (kind == NormKind::Softmax)
      softmax_row(w.row(b), w.cols, out.row(b));
    else
      entmax15_row(w.row(b), w.cols, out.row(b));
  }
  return out;
}

Matrix normalize_backward(const Matrix& out, const Matrix& dout, NormKind kind) {
  require_shape(dout, out.rows, out.cols, "normalize_backward upstream");
  Matrix dw(out.rows, out.cols);
  for (int b = 0; b < out.rows; ++b) {
    if (kind == NormKind::Softmax)
      softmax_backward_row(out.row(b), dout.row(b), out.cols, dw.row(b));
    else
      entmax15_backward_row(out.row(b), dout.row(b), out.cols, dw.row(b));
  }
  return dw;
}

Matrix layer_norm_forward(const LayerNorm& ln, const Matrix& w, LayerNormCache* cache) {
  const int n = w.cols;
  if (n < 2) throw ConfigError("layer normalization needs at least two rules");
  if (ln.size() != n) throw StructuralError("layer norm size does not match rule count");
  Matrix out(w.rows, n);
  if (cache) {
    cache->xhat = Matrix(w.rows, n);
    cache->invstd.assign(w.rows, 0.0);
  }
  for (int b = 0; b < w.rows; ++b) {
    const double* row = w.row(b);
    double mean = 0.0;
    for (int u = 0; u < n; ++u) mean += row[u];
    mean /= n;
    double var = 0.0;
    for (int u = 0; u < n; ++u) {
      const double d = row[u] - mean;
      var += d * d;
    }
    var /= n;
    const double invstd = 1.0 / std::sqrt(var + ln.eps);
    for (int u = 0; u < n; ++u) {
      const double xhat = (row[u] - mean) * invstd;
      out(b, u) = ln.gain[u] * xhat + ln.bias[u];
      if (cache) cache->xhat(b, u) = xhat;
    }
    if (cache) cache->invstd[b] = invstd;
  }
  return out;
}

Matrix layer_norm_backward(const LayerNorm& ln, const LayerNormCache& cache, const Matrix& dout,
                           std::vector<double>& d_gain, std::vector<double>& d_bias) {
  const int n = ln.size();
  require_shape(dout, cache.xhat.rows, n, "layer_norm_backward upstream");
  if (static_cast<int>(d_gain.size()) != n || static_cast<int>(d_bias.size()) != n)
    throw StructuralError("layer_norm_backward gradient buffers have wrong size");
  Matrix dw(dout.rows, n);
  for (int b = 0; b < dout.rows; ++b) {
    double mean_dxhat = 0.0;
    double mean_dxhat_xhat = 0.0;
    for (int u = 0; u < n; ++u) {
      const double xhat = cache.xhat(b, u);
      const double dy = dout(b, u);
      d_gain[u] += dy * xhat;
      d_bias[u] += dy;
      const double dxhat = dy * ln.gain[u];
      mean_dxhat += dxhat;
      mean_dxhat_xhat += dxhat * xhat;
    }
    mean_dxhat /= n;
    mean_dxhat_xhat /= n;
    for (int u = 0; u < n; ++u) {
      const double dxhat = dout(b, u) * ln.gain[u];
      dw(b, u) = cache.invstd[b] * (dxhat - mean_dxhat - cache.xhat(b, u) * mean_dxhat_xhat);
    }
  }
  return dw;
}

}  // namespace nfn
