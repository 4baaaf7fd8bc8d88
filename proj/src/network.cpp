#include "nfn/network.hpp"

#include <cmath>

namespace nfn {

namespace {

// g(b, u, d) = b[u][d] + sum_c W[u][d][c] x[b][c]
Tensor3 consequents(const Matrix& X, const TskHead& head) {
  Tensor3 g(X.rows, head.rule_count, head.out_dim);
  for (int b = 0; b < X.rows; ++b) {
    for (int u = 0; u < head.rule_count; ++u) {
      for (int d = 0; d < head.out_dim; ++d) {
        double acc = head.b(u, d);
        for (int c = 0; c < head.in_dim; ++c) acc += head.W(u, d, c) * X(b, c);
        g(b, u, d) = acc;
      }
    }
  }
  return g;
}

// rho = effective rule weights after certainty factors.
void effective_weights(const Matrix& wbar, const TskHead& head, CertaintyMode mode, Matrix& rho,
                       std::vector<double>& denom) {
  rho = Matrix(wbar.rows, wbar.cols);
  denom.assign(wbar.rows, 1.0);
  for (int b = 0; b < wbar.rows; ++b) {
    if (mode == CertaintyMode::Off) {
      for (int u = 0; u < wbar.cols; ++u) rho(b, u) = wbar(b, u);
    } else if (mode == CertaintyMode::Raw) {
      for (int u = 0; u < wbar.cols; ++u) rho(b, u) = head.cf[u] * wbar(b, u);
    } else {
      double s = 0.0;
      for (int u = 0; u < wbar.cols; ++u) s += head.cf[u] * wbar(b, u);
      if (!(s > 1e-12))
        throw TrainingError("certainty renormalization denominator collapsed to zero");
      denom[b] = s;
      for (int u = 0; u < wbar.cols; ++u) rho(b, u) = head.cf[u] * wbar(b, u) / s;
    }
  }
}

Matrix combine(const Matrix& rho, const Tensor3& g) {
  Matrix y(rho.rows, g.n2);
  for (int b = 0; b < rho.rows; ++b)
    for (int u = 0; u < rho.cols; ++u) {
      const double r = rho(b, u);
      if (r == 0.0) continue;
      for (int d = 0; d < g.n2; ++d) y(b, d) += r * g(b, u, d);
    }
  return y;
}

Tensor3 log_memberships(const MembershipLayer& layer, const Matrix& X) {
  Tensor3 logmu(X.rows, layer.attribute_count(), layer.max_terms());
  for (int b = 0; b < X.rows; ++b) {
    for (int i = 0; i < layer.attribute_count(); ++i) {
      const double x = X(b, i);
      for (int j = 0; j < layer.term_count(i); ++j) {
        const double d = x - layer.centers()(i, j);
        const double w = layer.widths()(i, j);
        logmu(b, i, j) = -d * d / (2.0 * w * w);
      }
    }
  }
  return logmu;
}

}  // namespace

TskHead::TskHead(int rules, int out, int in, Rng& rng)
    : rule_count(rules), out_dim(out), in_dim(in), W(rules, out, in), b(rules, out),
      cf(rules, 1.0) {
  if (rules < 1 || out < 1 || in < 1) throw ConfigError("TSK head dimensions must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> init(-bound, bound);
  for (double& v : W.data) v = init(rng);
  for (double& v : b.data) v = init(rng);
}

Matrix preliminary_firing(const MembershipLayer& layer, const Matrix& X,
                          const std::vector<int>& chosen, int rule_count, FiringMode mode) {
  const int C = layer.attribute_count();
  if (X.cols != C) throw StructuralError("batch width does not match attribute count");
  if (chosen.size() != static_cast<size_t>(rule_count) * C)
    throw StructuralError("selection has wrong shape");
  require_finite(X, "firing input");
  const double scale = mode == FiringMode::Mean ? 1.0 / C : 1.0;
  Matrix w(X.rows, rule_count);
  for (int u = 0; u < rule_count; ++u) {
    for (int i = 0; i < C; ++i) {
      const int j = chosen[static_cast<size_t>(u) * C + i];
      if (!layer.active(i, j)) throw StructuralError("selection addresses a non-existent term");
    }
  }
  for (int b = 0; b < X.rows; ++b) {
    for (int u = 0; u < rule_count; ++u) {
      double acc = 0.0;
      for (int i = 0; i < C; ++i) {
        const int j = chosen[static_cast<size_t>(u) * C + i];
        const double d = X(b, i) - layer.centers()(i, j);
        const double s = layer.widths()(i, j);
        acc += -d * d / (2.0 * s * s);
      }
      w(b, u) = acc * scale;
    }
  }
  return w;
}

Matrix defuzzify(const Matrix& X, const Matrix& wbar, const TskHead& head, CertaintyMode mode,
                 Matrix* rho_out, std::vector<double>* denom_out) {
  if (X.rows != wbar.rows) throw StructuralError("defuzzify: batch sizes disagree");
  if (wbar.cols != head.rule_count) throw StructuralError("defuzzify: rule counts disagree");
  if (X.cols != head.in_dim) throw StructuralError("defuzzify: input width disagrees");
  if (mode != CertaintyMode::Off && static_cast<int>(head.cf.size()) != head.rule_count)
    throw StructuralError("defuzzify: certainty factors missing");
  Matrix rho;
  std::vector<double> denom;
  effective_weights(wbar, head, mode, rho, denom);
  Tensor3 g = consequents(X, head);
  Matrix y = combine(rho, g);
  if (rho_out) *rho_out = std::move(rho);
  if (denom_out) *denom_out = std::move(denom);
  return y;
}

NfnBlock::NfnBlock(MembershipLayer layer, int rule_count, int out_dim, InferenceConfig config,
                   Rng& rng)
    : layer_(std::move(layer)),
      bank_(rule_count, layer_, rng),
      head_(rule_count, out_dim, layer_.attribute_count(), rng),
      config_(config),
      ln_(rule_count),
      cardinality_(layer_.attribute_count(), layer_.max_terms()) {
  if (config_.layer_norm && rule_count < 2)
    throw ConfigError("layer normalization needs at least two rules");
  if (config_.estimator == Estimator::STGE && !(config_.tau > 0.0))
    throw ConfigError("tau must be > 0");
  if (config_.theta < 0.0 || config_.theta > 100.0)
    throw ConfigError("theta must lie in [0, 100]");
  if (config_.retain_batches < 1) throw ConfigError("noise retention must be >= 1 batch");
}

Matrix NfnBlock::forward(const Matrix& X, Rng& rng, StructureForward mode, BlockTape* tape) {
  const int C = layer_.attribute_count();
  const int U = head_.rule_count;
  if (X.cols != C) throw StructuralError("batch width does not match attribute count");
  require_finite(X, "forward input");

  BlockTape local;
  BlockTape& t = tape ? *tape : local;
  t.X = X;
  t.forward_mode = mode;
  t.version = version_;
  t.logmu = log_memberships(layer_, X);

  const std::vector<uint8_t>* allowed = nullptr;
  std::vector<uint8_t> mask;
  if (config_.theta > 0.0) {
    Tensor3 mu(X.rows, C, layer_.max_terms());
    for (size_t k = 0; k < mu.data.size(); ++k) mu.data[k] = std::exp(t.logmu.data[k]);
    // Restore exact zeros at inactive slots (exp(0) would read as full mass).
    for (int b = 0; b < X.rows; ++b)
      for (int i = 0; i < C; ++i)
        for (int j = layer_.term_count(i); j < layer_.max_terms(); ++j) mu(b, i, j) = 0.0;
    cardinality_.accumulate(mu, layer_);
    mask = constrain_structure(layer_, cardinality_, config_.theta);
    allowed = &mask;
  }

  t.sample = bank_.sample(layer_, config_.estimator, config_.tau, config_.retain_batches, rng,
                          allowed);

  const double scale = config_.mode == FiringMode::Mean ? 1.0 / C : 1.0;
  t.w_pre = Matrix(X.rows, U);
  if (mode == StructureForward::Hard) {
    for (int b = 0; b < X.rows; ++b) {
      for (int u = 0; u < U; ++u) {
        double acc = 0.0;
        for (int i = 0; i < C; ++i) acc += t.logmu(b, i, t.sample.chosen_at(u, i));
        t.w_pre(b, u) = acc * scale;
      }
    }
  } else {
    for (int b = 0; b < X.rows; ++b) {
      for (int u = 0; u < U; ++u) {
        double acc = 0.0;
        for (int i = 0; i < C; ++i) {
          for (int j = 0; j < layer_.term_count(i); ++j) {
            const double s = t.sample.soft(u, i, j);
            if (s != 0.0) acc += s * t.logmu(b, i, j);
          }
        }
        t.w_pre(b, u) = acc * scale;
      }
    }
  }

  Matrix w_post =
      config_.layer_norm ? layer_norm_forward(ln_, t.w_pre, &t.ln) : t.w_pre;
  t.wbar = normalize_firing(w_post, config_.norm);

  Tensor3 g = consequents(X, head_);
  effective_weights(t.wbar, head_, config_.certainty, t.rho, t.denom);
  t.y = combine(t.rho, g);
  t.g = std::move(g);
  return t.y;
}

Matrix NfnBlock::infer_with(const Matrix& X, const std::vector<int>& chosen) const {
  Matrix w = preliminary_firing(layer_, X, chosen, head_.rule_count, config_.mode);
  if (config_.layer_norm) w = layer_norm_forward(ln_, w, nullptr);
  Matrix wbar = normalize_firing(w, config_.norm);
  return defuzzify(X, wbar, head_, config_.certainty);
}

Matrix NfnBlock::infer(const Matrix& X) const {
  return infer_with(X, bank_.current_selection(layer_));
}

BlockGradients NfnBlock::backward(const BlockTape& tape, const Matrix& d_y) const {
  if (tape.version != version_)
    throw UsageError("tape is stale: the network structure changed after this forward");
  const int B = tape.X.rows;
  const int C = layer_.attribute_count();
  const int T = layer_.max_terms();
  const int U = head_.rule_count;
  const int D = head_.out_dim;
  require_shape(d_y, B, D, "backward upstream");

  BlockGradients grads;
  grads.d_centers = Matrix(C, T);
  grads.d_widths = Matrix(C, T);
  grads.d_W = Tensor3(U, D, C);
  grads.d_b = Matrix(U, D);
  grads.d_cf.assign(U, 0.0);
  grads.d_gain.assign(U, 0.0);
  grads.d_bias.assign(U, 0.0);
  grads.d_input = Matrix(B, C);

  // Head: y = sum_u rho_u g_u.
  Matrix d_rho(B, U);
  for (int b = 0; b < B; ++b) {
    for (int u = 0; u < U; ++u) {
      double acc = 0.0;
      const double r = tape.rho(b, u);
      for (int d = 0; d < D; ++d) {
        const double dg = d_y(b, d) * r;
        acc += d_y(b, d) * tape.g(b, u, d);
        grads.d_b(u, d) += dg;
        for (int c = 0; c < C; ++c) grads.d_W(u, d, c) += dg * tape.X(b, c);
      }
      d_rho(b, u) = acc;
    }
  }
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      double acc = 0.0;
      for (int u = 0; u < U; ++u) {
        const double r = tape.rho(b, u);
        if (r == 0.0) continue;
        for (int d = 0; d < D; ++d) acc += d_y(b, d) * r * head_.W(u, d, c);
      }
      grads.d_input(b, c) = acc;
    }

  // Certainty factors.
  Matrix d_wbar(B, U);
  if (config_.certainty == CertaintyMode::Off) {
    d_wbar = d_rho;
  } else if (config_.certainty == CertaintyMode::Raw) {
    for (int b = 0; b < B; ++b)
      for (int u = 0; u < U; ++u) {
        d_wbar(b, u) = head_.cf[u] * d_rho(b, u);
        grads.d_cf[u] += tape.wbar(b, u) * d_rho(b, u);
      }
  } else {
    for (int b = 0; b < B; ++b) {
      double dot = 0.0;
      for (int u = 0; u < U; ++u) dot += d_rho(b, u) * tape.rho(b, u);
      const double inv = 1.0 / tape.denom[b];
      for (int u = 0; u < U; ++u) {
        const double centered = d_rho(b, u) - dot;
        d_wbar(b, u) = head_.cf[u] * inv * centered;
        grads.d_cf[u] += tape.wbar(b, u) * inv * centered;
      }
    }
  }

  // Firing normalization, then optional layer norm.
  Matrix d_wpost = normalize_backward(tape.wbar, d_wbar, config_.norm);
  Matrix d_wpre = config_.layer_norm
                      ? layer_norm_backward(ln_, tape.ln, d_wpost, grads.d_gain, grads.d_bias)
                      : std::move(d_wpost);

  // Straight-through: the soft weights stand in for the one-hot selection.
  const double scale = config_.mode == FiringMode::Mean ? 1.0 / C : 1.0;
  Tensor3 d_soft_upstream(U, C, T);
  for (int i = 0; i < C; ++i) {
    const int terms = layer_.term_count(i);
    for (int j = 0; j < terms; ++j) {
      const double center = layer_.centers()(i, j);
      const double width = layer_.widths()(i, j);
      const double inv_s2 = 1.0 / (width * width);
      for (int b = 0; b < B; ++b) {
        double d_logmu = 0.0;
        for (int u = 0; u < U; ++u)
          d_logmu += d_wpre(b, u) * scale * tape.sample.soft(u, i, j);
        if (d_logmu == 0.0) continue;
        const double d = tape.X(b, i) - center;
        grads.d_centers(i, j) += d_logmu * d * inv_s2;
        grads.d_widths(i, j) += d_logmu * d * d * inv_s2 / width;
        grads.d_input(b, i) += d_logmu * (-d * inv_s2);
      }
      for (int u = 0; u < U; ++u) {
        double acc = 0.0;
        for (int b = 0; b < B; ++b) acc += d_wpre(b, u) * scale * tape.logmu(b, i, j);
        d_soft_upstream(u, i, j) = acc;
      }
    }
  }
  grads.d_logits = bank_.structure_gradient(tape.sample, d_soft_upstream);
  return grads;
}

GrowthEvent NfnBlock::add_term(int attribute, const GaussianSet& set, Rng& rng) {
  GrowthEvent event;
  event.attribute = attribute;
  event.slot = layer_.add_term(attribute, set, &event.grid_grown_from);
  bank_.expand_terms(layer_, attribute, rng);
  ++version_;
  return event;
}

NfnStack::NfnStack(std::vector<NfnBlock> blocks) : blocks_(std::move(blocks)) {
  if (blocks_.empty()) throw ConfigError("stack needs at least one block");
  for (size_t k = 1; k < blocks_.size(); ++k) {
    if (blocks_[k].in_dim() != blocks_[k - 1].out_dim())
      throw StructuralError("block output width does not feed the next block's input");
  }
}

uint64_t NfnStack::version() const {
  uint64_t v = 0;
  for (const auto& b : blocks_) v += b.version();
  return v;
}

Matrix NfnStack::forward(const Matrix& X, Rng& rng, StructureForward mode, Tape* tape) {
  if (tape) {
    tape->blocks.clear();
    tape->blocks.resize(blocks_.size());
  }
  Matrix h = X;
  for (size_t k = 0; k < blocks_.size(); ++k) {
    h = blocks_[k].forward(h, rng, mode, tape ? &tape->blocks[k] : nullptr);
  }
  if (tape) tape->version = version();
  return h;
}

Matrix NfnStack::infer(const Matrix& X) const {
  Matrix h = X;
  for (const auto& b : blocks_) h = b.infer(h);
  return h;
}

NfnStack::Gradients NfnStack::backward(const Tape& tape, const Matrix& d_y) const {
  if (tape.blocks.size() != blocks_.size())
    throw UsageError("tape does not match this stack");
  if (tape.version != version())
    throw UsageError("tape is stale: the network structure changed after this forward");
  Gradients grads;
  grads.blocks.resize(blocks_.size());
  Matrix upstream = d_y;
  for (int k = static_cast<int>(blocks_.size()) - 1; k >= 0; --k) {
    grads.blocks[k] = blocks_[k].backward(tape.blocks[k], upstream);
    upstream = grads.blocks[k].d_input;
  }
  grads.d_input = std::move(upstream);
  return grads;
}

GrowthEvent NfnStack::add_term(int block_index, int attribute, const GaussianSet& set,
                               Rng& rng) {
  if (block_index < 0 || block_index >= block_count())
    throw StructuralError("block index out of range");
  return blocks_[block_index].add_term(attribute, set, rng);
}

}  // namespace nfn
