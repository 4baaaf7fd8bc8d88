#include "nfn/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace nfn {

LossGrad mse_loss(const Matrix& pred, const Matrix& target) {
  require_shape(target, pred.rows, pred.cols, "mse target");
  if (pred.rows == 0) throw InputError("mse over an empty batch");
  LossGrad out;
  out.d_pred = Matrix(pred.rows, pred.cols);
  const double scale = 1.0 / (static_cast<double>(pred.rows) * pred.cols);
  for (int b = 0; b < pred.rows; ++b) {
    for (int d = 0; d < pred.cols; ++d) {
      const double e = pred(b, d) - target(b, d);
      out.loss += e * e * scale;
      out.d_pred(b, d) = 2.0 * e * scale;
    }
  }
  return out;
}

std::vector<ParamBinding> bind_params(NfnStack& stack, NfnStack::Gradients& grads) {
  if (static_cast<size_t>(stack.block_count()) != grads.blocks.size())
    throw StructuralError("gradients do not match the stack");
  std::vector<ParamBinding> out;
  for (int k = 0; k < stack.block_count(); ++k) {
    NfnBlock& block = stack.block(k);
    BlockGradients& g = grads.blocks[k];
    const std::string prefix = "block" + std::to_string(k) + ".";
    const int C = block.layer().attribute_count();
    const int T = block.layer().max_terms();
    const int U = block.rule_count();
    const int D = block.out_dim();
    out.push_back({prefix + "centers", block.layer().centers_mut().data.data(),
                   g.d_centers.data.data(), C, T});
    out.push_back({prefix + "widths", block.layer().widths_mut().data.data(),
                   g.d_widths.data.data(), C, T});
    out.push_back({prefix + "logits", block.bank().logits_mut().data.data(),
                   g.d_logits.data.data(), U * C, T});
    out.push_back({prefix + "W", block.head().W.data.data(), g.d_W.data.data(), U * D, C});
    out.push_back({prefix + "b", block.head().b.data.data(), g.d_b.data.data(), U, D});
    if (block.config().certainty != CertaintyMode::Off)
      out.push_back({prefix + "cf", block.head().cf.data(), g.d_cf.data(), 1, U});
    if (block.config().layer_norm) {
      out.push_back({prefix + "ln_gain", block.layer_norm().gain.data(), g.d_gain.data(), 1, U});
      out.push_back({prefix + "ln_bias", block.layer_norm().bias.data(), g.d_bias.data(), 1, U});
    }
  }
  return out;
}

void remap_after_growth(Adam& adam, const NfnStack& stack, int block_index,
                        const GrowthEvent& event) {
  if (event.grid_grown_from == 0) return;  // slot reused an existing column
  const NfnBlock& block = stack.block(block_index);
  const std::string prefix = "block" + std::to_string(block_index) + ".";
  const int C = block.layer().attribute_count();
  const int T = block.layer().max_terms();
  const int U = block.rule_count();
  adam.remap(prefix + "centers", C, event.grid_grown_from, T);
  adam.remap(prefix + "widths", C, event.grid_grown_from, T);
  adam.remap(prefix + "logits", U * C, event.grid_grown_from, T);
}

FdReport gradient_check(const NfnStack& stack, const Matrix& X, const Matrix& Y,
                        double h_scale, double tol, uint64_t seed) {
  NfnStack net = stack;
  for (int k = 0; k < net.block_count(); ++k) {
    // Freeze structure noise across the many probe forwards and drop the
    // cardinality constraint, which is data-dependent and non-smooth.
    net.block(k).config().retain_batches = std::numeric_limits<int>::max();
    net.block(k).config().theta = 0.0;
  }
  Rng rng(seed);
  NfnStack::Tape tape;
  Matrix pred = net.forward(X, rng, StructureForward::Soft, &tape);
  LossGrad lg = mse_loss(pred, Y);
  NfnStack::Gradients grads = net.backward(tape, lg.d_pred);
  std::vector<ParamBinding> params = bind_params(net, grads);

  FdReport report;
  for (int k = 0; k < net.block_count(); ++k) {
    const NfnBlock& block = net.block(k);
    if (block.config().norm != NormKind::Entmax15) continue;
    const BlockTape& bt = tape.blocks[k];
    const int U = block.rule_count();
    for (int b = 0; b < bt.wbar.rows; ++b) {
      // Recover w_post from the tape, then the threshold t from the largest
      // support entry; margin = min distance of any w/2 to t.
      std::vector<double> w_post(U);
      for (int u = 0; u < U; ++u) {
        w_post[u] = block.config().layer_norm
                        ? block.layer_norm().gain[u] * bt.ln.xhat(b, u) +
                              block.layer_norm().bias[u]
                        : bt.w_pre(b, u);
      }
      int u_max = 0;
      for (int u = 1; u < U; ++u)
        if (w_post[u] > w_post[u_max]) u_max = u;
      const double t = w_post[u_max] / 2.0 - std::sqrt(bt.wbar(b, u_max));
      for (int u = 0; u < U; ++u) {
        report.entmax_min_margin =
            std::min(report.entmax_min_margin, std::abs(w_post[u] / 2.0 - t));
      }
    }
  }

  auto loss_at = [&]() {
    Matrix p = net.forward(X, rng, StructureForward::Soft, nullptr);
    return mse_loss(p, Y).loss;
  };
  for (const ParamBinding& p : params) {
    for (size_t idx = 0; idx < p.size(); ++idx) {
      const double p0 = p.value[idx];
      const double h = h_scale * std::max(1.0, std::abs(p0));
      p.value[idx] = p0 + h;
      const double lp = loss_at();
      p.value[idx] = p0 - h;
      const double lm = loss_at();
      p.value[idx] = p0;
      const double fd = (lp - lm) / (2.0 * h);
      const double analytic = p.grad[idx];
      const double rel =
          std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-4});
      report.max_rel_err = std::max(report.max_rel_err, rel);
      ++report.params_checked;
      if (rel > tol) report.failures.push_back({p.name, idx, analytic, fd, rel});
    }
  }
  return report;
}

FitResult fit_supervised(NfnStack& stack, Adam& adam, const Matrix& X, const Matrix& Y,
                         const SupervisedConfig& config) {
  if (X.rows == 0 || X.rows != Y.rows) throw InputError("dataset rows mismatch");
  if (X.cols != stack.in_dim() || Y.cols != stack.out_dim())
    throw StructuralError("dataset width does not match the network");
  if (config.batch_size < 1 || config.steps < 1)
    throw ConfigError("batch size and step count must be positive");

  Rng rng(config.seed);
  std::ofstream metrics;
  std::ofstream events;
  if (!config.metrics_path.empty()) {
    metrics.open(config.metrics_path);
    if (!metrics) throw InputError("cannot open metrics path " + config.metrics_path);
  }
  if (!config.events_path.empty()) {
    events.open(config.events_path);
    if (!events) throw InputError("cannot open events path " + config.events_path);
  }

  std::vector<NeurogenesisState> states;
  for (int k = 0; k < stack.block_count(); ++k)
    states.emplace_back(stack.block(k).in_dim());

  std::uniform_int_distribution<int> pick(0, X.rows - 1);
  std::vector<int> prev_chosen;
  FitResult result;

  for (int step = 0; step < config.steps; ++step) {
    Matrix xb(config.batch_size, X.cols);
    Matrix yb(config.batch_size, Y.cols);
    for (int b = 0; b < config.batch_size; ++b) {
      const int r = pick(rng);
      for (int c = 0; c < X.cols; ++c) xb(b, c) = X(r, c);
      for (int d = 0; d < Y.cols; ++d) yb(b, d) = Y(r, d);
    }

    NfnStack::Tape tape;
    Matrix pred = stack.forward(xb, rng, StructureForward::Hard, &tape);
    LossGrad lg = mse_loss(pred, yb);
    if (!std::isfinite(lg.loss))
      throw TrainingError("loss became non-finite at step " + std::to_string(step));
    NfnStack::Gradients grads = stack.backward(tape, lg.d_pred);
    std::vector<ParamBinding> params = bind_params(stack, grads);
    adam.step(params);
    for (int k = 0; k < stack.block_count(); ++k)
      stack.block(k).layer().clamp_widths(config.neuro.width_floor_factor);

    int epsilon_failures = 0;
    if (config.neurogenesis && config.neuro.epsilon > 0.0) {
      for (int k = 0; k < stack.block_count(); ++k) {
        CompletenessReport report = completeness_from_tape(
            tape.blocks[k], stack.block(k).layer(), config.neuro.epsilon);
        epsilon_failures += static_cast<int>(report.failing.size());
        states[k].observe(report, tape.blocks[k].X);
        for (const SproutEvent& e :
             states[k].sprout(stack.block(k), k, config.neuro, step, rng)) {
          remap_after_growth(adam, stack, k, e.growth);
          ++result.sprouts;
          if (events) {
            nlohmann::json row = {{"step", e.step},           {"block", e.block},
                                  {"attribute", e.attribute}, {"center", e.center},
                                  {"width", e.width},         {"samples", e.samples},
                                  {"batches_waited", e.batches_waited}};
            events << row.dump() << "\n";
          }
        }
      }
    }

    std::vector<int> chosen;
    for (int k = 0; k < stack.block_count(); ++k) {
      const auto& c = tape.blocks[k].sample.chosen;
      chosen.insert(chosen.end(), c.begin(), c.end());
    }
    int edits = 0;
    if (prev_chosen.size() == chosen.size()) {
      for (size_t i = 0; i < chosen.size(); ++i)
        if (chosen[i] != prev_chosen[i]) ++edits;
    }
    prev_chosen = std::move(chosen);
    result.total_structure_edits += edits;

    if (metrics) {
      std::vector<int> term_counts;
      for (int k = 0; k < stack.block_count(); ++k)
        term_counts.push_back(stack.block(k).layer().total_terms());
      nlohmann::json row = {{"step", step},
                            {"loss", lg.loss},
                            {"epsilon_failures", epsilon_failures},
                            {"structure_edits", edits},
                            {"term_counts", term_counts}};
      metrics << row.dump() << "\n";
    }
    result.loss_history.push_back(lg.loss);
    result.final_loss = lg.loss;
  }
  return result;
}

}  // namespace nfn
