#include "nfn/rule_bank.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nfn {

void ScalarCardinality::sync_shape(const MembershipLayer& layer) {
  if (s_.rows == 0) {
    s_ = Matrix(layer.attribute_count(), layer.max_terms());
    return;
  }
  if (s_.rows != layer.attribute_count())
    throw StructuralError("cardinality attribute count does not match layer");
  if (s_.cols < layer.max_terms()) {
    s_.data = regrow_columns(s_.data, s_.rows, s_.cols, layer.max_terms());
    s_.cols = layer.max_terms();
  }
}

void ScalarCardinality::accumulate(const Tensor3& memberships, const MembershipLayer& layer) {
  sync_shape(layer);
  if (memberships.n1 != layer.attribute_count() || memberships.n2 != layer.max_terms())
    throw StructuralError("membership tensor does not match layer shape");
  for (int i = 0; i < layer.attribute_count(); ++i) {
    for (int j = 0; j < layer.term_count(i); ++j) {
      double batch_sum = 0.0;
      for (int b = 0; b < memberships.n0; ++b) batch_sum += memberships(b, i, j);
      s_(i, j) = 0.99 * s_(i, j) + batch_sum;
    }
  }
}

double percentile(std::vector<double> values, double theta) {
  if (values.empty()) throw InputError("percentile of an empty set");
  if (theta < 0.0 || theta > 100.0) throw ConfigError("percentile rank must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const double rank = theta / 100.0 * (values.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(rank));
  const size_t hi = static_cast<size_t>(std::ceil(rank));
  const double frac = rank - lo;
  return values[lo] + (values[hi] - values[lo]) * frac;
}

std::vector<uint8_t> constrain_structure(const MembershipLayer& layer,
                                         const ScalarCardinality& cardinality, double theta) {
  if (theta < 0.0 || theta > 100.0) throw ConfigError("theta must lie in [0, 100]");
  const int C = layer.attribute_count();
  const int T = layer.max_terms();
  std::vector<uint8_t> mask(static_cast<size_t>(C) * T, 0);
  for (int i = 0; i < C; ++i) {
    for (int j = 0; j < layer.term_count(i); ++j) mask[static_cast<size_t>(i) * T + j] = 1;
  }
  if (theta == 0.0) return mask;

  const Matrix& s = cardinality.values();
  if (s.rows != C || s.cols < T)
    throw StructuralError("cardinality shape does not match layer; call accumulate first");
  for (int i = 0; i < C; ++i) {
    const int n = layer.term_count(i);
    if (n <= 1) continue;
    std::vector<double> vals(n);
    double best = -std::numeric_limits<double>::infinity();
    int best_j = 0;
    for (int j = 0; j < n; ++j) {
      vals[j] = s(i, j);
      if (vals[j] > best) {
        best = vals[j];
        best_j = j;
      }
    }
    const double cut = percentile(vals, theta);
    for (int j = 0; j < n; ++j) {
      if (s(i, j) < cut) mask[static_cast<size_t>(i) * T + j] = 0;
    }
    // The best-supported term can never be excluded.
    mask[static_cast<size_t>(i) * T + best_j] = 1;
  }
  return mask;
}

RuleBank::RuleBank(int rule_count, const MembershipLayer& layer, Rng& rng)
    : rule_count_(rule_count),
      attribute_count_(layer.attribute_count()),
      max_terms_(layer.max_terms()),
      term_count_(layer.attribute_count()),
      logits_(rule_count, layer.attribute_count(), layer.max_terms()),
      noise_(rule_count, layer.attribute_count(), layer.max_terms()) {
  if (rule_count < 1) throw ConfigError("rule bank needs at least one rule");
  std::uniform_real_distribution<double> init(-0.5, 0.5);
  for (int i = 0; i < attribute_count_; ++i) {
    term_count_[i] = layer.term_count(i);
    if (term_count_[i] < 1)
      throw ConfigError("every attribute needs at least one term before building rules");
  }
  for (int u = 0; u < rule_count_; ++u)
    for (int i = 0; i < attribute_count_; ++i)
      for (int j = 0; j < term_count_[i]; ++j) logits_(u, i, j) = init(rng);
}

void RuleBank::check_layer(const MembershipLayer& layer) const {
  if (layer.attribute_count() != attribute_count_ || layer.max_terms() != max_terms_)
    throw StructuralError("rule bank is out of sync with the membership layer grid");
  for (int i = 0; i < attribute_count_; ++i) {
    if (layer.term_count(i) != term_count_[i])
      throw StructuralError(
          "rule bank term counts lag the layer; call expand_terms after add_term");
  }
}

void RuleBank::draw_noise(Rng& rng) {
  for (int u = 0; u < rule_count_; ++u)
    for (int i = 0; i < attribute_count_; ++i)
      for (int j = 0; j < term_count_[i]; ++j) noise_(u, i, j) = gumbel_draw(rng);
}

StructureSample RuleBank::sample(const MembershipLayer& layer, Estimator estimator, double tau,
                                 int retain_batches, Rng& rng,
                                 const std::vector<uint8_t>* allowed) {
  check_layer(layer);
  if (estimator == Estimator::STGE && !(tau > 0.0)) throw ConfigError("tau must be > 0");
  if (retain_batches < 1) throw ConfigError("noise retention must be >= 1 batch");
  if (allowed && allowed->size() != static_cast<size_t>(attribute_count_) * max_terms_)
    throw StructuralError("allowed mask has wrong shape");

  if (estimator == Estimator::STGE) {
    if (!has_noise_) {
      draw_noise(rng);
      has_noise_ = true;
      noise_age_ = 0;
    } else {
      ++noise_age_;
      if (noise_age_ >= retain_batches) {
        draw_noise(rng);
        noise_age_ = 0;
      }
    }
  }

  StructureSample sample;
  sample.rule_count = rule_count_;
  sample.attribute_count = attribute_count_;
  sample.max_terms = max_terms_;
  sample.estimator = estimator;
  sample.tau = tau;
  sample.chosen.assign(static_cast<size_t>(rule_count_) * attribute_count_, 0);
  sample.soft = Tensor3(rule_count_, attribute_count_, max_terms_);

  std::vector<double> z(max_terms_);
  for (int u = 0; u < rule_count_; ++u) {
    for (int i = 0; i < attribute_count_; ++i) {
      int best = -1;
      double best_z = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < term_count_[i]; ++j) {
        if (allowed && !(*allowed)[static_cast<size_t>(i) * max_terms_ + j]) {
          z[j] = -std::numeric_limits<double>::infinity();
          continue;
        }
        z[j] = estimator == Estimator::STGE ? (logits_(u, i, j) + noise_(u, i, j)) / tau
                                            : logits_(u, i, j);
        if (z[j] > best_z) {
          best_z = z[j];
          best = j;
        }
      }
      if (best < 0) throw StructuralError("no sampleable term for an attribute");
      sample.chosen[static_cast<size_t>(u) * attribute_count_ + i] = best;
      double sum = 0.0;
      for (int j = 0; j < term_count_[i]; ++j) {
        if (std::isinf(z[j])) continue;
        sample.soft(u, i, j) = std::exp(z[j] - best_z);
        sum += sample.soft(u, i, j);
      }
      for (int j = 0; j < term_count_[i]; ++j) {
        if (std::isinf(z[j]))
          sample.soft(u, i, j) = 0.0;
        else
          sample.soft(u, i, j) /= sum;
      }
    }
  }
  return sample;
}

std::vector<int> RuleBank::current_selection(const MembershipLayer& layer) const {
  check_layer(layer);
  std::vector<int> chosen(static_cast<size_t>(rule_count_) * attribute_count_, 0);
  for (int u = 0; u < rule_count_; ++u) {
    for (int i = 0; i < attribute_count_; ++i) {
      int best = 0;
      double best_z = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < term_count_[i]; ++j) {
        const double zj = logits_(u, i, j);
        if (zj > best_z) {
          best_z = zj;
          best = j;
        }
      }
      chosen[static_cast<size_t>(u) * attribute_count_ + i] = best;
    }
  }
  return chosen;
}

Tensor3 RuleBank::structure_gradient(const StructureSample& sample,
                                     const Tensor3& upstream) const {
  if (sample.rule_count != rule_count_ || sample.attribute_count != attribute_count_ ||
      sample.max_terms != max_terms_)
    throw StructuralError("structure sample does not match this bank");
  if (upstream.n0 != rule_count_ || upstream.n1 != attribute_count_ ||
      upstream.n2 != max_terms_)
    throw StructuralError("structure gradient upstream has wrong shape");
  const double inv_tau = sample.estimator == Estimator::STGE ? 1.0 / sample.tau : 1.0;
  Tensor3 dlogits(rule_count_, attribute_count_, max_terms_);
  for (int u = 0; u < rule_count_; ++u) {
    for (int i = 0; i < attribute_count_; ++i) {
      double dot = 0.0;
      for (int j = 0; j < term_count_[i]; ++j)
        dot += upstream(u, i, j) * sample.soft(u, i, j);
      for (int j = 0; j < term_count_[i]; ++j) {
        const double s = sample.soft(u, i, j);
        dlogits(u, i, j) = s == 0.0 ? 0.0 : s * (upstream(u, i, j) - dot) * inv_tau;
      }
    }
  }
  return dlogits;
}

void RuleBank::expand_terms(const MembershipLayer& layer, int attribute, Rng& rng) {
  if (attribute < 0 || attribute >= attribute_count_)
    throw StructuralError("attribute index out of range");
  if (layer.attribute_count() != attribute_count_)
    throw StructuralError("layer attribute count does not match rule bank");
  if (layer.term_count(attribute) != term_count_[attribute] + 1)
    throw UsageError("expand_terms expects exactly one freshly added term to absorb");

  if (layer.max_terms() > max_terms_) {
    const int rows = rule_count_ * attribute_count_;
    logits_.data = regrow_columns(logits_.data, rows, max_terms_, layer.max_terms());
    noise_.data = regrow_columns(noise_.data, rows, max_terms_, layer.max_terms());
    max_terms_ = layer.max_terms();
    logits_.n2 = max_terms_;
    noise_.n2 = max_terms_;
  }

  const int slot = term_count_[attribute];
  for (int u = 0; u < rule_count_; ++u) {
    double mean = 0.0;
    for (int j = 0; j < slot; ++j) mean += logits_(u, attribute, j);
    logits_(u, attribute, slot) = slot > 0 ? mean / slot : 0.0;
    if (has_noise_) noise_(u, attribute, slot) = gumbel_draw(rng);
  }
  term_count_[attribute] = slot + 1;
}

}  // namespace nfn
