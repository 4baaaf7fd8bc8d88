#include "nfn/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>

#include "json.hpp"

namespace nfn {

double shannon_entropy(const double* p, int n) {
  double h = 0.0;
  for (int i = 0; i < n; ++i) {
    if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
  }
  return h;
}

double normalized_entropy(const double* p, int n) {
  if (n < 2) return 0.0;
  return shannon_entropy(p, n) / std::log(static_cast<double>(n));
}

int support_count(const double* p, int n) {
  int c = 0;
  for (int i = 0; i < n; ++i)
    if (p[i] > 0.0) ++c;
  return c;
}

double least_squares_slope(const std::vector<double>& y) {
  const int n = static_cast<int>(y.size());
  if (n < 2) return 0.0;
  const double mean_x = (n - 1) / 2.0;
  double mean_y = 0.0;
  for (double v : y) mean_y += v;
  mean_y /= n;
  double num = 0.0;
  double den = 0.0;
  for (int i = 0; i < n; ++i) {
    const double dx = i - mean_x;
    num += dx * (y[i] - mean_y);
    den += dx * dx;
  }
  return num / den;
}

FiringVariant variant_from_string(const std::string& name) {
  FiringVariant v;
  v.name = name;
  std::string rest = name;
  if (rest.rfind("sum_", 0) == 0) {
    v.mode = FiringMode::Sum;
    rest = rest.substr(4);
  } else if (rest.rfind("mean_", 0) == 0) {
    v.mode = FiringMode::Mean;
    rest = rest.substr(5);
  } else {
    throw ConfigError("variant must start with sum_ or mean_: '" + name + "'");
  }
  if (rest.size() >= 3 && rest.rfind("_ln") == rest.size() - 3) {
    v.layer_norm = true;
    rest = rest.substr(0, rest.size() - 3);
  }
  if (rest == "softmax")
    v.norm = NormKind::Softmax;
  else if (rest == "entmax")
    v.norm = NormKind::Entmax15;
  else
    throw ConfigError("variant normalizer must be softmax or entmax: '" + name + "'");
  return v;
}

const std::vector<std::string>& all_variant_names() {
  static const std::vector<std::string> names = {
      "sum_softmax",  "sum_softmax_ln",  "sum_entmax",  "sum_entmax_ln",
      "mean_softmax", "mean_softmax_ln", "mean_entmax", "mean_entmax_ln",
  };
  return names;
}

int FiringStudy::variant_index(const std::string& name) const {
  for (size_t i = 0; i < variants.size(); ++i) {
    if (variants[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

FiringStudy firing_study(int dim, int rules, const std::vector<std::string>& variant_names,
                         uint64_t seed, int observations) {
  if (variant_names.empty()) throw ConfigError("firing study needs at least one variant");
  if (dim < 1 || rules < 2 || observations < 1)
    throw ConfigError("firing study needs dim >= 1, rules >= 2, observations >= 1");

  FiringStudy study;
  study.dim = dim;
  study.rules = rules;
  study.observations = observations;
  for (const std::string& name : variant_names)
    study.variants.push_back(variant_from_string(name));

  // Shared material: one random layer, one sampled structure, one batch.
  Rng rng(seed);
  MembershipLayer layer = MembershipLayer::random(dim, 2, -1.0, 1.0, rng);
  RuleBank bank(rules, layer, rng);
  StructureSample sample = bank.sample(layer, Estimator::STGE, 0.5, 1, rng);
  Matrix X(observations, dim);
  std::uniform_real_distribution<double> xs(-1.0, 1.0);
  for (double& v : X.data) v = xs(rng);
  LayerNorm ln(rules);  // unit gain, zero bias

  for (const FiringVariant& variant : study.variants) {
    Matrix w = preliminary_firing(layer, X, sample.chosen, rules, variant.mode);
    Matrix w_post = variant.layer_norm ? layer_norm_forward(ln, w, nullptr) : w;
    Matrix wbar = normalize_firing(w_post, variant.norm);

    VariantSummary summary;
    summary.name = variant.name;
    std::vector<double> supports(observations);
    double entropy_sum = 0.0;
    for (int b = 0; b < observations; ++b) {
      entropy_sum += normalized_entropy(wbar.row(b), rules);
      supports[b] = support_count(wbar.row(b), rules);
    }
    for (double v : w.data)
      if (!std::isfinite(v)) summary.all_finite = false;
    for (double v : wbar.data)
      if (!std::isfinite(v)) summary.all_finite = false;
    summary.mean_normalized_entropy = entropy_sum / observations;
    std::sort(supports.begin(), supports.end());
    summary.median_support = observations % 2 == 1
                                 ? supports[observations / 2]
                                 : (supports[observations / 2 - 1] + supports[observations / 2]) / 2.0;
    study.w.push_back(std::move(w));
    study.wbar.push_back(std::move(wbar));
    study.summaries.push_back(std::move(summary));
  }
  return study;
}

void write_firing_csv(const FiringStudy& study, std::ostream& out) {
  out << "variant,observation,rule,w,wbar,log10_wbar,rank\n";
  std::vector<int> order(study.rules);
  char buf[64];
  for (size_t v = 0; v < study.variants.size(); ++v) {
    const Matrix& w = study.w[v];
    const Matrix& wbar = study.wbar[v];
    for (int b = 0; b < study.observations; ++b) {
      for (int u = 0; u < study.rules; ++u) order[u] = u;
      const double* row = wbar.row(b);
      std::stable_sort(order.begin(), order.end(),
                       [row](int a, int c) { return row[a] > row[c]; });
      std::vector<int> rank(study.rules);
      for (int r = 0; r < study.rules; ++r) rank[order[r]] = r;
      for (int u = 0; u < study.rules; ++u) {
        out << study.variants[v].name << ',' << b << ',' << u << ',';
        std::snprintf(buf, sizeof buf, "%.17g", w(b, u));
        out << buf << ',';
        std::snprintf(buf, sizeof buf, "%.17g", wbar(b, u));
        out << buf << ',';
        if (wbar(b, u) > 0.0) {
          std::snprintf(buf, sizeof buf, "%.17g", std::log10(wbar(b, u)));
          out << buf;
        }
        out << ',' << rank[u] << '\n';
      }
    }
  }
}

void write_firing_summary_csv(const FiringStudy& study, std::ostream& out) {
  out << "variant,mean_normalized_entropy,median_support,all_finite\n";
  char buf[64];
  for (const VariantSummary& s : study.summaries) {
    std::snprintf(buf, sizeof buf, "%.17g", s.mean_normalized_entropy);
    out << s.name << ',' << buf << ',';
    std::snprintf(buf, sizeof buf, "%.17g", s.median_support);
    out << buf << ',' << (s.all_finite ? 1 : 0) << '\n';
  }
}

std::vector<EpochStructureRow> structure_report(std::istream& metrics_jsonl,
                                                int steps_per_epoch) {
  if (steps_per_epoch < 1) throw ConfigError("steps_per_epoch must be >= 1");
  std::vector<EpochStructureRow> rows;
  std::vector<long long> counts;
  std::string line;
  while (std::getline(metrics_jsonl, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    const long long step = j.at("step").get<long long>();
    const int epoch = static_cast<int>(step / steps_per_epoch);
    if (rows.empty() || rows.back().epoch != epoch) {
      rows.push_back({});
      rows.back().epoch = epoch;
      counts.push_back(0);
    }
    EpochStructureRow& row = rows.back();
    row.structure_edits += j.at("structure_edits").get<long long>();
    row.epsilon_failures += j.at("epsilon_failures").get<long long>();
    row.mean_loss += j.at("loss").get<double>();
    int terms = 0;
    for (const auto& t : j.at("term_counts")) terms += t.get<int>();
    row.term_count_end = terms;
    ++counts.back();
  }
  for (size_t k = 0; k < rows.size(); ++k) rows[k].mean_loss /= counts[k];
  return rows;
}

void write_structure_report_csv(const std::vector<EpochStructureRow>& rows, std::ostream& out) {
  out << "epoch,structure_edits,epsilon_failures,mean_loss,term_count_end\n";
  char buf[64];
  for (const EpochStructureRow& r : rows) {
    out << r.epoch << ',' << r.structure_edits << ',' << r.epsilon_failures << ',';
    std::snprintf(buf, sizeof buf, "%.17g", r.mean_loss);
    out << buf << ',' << r.term_count_end << '\n';
  }
}

}  // namespace nfn
