#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "nfn/common.hpp"
#include "nfn/membership.hpp"
#include "nfn/normalize.hpp"
#include "nfn/network.hpp"

namespace nfn {

// Shannon entropy of a distribution row, 0 log 0 = 0.
double shannon_entropy(const double* p, int n);
// Entropy divided by log(n); 1 = uniform.
double normalized_entropy(const double* p, int n);
// Number of strictly positive entries.
int support_count(const double* p, int n);

// Least-squares slope of y against 0..n-1; 0 for fewer than two points.
double least_squares_slope(const std::vector<double>& y);

// One firing-level configuration under study.
struct FiringVariant {
  std::string name;
  FiringMode mode = FiringMode::Sum;
  NormKind norm = NormKind::Softmax;
  bool layer_norm = false;
};

// Names: {sum|mean}_{softmax|entmax}[_ln], e.g. "sum_softmax_ln".
FiringVariant variant_from_string(const std::string& name);
const std::vector<std::string>& all_variant_names();

struct VariantSummary {
  std::string name;
  double mean_normalized_entropy = 0.0;
  double median_support = 0.0;
  bool all_finite = true;
};

// Firing levels of one random network evaluated under several normalization
// variants on shared parameters, structure and observations.
struct FiringStudy {
  int dim = 0;
  int rules = 0;
  int observations = 0;
  std::vector<FiringVariant> variants;
  std::vector<Matrix> w;     // per variant: observations x rules
  std::vector<Matrix> wbar;  // per variant: observations x rules
  std::vector<VariantSummary> summaries;

  int variant_index(const std::string& name) const;  // -1 when absent
};

FiringStudy firing_study(int dim, int rules, const std::vector<std::string>& variant_names,
                         uint64_t seed, int observations = 100);

// Per-(observation, rule) rows: variant,observation,rule,w,wbar,log10_wbar,rank.
void write_firing_csv(const FiringStudy& study, std::ostream& out);
// Per-variant rows: variant,mean_normalized_entropy,median_support,all_finite.
void write_firing_summary_csv(const FiringStudy& study, std::ostream& out);

// Per-epoch aggregation of a training metrics stream (JSONL rows with step,
// loss, epsilon_failures, structure_edits, term_counts).
struct EpochStructureRow {
  int epoch = 0;
  long long structure_edits = 0;
  long long epsilon_failures = 0;
  double mean_loss = 0.0;
  int term_count_end = 0;
};

std::vector<EpochStructureRow> structure_report(std::istream& metrics_jsonl,
                                                int steps_per_epoch);
void write_structure_report_csv(const std::vector<EpochStructureRow>& rows, std::ostream& out);

}  // namespace nfn
