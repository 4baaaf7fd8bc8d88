#pragma once

#include <utility>
#include <vector>

#include "nfn/common.hpp"

namespace nfn {

// One Gaussian fuzzy set: mu(x) = exp(-(x-c)^2 / (2 sigma^2)).
struct GaussianSet {
  double center = 0.0;
  double width = 1.0;
};

double gaussian_membership(double x, const GaussianSet& set);

// log mu, evaluated analytically (never exp followed by log).
double gaussian_log_membership(double x, const GaussianSet& set);

struct MembershipGradients {
  double d_center = 0.0;
  double d_width = 0.0;
  double d_input = 0.0;
};

MembershipGradients gaussian_membership_gradients(double x, const GaussianSet& set);

// Report of instances that no existing fuzzy set covers at level epsilon.
struct CompletenessReport {
  // (batch row, attribute) pairs with max membership below epsilon.
  std::vector<std::pair<int, int>> failing;
  int batch_size = 0;

  bool complete() const { return failing.empty(); }
  double failure_rate() const {
    return batch_size == 0 ? 0.0 : static_cast<double>(failing.size()) / batch_size;
  }
};

// Bank of Gaussian fuzzy sets, one variable-length row of terms per input
// attribute. Rows are stored in a fixed-width grid (attribute_count x
// max_terms); slot j of attribute i exists iff j < term_count(i). Grids grow
// in place when a new term does not fit, so downstream tensors keyed by term
// slots must be re-laid-out with the same column mapping (see regrow_columns).
class MembershipLayer {
 public:
  MembershipLayer(int attribute_count, int max_terms);

  // Evenly spaced centers over [lo, hi] with widths sized to overlap.
  static MembershipLayer spread(int attribute_count, int terms_per_attribute, double lo,
                                double hi);
  // Random centers in [lo, hi], widths in [0.3, 1.0] * (hi - lo) / terms.
  static MembershipLayer random(int attribute_count, int terms_per_attribute, double lo,
                                double hi, Rng& rng);

  int attribute_count() const { return attribute_count_; }
  int max_terms() const { return max_terms_; }
  int term_count(int attribute) const { return term_count_[attribute]; }
  int total_terms() const;
  bool active(int attribute, int term) const { return term < term_count_[attribute]; }

  double center(int attribute, int term) const;
  double width(int attribute, int term) const;
  GaussianSet set(int attribute, int term) const;

  double& center_ref(int attribute, int term);
  double& width_ref(int attribute, int term);

  double attribute_scale(int attribute) const { return attribute_scale_[attribute]; }
  void set_attribute_scale(int attribute, double scale);

  // Membership tensor over a batch: (|X| x attribute_count x max_terms),
  // exactly 0 at non-existent slots.
  Tensor3 membership_matrix(const Matrix& X) const;

  // Instances whose max membership over existing terms of an attribute falls
  // below epsilon. epsilon must lie in (0, 1).
  CompletenessReport check_completeness(const Matrix& X, double epsilon) const;

  // Appends a term to an attribute; returns its slot index. Grows the grid
  // width when full (old_max_terms reported through *grown_from so callers
  // can re-layout parallel tensors; left untouched otherwise).
  int add_term(int attribute, const GaussianSet& set, int* grown_from = nullptr);

  // Clamp widths to >= floor_factor * attribute_scale. Call after each
  // optimizer step so widths cannot collapse or cross zero.
  void clamp_widths(double floor_factor = 1e-4);

  const Matrix& centers() const { return centers_; }
  const Matrix& widths() const { return widths_; }
  // Flat parameter access for the optimizer; inactive slots must stay inert.
  Matrix& centers_mut() { return centers_; }
  Matrix& widths_mut() { return widths_; }

 private:
  int attribute_count_;
  int max_terms_;
  std::vector<int> term_count_;
  std::vector<double> attribute_scale_;
  Matrix centers_;  // attribute_count x max_terms
  Matrix widths_;

  void check_slot(int attribute, int term) const;
};

// Re-layout a row-major (rows x old_cols) buffer into (rows x new_cols),
// preserving column indices and zero-filling the new tail of each row.
std::vector<double> regrow_columns(const std::vector<double>& flat, int rows, int old_cols,
                                   int new_cols);

}  // namespace nfn
