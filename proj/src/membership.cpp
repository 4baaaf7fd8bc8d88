#include "nfn/membership.hpp"

#include <algorithm>
#include <cmath>

namespace nfn {

namespace {

void check_set(const GaussianSet& set) {
  if (!(set.width > 0.0) || !std::isfinite(set.width) || !std::isfinite(set.center)) {
    throw ConfigError("Gaussian set requires finite center and width > 0");
  }
}

}  // namespace

double gaussian_membership(double x, const GaussianSet& set) {
  check_set(set);
  const double d = x - set.center;
  return std::exp(-d * d / (2.0 * set.width * set.width));
}

double gaussian_log_membership(double x, const GaussianSet& set) {
  check_set(set);
  const double d = x - set.center;
  return -d * d / (2.0 * set.width * set.width);
}

MembershipGradients gaussian_membership_gradients(double x, const GaussianSet& set) {
  const double mu = gaussian_membership(x, set);
  const double d = x - set.center;
  const double s2 = set.width * set.width;
  MembershipGradients g;
  g.d_center = mu * d / s2;
  g.d_width = mu * d * d / (s2 * set.width);
  g.d_input = -g.d_center;
  return g;
}

MembershipLayer::MembershipLayer(int attribute_count, int max_terms)
    : attribute_count_(attribute_count),
      max_terms_(max_terms),
      term_count_(attribute_count, 0),
      attribute_scale_(attribute_count, 1.0),
      centers_(attribute_count, max_terms),
      widths_(attribute_count, max_terms, 1.0) {
  if (attribute_count < 1 || max_terms < 1) {
    throw ConfigError("membership layer needs at least one attribute and one term slot");
  }
}

MembershipLayer MembershipLayer::spread(int attribute_count, int terms_per_attribute, double lo,
                                        double hi) {
  if (!(hi > lo)) throw ConfigError("membership spread requires hi > lo");
  MembershipLayer layer(attribute_count, terms_per_attribute);
  const double span = hi - lo;
  const double width = terms_per_attribute > 1 ? span / (terms_per_attribute - 1) : span / 2.0;
  for (int i = 0; i < attribute_count; ++i) {
    layer.set_attribute_scale(i, span);
    for (int j = 0; j < terms_per_attribute; ++j) {
      const double c =
          terms_per_attribute > 1 ? lo + span * j / (terms_per_attribute - 1) : (lo + hi) / 2.0;
      layer.add_term(i, {c, width});
    }
  }
  return layer;
}

MembershipLayer MembershipLayer::random(int attribute_count, int terms_per_attribute, double lo,
                                        double hi, Rng& rng) {
  if (!(hi > lo)) throw ConfigError("membership random init requires hi > lo");
  MembershipLayer layer(attribute_count, terms_per_attribute);
  std::uniform_real_distribution<double> center_dist(lo, hi);
  std::uniform_real_distribution<double> width_scale(0.3, 1.0);
  const double base = (hi - lo) / terms_per_attribute;
  for (int i = 0; i < attribute_count; ++i) {
    layer.set_attribute_scale(i, hi - lo);
    for (int j = 0; j < terms_per_attribute; ++j) {
      layer.add_term(i, {center_dist(rng), base * width_scale(rng)});
    }
  }
  return layer;
}

int MembershipLayer::total_terms() const {
  int total = 0;
  for (int c : term_count_) total += c;
  return total;
}

void MembershipLayer::check_slot(int attribute, int term) const {
  if (attribute < 0 || attribute >= attribute_count_)
    throw StructuralError("attribute index out of range");
  if (term < 0 || term >= term_count_[attribute])
    throw StructuralError("term index addresses a non-existent slot");
}

double MembershipLayer::center(int attribute, int term) const {
  check_slot(attribute, term);
  return centers_(attribute, term);
}

double MembershipLayer::width(int attribute, int term) const {
  check_slot(attribute, term);
  return widths_(attribute, term);
}

GaussianSet MembershipLayer::set(int attribute, int term) const {
  check_slot(attribute, term);
  return {centers_(attribute, term), widths_(attribute, term)};
}

double& MembershipLayer::center_ref(int attribute, int term) {
  check_slot(attribute, term);
  return centers_(attribute, term);
}

double& MembershipLayer::width_ref(int attribute, int term) {
  check_slot(attribute, term);
  return widths_(attribute, term);
}

void MembershipLayer::set_attribute_scale(int attribute, double scale) {
  if (attribute < 0 || attribute >= attribute_count_)
    throw StructuralError("attribute index out of range");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ConfigError("attribute scale must be > 0");
  attribute_scale_[attribute] = scale;
}

Tensor3 MembershipLayer::membership_matrix(const Matrix& X) const {
  if (X.cols != attribute_count_)
    throw StructuralError("batch width does not match attribute count");
  require_finite(X, "membership input");
  Tensor3 mu(X.rows, attribute_count_, max_terms_);
  for (int b = 0; b < X.rows; ++b) {
    for (int i = 0; i < attribute_count_; ++i) {
      const double x = X(b, i);
      for (int j = 0; j < term_count_[i]; ++j) {
        const double d = x - centers_(i, j);
        const double w = widths_(i, j);
        mu(b, i, j) = std::exp(-d * d / (2.0 * w * w));
      }
    }
  }
  return mu;
}

CompletenessReport MembershipLayer::check_completeness(const Matrix& X, double epsilon) const {
  if (epsilon <= 0.0 || epsilon >= 1.0) throw ConfigError("epsilon must lie in (0, 1)");
  if (X.cols != attribute_count_)
    throw StructuralError("batch width does not match attribute count");
  require_finite(X, "completeness input");
  CompletenessReport report;
  report.batch_size = X.rows;
  for (int b = 0; b < X.rows; ++b) {
    for (int i = 0; i < attribute_count_; ++i) {
      const double x = X(b, i);
      double best = 0.0;
      for (int j = 0; j < term_count_[i]; ++j) {
        const double d = x - centers_(i, j);
        const double w = widths_(i, j);
        best = std::max(best, std::exp(-d * d / (2.0 * w * w)));
      }
      if (best < epsilon) report.failing.emplace_back(b, i);
    }
  }
  return report;
}

int MembershipLayer::add_term(int attribute, const GaussianSet& set, int* grown_from) {
  if (attribute < 0 || attribute >= attribute_count_)
    throw StructuralError("attribute index out of range");
  check_set(set);
  if (grown_from) *grown_from = 0;
  if (term_count_[attribute] == max_terms_) {
    const int old = max_terms_;
    const int wider = max_terms_ * 2;
    centers_.data = regrow_columns(centers_.data, attribute_count_, old, wider);
    widths_.data = regrow_columns(widths_.data, attribute_count_, old, wider);
    centers_.cols = wider;
    widths_.cols = wider;
    // Unused slots keep width 1.0 so serialization and clamping stay benign.
    for (int i = 0; i < attribute_count_; ++i)
      for (int j = old; j < wider; ++j) widths_(i, j) = 1.0;
    max_terms_ = wider;
    if (grown_from) *grown_from = old;
  }
  const int slot = term_count_[attribute]++;
  centers_(attribute, slot) = set.center;
  widths_(attribute, slot) = set.width;
  return slot;
}

void MembershipLayer::clamp_widths(double floor_factor) {
  for (int i = 0; i < attribute_count_; ++i) {
    const double floor = floor_factor * attribute_scale_[i];
    for (int j = 0; j < term_count_[i]; ++j) {
      if (widths_(i, j) < floor) widths_(i, j) = floor;
    }
  }
}

std::vector<double> regrow_columns(const std::vector<double>& flat, int rows, int old_cols,
                                   int new_cols) {
  if (new_cols < old_cols) throw StructuralError("regrow_columns cannot shrink");
  if (flat.size() != static_cast<size_t>(rows) * old_cols)
    throw StructuralError("regrow_columns: buffer size does not match rows x old_cols");
  std::vector<double> out(static_cast<size_t>(rows) * new_cols, 0.0);
  for (int r = 0; r < rows; ++r) {
    std::copy_n(flat.begin() + static_cast<size_t>(r) * old_cols, old_cols,
                out.begin() + static_cast<size_t>(r) * new_cols);
  }
  return out;
}

}  // namespace nfn
