#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nfn/common.hpp"

namespace nfn {

// A named view of one parameter buffer and its gradient for the current step.
// rows/cols describe the logical grid so optimizer state can be re-laid-out
// when term slots grow (cols is the growable dimension).
struct ParamBinding {
  std::string name;
  double* value = nullptr;
  const double* grad = nullptr;
  int rows = 0;
  int cols = 0;

  size_t size() const { return static_cast<size_t>(rows) * cols; }
};

// Adam with bias correction; first and second moments are keyed by parameter
// name so they survive structural growth via remap().
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(const std::vector<ParamBinding>& params);

  // Re-layout the moment buffers of a grown parameter grid. New columns
  // start with zero moments.
  void remap(const std::string& name, int rows, int old_cols, int new_cols);

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr);
  int64_t step_count() const { return step_; }

  // Serialization access.
  const std::map<std::string, std::vector<double>>& first_moments() const { return m_; }
  const std::map<std::string, std::vector<double>>& second_moments() const { return v_; }
  void restore(int64_t step, std::map<std::string, std::vector<double>> m,
               std::map<std::string, std::vector<double>> v);

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  int64_t step_ = 0;
  std::map<std::string, std::vector<double>> m_;
  std::map<std::string, std::vector<double>> v_;
};

}  // namespace nfn
