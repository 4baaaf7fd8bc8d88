#include "nfn/adam.hpp"

#include <cmath>

#include "nfn/membership.hpp"

namespace nfn {

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be > 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw ConfigError("Adam betas must lie in [0, 1)");
}

void Adam::set_learning_rate(double lr) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be > 0");
  lr_ = lr;
}

void Adam::step(const std::vector<ParamBinding>& params) {
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (const ParamBinding& p : params) {
    auto& m = m_[p.name];
    auto& v = v_[p.name];
    if (m.empty()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    } else if (m.size() != p.size()) {
      throw UsageError("optimizer state for '" + p.name +
                       "' is out of sync with the parameter; remap after growth");
    }
    for (size_t k = 0; k < p.size(); ++k) {
      const double g = p.grad[k];
      if (!std::isfinite(g))
        throw TrainingError("non-finite gradient in parameter '" + p.name + "' at index " +
                            std::to_string(k));
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g;
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g * g;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p.value[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::remap(const std::string& name, int rows, int old_cols, int new_cols) {
  auto it = m_.find(name);
  if (it == m_.end()) return;  // never stepped; nothing to carry over
  it->second = regrow_columns(it->second, rows, old_cols, new_cols);
  v_[name] = regrow_columns(v_[name], rows, old_cols, new_cols);
}

void Adam::restore(int64_t step, std::map<std::string, std::vector<double>> m,
                   std::map<std::string, std::vector<double>> v) {
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace nfn
