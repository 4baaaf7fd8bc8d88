#pragma once

#include <string>
#include <vector>

#include "nfn/adam.hpp"
#include "nfn/common.hpp"

namespace nfn::rl {

// Stateless elementwise activations selectable by name.
enum class Activation {
  Identity,
  ReLU,
  LeakyReLU,
  ELU,
  SELU,
  CELU,
  GELU,
  Sigmoid,
  HardSigmoid,
  LogSigmoid,
  Tanh,
  HardTanh,
  TanhShrink,
  Softplus,
  Softsign,
  SiLU,
  HardSwish,
  Mish,
  SoftShrink,
  HardShrink,
};

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);
const std::vector<std::string>& activation_names();

double activate(Activation a, double x);
double activate_grad(Activation a, double x);

// Two hidden layers of equal width, manual backward pass.
class Mlp {
 public:
  Mlp(int in_dim, int hidden, int out_dim, Activation activation, Rng& rng);

  int in_dim() const { return in_; }
  int out_dim() const { return out_; }

  Matrix forward(const Matrix& X) const;

  // Training forward: caches pre-activations for backward().
  Matrix forward_train(const Matrix& X);
  // Returns d_input and fills the gradient buffers read by bindings().
  Matrix backward(const Matrix& d_y);
  // Bindings into the cached gradients; valid after backward().
  std::vector<ParamBinding> bindings(const std::string& prefix);

  // Parameter buffers, in binding order (W1, b1, W2, b2, W3, b3).
  std::vector<const std::vector<double>*> parameters() const;
  void copy_parameters_from(const Mlp& other);

 private:
  int in_, hidden_, out_;
  Activation act_;
  Matrix w1_, w2_, w3_;  // row = output unit
  std::vector<double> b1_, b2_, b3_;

  // forward cache
  Matrix x_, z1_, h1_, z2_, h2_;
  bool has_cache_ = false;

  // gradient buffers
  Matrix gw1_, gw2_, gw3_;
  std::vector<double> gb1_, gb2_, gb3_;
};

}  // namespace nfn::rl
