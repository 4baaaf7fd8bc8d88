#include "nfn/rl/mlp.hpp"

#include <cmath>
#include <map>

namespace nfn::rl {

namespace {

constexpr double kSeluLambda = 1.0507009873554805;
constexpr double kSeluAlpha = 1.6732632423543772;
constexpr double kShrink = 0.5;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

const std::map<std::string, Activation>& activation_table() {
  static const std::map<std::string, Activation> table = {
      {"identity", Activation::Identity},
      {"relu", Activation::ReLU},
      {"leaky_relu", Activation::LeakyReLU},
      {"elu", Activation::ELU},
      {"selu", Activation::SELU},
      {"celu", Activation::CELU},
      {"gelu", Activation::GELU},
      {"sigmoid", Activation::Sigmoid},
      {"hard_sigmoid", Activation::HardSigmoid},
      {"log_sigmoid", Activation::LogSigmoid},
      {"tanh", Activation::Tanh},
      {"hard_tanh", Activation::HardTanh},
      {"tanh_shrink", Activation::TanhShrink},
      {"softplus", Activation::Softplus},
      {"softsign", Activation::Softsign},
      {"silu", Activation::SiLU},
      {"hard_swish", Activation::HardSwish},
      {"mish", Activation::Mish},
      {"soft_shrink", Activation::SoftShrink},
      {"hard_shrink", Activation::HardShrink},
  };
  return table;
}

}  // namespace

Activation activation_from_string(const std::string& name) {
  auto it = activation_table().find(name);
  if (it == activation_table().end()) throw ConfigError("unknown activation '" + name + "'");
  return it->second;
}

std::string to_string(Activation a) {
  for (const auto& [name, val] : activation_table()) {
    if (val == a) return name;
  }
  throw ConfigError("unnamed activation");
}

const std::vector<std::string>& activation_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, val] : activation_table()) out.push_back(name);
    return out;
  }();
  return names;
}

double activate(Activation a, double x) {
  switch (a) {
    case Activation::Identity: return x;
    case Activation::ReLU: return x > 0.0 ? x : 0.0;
    case Activation::LeakyReLU: return x > 0.0 ? x : 0.01 * x;
    case Activation::ELU: return x > 0.0 ? x : std::expm1(x);
    case Activation::SELU:
      return kSeluLambda * (x > 0.0 ? x : kSeluAlpha * std::expm1(x));
    case Activation::CELU: return x > 0.0 ? x : std::expm1(x);
    case Activation::GELU: return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
    case Activation::Sigmoid: return sigmoid(x);
    case Activation::HardSigmoid:
      return x <= -3.0 ? 0.0 : (x >= 3.0 ? 1.0 : x / 6.0 + 0.5);
    case Activation::LogSigmoid: return -softplus(-x);
    case Activation::Tanh: return std::tanh(x);
    case Activation::HardTanh: return x < -1.0 ? -1.0 : (x > 1.0 ? 1.0 : x);
    case Activation::TanhShrink: return x - std::tanh(x);
    case Activation::Softplus: return softplus(x);
    case Activation::Softsign: return x / (1.0 + std::abs(x));
    case Activation::SiLU: return x * sigmoid(x);
    case Activation::HardSwish:
      return x <= -3.0 ? 0.0 : (x >= 3.0 ? x : x * (x + 3.0) / 6.0);
    case Activation::Mish: return x * std::tanh(softplus(x));
    case Activation::SoftShrink:
      return x > kShrink ? x - kShrink : (x < -kShrink ? x + kShrink : 0.0);
    case Activation::HardShrink:
      return x > kShrink || x < -kShrink ? x : 0.0;
  }
  throw ConfigError("unhandled activation");
}

double activate_grad(Activation a, double x) {
  switch (a) {
    case Activation::Identity: return 1.0;
    case Activation::ReLU: return x > 0.0 ? 1.0 : 0.0;
    case Activation::LeakyReLU: return x > 0.0 ? 1.0 : 0.01;
    case Activation::ELU: return x > 0.0 ? 1.0 : std::exp(x);
    case Activation::SELU:
      return kSeluLambda * (x > 0.0 ? 1.0 : kSeluAlpha * std::exp(x));
    case Activation::CELU: return x > 0.0 ? 1.0 : std::exp(x);
    case Activation::GELU: {
      const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::acos(-1.0));
      return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))) + x * phi;
    }
    case Activation::Sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
    case Activation::HardSigmoid: return x > -3.0 && x < 3.0 ? 1.0 / 6.0 : 0.0;
    case Activation::LogSigmoid: return sigmoid(-x);
    case Activation::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::HardTanh: return x > -1.0 && x < 1.0 ? 1.0 : 0.0;
    case Activation::TanhShrink: {
      const double t = std::tanh(x);
      return t * t;
    }
    case Activation::Softplus: return sigmoid(x);
    case Activation::Softsign: {
      const double d = 1.0 + std::abs(x);
      return 1.0 / (d * d);
    }
    case Activation::SiLU: {
      const double s = sigmoid(x);
      return s * (1.0 + x * (1.0 - s));
    }
    case Activation::HardSwish:
      return x <= -3.0 ? 0.0 : (x >= 3.0 ? 1.0 : (2.0 * x + 3.0) / 6.0);
    case Activation::Mish: {
      const double t = std::tanh(softplus(x));
      return t + x * (1.0 - t * t) * sigmoid(x);
    }
    case Activation::SoftShrink: return x > kShrink || x < -kShrink ? 1.0 : 0.0;
    case Activation::HardShrink: return x > kShrink || x < -kShrink ? 1.0 : 0.0;
  }
  throw ConfigError("unhandled activation");
}

Mlp::Mlp(int in_dim, int hidden, int out_dim, Activation activation, Rng& rng)
    : in_(in_dim),
      hidden_(hidden),
      out_(out_dim),
      act_(activation),
      w1_(hidden, in_dim),
      w2_(hidden, hidden),
      w3_(out_dim, hidden),
      b1_(hidden, 0.0),
      b2_(hidden, 0.0),
      b3_(out_dim, 0.0) {
  if (in_dim < 1 || hidden < 1 || out_dim < 1) throw ConfigError("MLP dims must be positive");
  auto glorot = [&rng](Matrix& w, int fan_in, int fan_out) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : w.data) v = dist(rng);
  };
  glorot(w1_, in_dim, hidden);
  glorot(w2_, hidden, hidden);
  glorot(w3_, hidden, out_dim);
}

namespace {

// y = W x + b with W rows = output units.
Matrix affine(const Matrix& X, const Matrix& W, const std::vector<double>& b) {
  Matrix y(X.rows, W.rows);
  for (int r = 0; r < X.rows; ++r) {
    for (int o = 0; o < W.rows; ++o) {
      double acc = b[o];
      for (int k = 0; k < W.cols; ++k) acc += W(o, k) * X(r, k);
      y(r, o) = acc;
    }
  }
  return y;
}

Matrix apply_act(Activation a, const Matrix& z) {
  Matrix h(z.rows, z.cols);
  for (size_t i = 0; i < z.data.size(); ++i) h.data[i] = activate(a, z.data[i]);
  return h;
}

}  // namespace

Matrix Mlp::forward(const Matrix& X) const {
  require_shape(X, X.rows, in_, "mlp input");
  require_finite(X, "mlp input");
  Matrix h1 = apply_act(act_, affine(X, w1_, b1_));
  Matrix h2 = apply_act(act_, affine(h1, w2_, b2_));
  return affine(h2, w3_, b3_);
}

Matrix Mlp::forward_train(const Matrix& X) {
  require_shape(X, X.rows, in_, "mlp input");
  require_finite(X, "mlp input");
  x_ = X;
  z1_ = affine(X, w1_, b1_);
  h1_ = apply_act(act_, z1_);
  z2_ = affine(h1_, w2_, b2_);
  h2_ = apply_act(act_, z2_);
  has_cache_ = true;
  return affine(h2_, w3_, b3_);
}

Matrix Mlp::backward(const Matrix& d_y) {
  if (!has_cache_) throw UsageError("mlp backward without a training forward");
  const int B = x_.rows;
  require_shape(d_y, B, out_, "mlp backward upstream");
  gw1_ = Matrix(hidden_, in_);
  gw2_ = Matrix(hidden_, hidden_);
  gw3_ = Matrix(out_, hidden_);
  gb1_.assign(hidden_, 0.0);
  gb2_.assign(hidden_, 0.0);
  gb3_.assign(out_, 0.0);

  Matrix dh2(B, hidden_);
  for (int b = 0; b < B; ++b) {
    for (int o = 0; o < out_; ++o) {
      const double g = d_y(b, o);
      gb3_[o] += g;
      for (int k = 0; k < hidden_; ++k) {
        gw3_(o, k) += g * h2_(b, k);
        dh2(b, k) += g * w3_(o, k);
      }
    }
  }
  Matrix dz2(B, hidden_);
  for (int b = 0; b < B; ++b)
    for (int k = 0; k < hidden_; ++k) dz2(b, k) = dh2(b, k) * activate_grad(act_, z2_(b, k));

  Matrix dh1(B, hidden_);
  for (int b = 0; b < B; ++b) {
    for (int o = 0; o < hidden_; ++o) {
      const double g = dz2(b, o);
      gb2_[o] += g;
      for (int k = 0; k < hidden_; ++k) {
        gw2_(o, k) += g * h1_(b, k);
        dh1(b, k) += g * w2_(o, k);
      }
    }
  }
  Matrix dz1(B, hidden_);
  for (int b = 0; b < B; ++b)
    for (int k = 0; k < hidden_; ++k) dz1(b, k) = dh1(b, k) * activate_grad(act_, z1_(b, k));

  Matrix dx(B, in_);
  for (int b = 0; b < B; ++b) {
    for (int o = 0; o < hidden_; ++o) {
      const double g = dz1(b, o);
      gb1_[o] += g;
      for (int k = 0; k < in_; ++k) {
        gw1_(o, k) += g * x_(b, k);
        dx(b, k) += g * w1_(o, k);
      }
    }
  }
  return dx;
}

std::vector<ParamBinding> Mlp::bindings(const std::string& prefix) {
  if (gw1_.data.empty()) throw UsageError("mlp bindings before backward");
  return {
      {prefix + "w1", w1_.data.data(), gw1_.data.data(), hidden_, in_},
      {prefix + "b1", b1_.data(), gb1_.data(), 1, hidden_},
      {prefix + "w2", w2_.data.data(), gw2_.data.data(), hidden_, hidden_},
      {prefix + "b2", b2_.data(), gb2_.data(), 1, hidden_},
      {prefix + "w3", w3_.data.data(), gw3_.data.data(), out_, hidden_},
      {prefix + "b3", b3_.data(), gb3_.data(), 1, out_},
  };
}

std::vector<const std::vector<double>*> Mlp::parameters() const {
  return {&w1_.data, &b1_, &w2_.data, &b2_, &w3_.data, &b3_};
}

void Mlp::copy_parameters_from(const Mlp& other) {
  if (in_ != other.in_ || hidden_ != other.hidden_ || out_ != other.out_)
    throw StructuralError("mlp shapes differ; cannot copy parameters");
  w1_ = other.w1_;
  w2_ = other.w2_;
  w3_ = other.w3_;
  b1_ = other.b1_;
  b2_ = other.b2_;
  b3_ = other.b3_;
  act_ = other.act_;
}

}  // namespace nfn::rl
