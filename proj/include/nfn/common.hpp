#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace nfn {

// Raised when tensor shapes or index bounds disagree.
struct StructuralError : std::runtime_error {
  explicit StructuralError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when user-supplied data is invalid (non-finite inputs, bad batches).
struct InputError : std::runtime_error {
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when a configuration value is outside its documented domain.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when optimization produces non-finite losses or gradients.
struct TrainingError : std::runtime_error {
  explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when the API is driven out of order (stale tape, missing forward).
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when an environment misbehaves (non-finite observation or reward).
struct EnvError : std::runtime_error {
  explicit EnvError(const std::string& msg) : std::runtime_error(msg) {}
};

using Rng = std::mt19937_64;

// Dense row-major matrix of doubles. Kept deliberately small: the library
// works on flat buffers and explicit index math throughout.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

  double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
  double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
};

// Dense row-major rank-3 tensor, same philosophy as Matrix.
struct Tensor3 {
  int n0 = 0;
  int n1 = 0;
  int n2 = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(int a, int b, int c, double fill = 0.0)
      : n0(a), n1(b), n2(c), data(static_cast<size_t>(a) * b * c, fill) {}

  double& operator()(int i, int j, int k) {
    return data[(static_cast<size_t>(i) * n1 + j) * n2 + k];
  }
  double operator()(int i, int j, int k) const {
    return data[(static_cast<size_t>(i) * n1 + j) * n2 + k];
  }
};

inline void require_finite(const Matrix& m, const char* what) {
  for (double v : m.data) {
    if (!std::isfinite(v)) throw InputError(std::string(what) + " contains a non-finite value");
  }
}

inline void require_shape(const Matrix& m, int rows, int cols, const char* what) {
  if (m.rows != rows || m.cols != cols) {
    throw StructuralError(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                          std::to_string(cols) + ", got " + std::to_string(m.rows) + "x" +
                          std::to_string(m.cols));
  }
}

// Uniform draw clamped away from 0 and 1 so log(log(v)) stays finite.
inline double uniform_open(Rng& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  double v = dist(rng);
  if (v < 1e-16) v = 1e-16;
  if (v > 1.0 - 1e-16) v = 1.0 - 1e-16;
  return v;
}

inline double gumbel_draw(Rng& rng) { return -std::log(-std::log(uniform_open(rng))); }

}  // namespace nfn
