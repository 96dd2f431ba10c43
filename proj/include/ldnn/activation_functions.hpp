#pragma once

#include "ldnn/error.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ldnn {

enum class Builtin { Zero, Identity, Sigmoid, Tanh, Relu, Sine };

inline std::string_view to_string(Builtin b) {
  switch (b) {
    case Builtin::Zero: return "zero";
    case Builtin::Identity: return "identity";
    case Builtin::Sigmoid: return "sigmoid";
    case Builtin::Tanh: return "tanh";
    case Builtin::Relu: return "relu";
    case Builtin::Sine: return "sine";
  }
  return "?";
}

inline std::optional<Builtin> builtin_from_string(std::string_view name) {
  for (Builtin b : {Builtin::Zero, Builtin::Identity, Builtin::Sigmoid, Builtin::Tanh,
                    Builtin::Relu, Builtin::Sine}) {
    if (to_string(b) == name) return b;
  }
  return std::nullopt;
}

template <typename Scalar>
Scalar apply_builtin(Builtin b, Scalar x) {
  using std::exp;
  using std::sin;
  using std::tanh;
  switch (b) {
    case Builtin::Zero: return Scalar(0);
    case Builtin::Identity: return x;
    case Builtin::Sigmoid: return Scalar(1) / (Scalar(1) + exp(-x));
    case Builtin::Tanh: return tanh(x);
    case Builtin::Relu: return x > Scalar(0) ? x : Scalar(0);
    case Builtin::Sine: return sin(x);
  }
  return Scalar(0);
}

// Derivative, with relu'(0) taken as 0.
template <typename Scalar>
Scalar builtin_derivative(Builtin b, Scalar x) {
  using std::cos;
  using std::exp;
  using std::tanh;
  switch (b) {
    case Builtin::Zero: return Scalar(0);
    case Builtin::Identity: return Scalar(1);
    case Builtin::Sigmoid: {
      const Scalar s = Scalar(1) / (Scalar(1) + exp(-x));
      return s * (Scalar(1) - s);
    }
    case Builtin::Tanh: {
      const Scalar t = tanh(x);
      return Scalar(1) - t * t;
    }
    case Builtin::Relu: return x > Scalar(0) ? Scalar(1) : Scalar(0);
    case Builtin::Sine: return cos(x);
  }
  return Scalar(0);
}

// Piecewise-linear interpolant on an ascending grid, constant beyond the ends.
struct TabulatedFunction {
  std::vector<double> grid;
  std::vector<double> values;

  void validate() const {
    if (grid.size() < 2) throw ConfigError("tabulated activation needs at least 2 grid points");
    if (grid.size() != values.size())
      throw ConfigError("tabulated activation grid/values length mismatch");
    for (std::size_t i = 1; i < grid.size(); ++i) {
      if (!(grid[i] > grid[i - 1]))
        throw ConfigError("tabulated activation grid must be strictly ascending");
    }
  }

  // Index of the segment [grid[k], grid[k+1]] containing x (x inside range).
  std::size_t segment(double x) const {
    auto it = std::upper_bound(grid.begin(), grid.end(), x);
    std::size_t k = static_cast<std::size_t>(it - grid.begin());
    k = k == 0 ? 0 : k - 1;
    return std::min(k, grid.size() - 2);
  }

  double operator()(double x) const {
    if (x <= grid.front()) return values.front();
    if (x >= grid.back()) return values.back();
    const std::size_t k = segment(x);
    const double t = (x - grid[k]) / (grid[k + 1] - grid[k]);
    return values[k] + t * (values[k + 1] - values[k]);
  }

  double slope(double x) const {
    if (x <= grid.front() || x >= grid.back()) return 0.0;
    const std::size_t k = segment(x);
    return (values[k + 1] - values[k]) / (grid[k + 1] - grid[k]);
  }
};

}  // namespace ldnn
