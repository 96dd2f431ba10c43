#pragma once

// Oracles shared by the unit tests and the acceptance runner.

#include "ldnn/autodiff.hpp"
#include "ldnn/random.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace ldnn::testing {

// Builds a scalar loss from parameter leaves 0..n-1.
using LossBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

inline double loss_value(const LossBuilder& build, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> leaves;
  for (std::size_t i = 0; i < inputs.size(); ++i) leaves.push_back(tape.parameter(inputs[i], i));
  return build(tape, leaves).value()(0, 0);
}

struct GradCheck {
  double rel_error = 0.0;
  double analytic_norm = 0.0;
};

// Tape gradient against central differences with step h, error relative to
// the larger of the two gradient norms (floored at 1e-8).
inline GradCheck gradient_check(const LossBuilder& build, const std::vector<Tensor>& inputs,
                                double h = 1e-5) {
  Tape tape;
  std::vector<Var> leaves;
  for (std::size_t i = 0; i < inputs.size(); ++i) leaves.push_back(tape.parameter(inputs[i], i));
  const GradientMap grads = tape.backward(build(tape, leaves));

  double diff2 = 0.0, an2 = 0.0, fd2 = 0.0;
  std::vector<Tensor> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (Eigen::Index k = 0; k < inputs[i].size(); ++k) {
      const double x = inputs[i].data()[k];
      probe[i].data()[k] = x + h;
      const double up = loss_value(build, probe);
      probe[i].data()[k] = x - h;
      const double down = loss_value(build, probe);
      probe[i].data()[k] = x;
      const double fd = (up - down) / (2 * h);
      const double an = grads.at(i).data()[k];
      diff2 += (an - fd) * (an - fd);
      an2 += an * an;
      fd2 += fd * fd;
    }
  }
  const double denom = std::max({std::sqrt(an2), std::sqrt(fd2), 1e-8});
  return {std::sqrt(diff2) / denom, std::sqrt(an2)};
}

inline Tensor random_tensor(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Tensor t(r, c);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-scale, scale);
  return t;
}

// Entries at least `gap` away from every point in `avoid` (kinks).
inline Tensor random_away_from(Rng& rng, Eigen::Index r, Eigen::Index c, double scale,
                               const std::vector<double>& avoid, double gap) {
  Tensor t(r, c);
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    double v;
    bool ok;
    do {
      v = rng.uniform(-scale, scale);
      ok = true;
      for (double a : avoid) ok = ok && std::abs(v - a) >= gap;
    } while (!ok);
    t.data()[i] = v;
  }
  return t;
}

struct OpCase {
  LossBuilder build;
  std::vector<Tensor> inputs;
};

struct OpFamily {
  std::string name;
  std::function<OpCase(Rng&)> make;
};

// Reduces an op output to a scalar through a fixed random weighting, so the
// check depends only on the op under test plus matmul and reduce_mean.
inline Var weigh(Var out, const Tensor& w) {
  Tape& tape = *out.tape;
  Tensor ones = Tensor::Ones(out.cols(), 1);
  Var weighted = matmul(tape.constant(w.transpose()), out);  // cols x cols
  return reduce_mean(matmul(weighted, tape.constant(ones)));
}

inline std::vector<OpFamily> op_families() {
  std::vector<OpFamily> f;
  auto dims = [](Rng& rng) { return std::pair<Eigen::Index, Eigen::Index>(1 + rng.below(4), 1 + rng.below(4)); };
  auto unary = [&](std::string name, OpKind kind, std::vector<double> kinks = {}) {
    f.push_back({name, [=](Rng& rng) {
                   auto [r, c] = dims(rng);
                   Tensor x = random_away_from(rng, r, c, 2.0, kinks, 1e-3);
                   Tensor w = random_tensor(rng, r, c);
                   return OpCase{[=](Tape& t, const std::vector<Var>& v) {
                                   return weigh(t.record(kind, std::span(&v[0], 1)), w);
                                 },
                                 {x}};
                 }});
  };
  unary("tanh", OpKind::Tanh);
  unary("sigmoid", OpKind::Sigmoid);
  unary("relu", OpKind::Relu, {0.0});
  unary("sine", OpKind::Sine);
  unary("identity", OpKind::Identity);
  unary("zero", OpKind::Zero);
  unary("square", OpKind::Square);

  f.push_back({"scale", [=](Rng& rng) {
                 auto [r, c] = dims(rng);
                 const double s = rng.uniform(-3, 3);
                 Tensor w = random_tensor(rng, r, c);
                 return OpCase{[=](Tape&, const std::vector<Var>& v) { return weigh(scale(v[0], s), w); },
                               {random_tensor(rng, r, c, 2.0)}};
               }});
  f.push_back({"matmul", [=](Rng& rng) {
                 auto [r, k] = dims(rng);
                 const Eigen::Index c = 1 + rng.below(4);
                 Tensor w = random_tensor(rng, r, c);
                 return OpCase{[=](Tape&, const std::vector<Var>& v) { return weigh(matmul(v[0], v[1]), w); },
                               {random_tensor(rng, r, k), random_tensor(rng, k, c)}};
               }});
  f.push_back({"add", [=](Rng& rng) {
                 auto [r, c] = dims(rng);
                 // Equal shapes, row bias, scalar on the right, scalar on the left.
                 const int mode = static_cast<int>(rng.below(4));
                 Tensor a = random_tensor(rng, r, c);
                 Tensor b = mode == 0 ? random_tensor(rng, r, c)
                            : mode == 1 ? random_tensor(rng, 1, c)
                                        : random_tensor(rng, 1, 1);
                 Tensor w = random_tensor(rng, r, c);
                 if (mode == 3) std::swap(a, b);
                 return OpCase{[=](Tape&, const std::vector<Var>& v) { return weigh(add(v[0], v[1]), w); },
                               {a, b}};
               }});
  f.push_back({"reduce_mean", [=](Rng& rng) {
                 auto [r, c] = dims(rng);
                 return OpCase{[](Tape&, const std::vector<Var>& v) { return scale(reduce_mean(v[0]), 3.0); },
                               {random_tensor(rng, r, c)}};
               }});
  f.push_back({"softmax_cross_entropy", [=](Rng& rng) {
                 const Eigen::Index r = 1 + rng.below(5);
                 const Eigen::Index k = 2 + rng.below(5);
                 std::vector<int> labels;
                 for (Eigen::Index i = 0; i < r; ++i) labels.push_back(static_cast<int>(rng.below(k)));
                 return OpCase{[=](Tape&, const std::vector<Var>& v) {
                                 return softmax_cross_entropy(v[0], labels);
                               },
                               {random_tensor(rng, r, k, 3.0)}};
               }});
  f.push_back({"mean_squared_error", [=](Rng& rng) {
                 auto [r, c] = dims(rng);
                 return OpCase{[](Tape&, const std::vector<Var>& v) { return mean_squared_error(v[0], v[1]); },
                               {random_tensor(rng, r, c), random_tensor(rng, r, c)}};
               }});
  f.push_back({"select_columns", [=](Rng& rng) {
                 const Eigen::Index r = 1 + rng.below(4);
                 const Eigen::Index c = 2 + rng.below(4);
                 std::vector<int> cols;
                 for (Eigen::Index j = 0; j < c; ++j) {
                   if (rng.below(2) == 0) cols.push_back(static_cast<int>(j));
                 }
                 if (cols.empty()) cols.push_back(0);
                 Tensor w = random_tensor(rng, r, static_cast<Eigen::Index>(cols.size()));
                 return OpCase{[=](Tape& t, const std::vector<Var>& v) {
                                 return weigh(t.select_columns(v[0], cols), w);
                               },
                               {random_tensor(rng, r, c)}};
               }});
  f.push_back({"assemble_columns", [=](Rng& rng) {
                 const Eigen::Index r = 1 + rng.below(4);
                 const Eigen::Index width = 2 + rng.below(5);
                 std::vector<std::vector<int>> parts(2);
                 for (Eigen::Index j = 0; j < width; ++j) parts[j % 2].push_back(static_cast<int>(j));
                 Tensor w = random_tensor(rng, r, width);
                 return OpCase{[=](Tape& t, const std::vector<Var>& v) {
                                 return weigh(t.assemble_columns(v, parts, width), w);
                               },
                               {random_tensor(rng, r, static_cast<Eigen::Index>(parts[0].size())),
                                random_tensor(rng, r, static_cast<Eigen::Index>(parts[1].size()))}};
               }});
  f.push_back({"subnet_activation", [=](Rng& rng) {
                 auto [r, c] = dims(rng);
                 const Eigen::Index h = 1 + rng.below(6);
                 const Builtin bases[] = {Builtin::Zero, Builtin::Identity, Builtin::Sigmoid,
                                          Builtin::Sine, Builtin::Tanh};
                 const Builtin base = bases[rng.below(5)];
                 Tensor w = random_tensor(rng, r, c);
                 return OpCase{[=](Tape& t, const std::vector<Var>& v) {
                                 return weigh(t.subnet_activation(v[0], base, v[1], v[2], v[3], v[4]), w);
                               },
                               {random_tensor(rng, r, c, 2.0), random_tensor(rng, 1, h),
                                random_tensor(rng, 1, h), random_tensor(rng, h, 1),
                                random_tensor(rng, 1, 1)}};
               }});
  f.push_back({"tabulated", [=](Rng& rng) {
                 auto [r, c] = dims(rng);
                 auto table = std::make_shared<TabulatedFunction>();
                 const int n = 3 + static_cast<int>(rng.below(6));
                 for (int i = 0; i < n; ++i) {
                   table->grid.push_back(-2.0 + 4.0 * i / (n - 1));
                   table->values.push_back(rng.uniform(-1, 1));
                 }
                 // Interior queries away from the knots; outside the grid the slope is zero.
                 Tensor x = random_away_from(rng, r, c, 2.5, table->grid, 1e-3);
                 Tensor w = random_tensor(rng, r, c);
                 return OpCase{[=](Tape& t, const std::vector<Var>& v) {
                                 return weigh(t.tabulated(v[0], *table), w);
                               },
                               {x}};
               }});
  return f;
}

}  // namespace ldnn::testing
