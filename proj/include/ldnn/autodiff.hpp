#pragma once

// Define-by-run reverse-mode differentiation over dense row-major tensors.
//
// A Tape records one node per operation in creation order, so node indices are
// already a topological order and backward() is a single reverse sweep. The
// tape is rebuilt on every forward pass.

#include "ldnn/activation_functions.hpp"
#include "ldnn/tensor.hpp"

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

namespace ldnn {

enum class OpKind {
  Leaf,
  Constant,
  MatMul,
  Add,
  Tanh,
  Sigmoid,
  Relu,
  Sine,
  Identity,
  Zero,
  Square,
  Scale,
  ReduceMean,
  SoftmaxCrossEntropy,
  MeanSquaredError,
  SelectColumns,
  AssembleColumns,
  SubnetActivation,
  Tabulated,
};

std::string_view to_string(OpKind kind);

class Tape;

// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t index = 0;

  const Tensor& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

using ParamId = std::size_t;

// Gradients keyed by parameter identity. Every parameter leaf registered on
// the tape has an entry, zero-filled when the loss does not depend on it.
class GradientMap {
 public:
  bool contains(ParamId id) const { return grads_.count(id) != 0; }
  const Tensor& at(ParamId id) const;
  void set(ParamId id, Tensor g) { grads_[id] = std::move(g); }
  std::size_t size() const { return grads_.size(); }
  auto begin() const { return grads_.begin(); }
  auto end() const { return grads_.end(); }

 private:
  std::map<ParamId, Tensor> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var parameter(Tensor value, ParamId id);
  Var constant(Tensor value);

  // Generic entry point for the structural op kinds:
  //   MatMul(a, b), Add(a, b), Tanh/Sigmoid/Relu/Sine/Identity/Zero/Square(a),
  //   Scale(a) with factor `scalar`, ReduceMean(a), MeanSquaredError(pred, target).
  // Add accepts equal shapes, a 1x1 operand on either side, or a 1xN row bias
  // on the right of an MxN operand.
  Var record(OpKind kind, std::span<const Var> inputs, double scalar = 1.0);

  // Mean over rows of -log softmax(logits)[label].
  Var softmax_cross_entropy(Var logits, std::span<const int> labels);
  Var select_columns(Var x, std::vector<int> columns);
  // Inverse of select_columns over a partition of [0, width).
  Var assemble_columns(std::span<const Var> parts, std::vector<std::vector<int>> columns,
                       Eigen::Index width);
  // Elementwise base(z) + sum_k w2[k] * tanh(w1[k] * z + b1[k]) + b2, with
  // w1, b1: 1xh, w2: hx1, b2: 1x1.
  Var subnet_activation(Var z, Builtin base, Var w1, Var b1, Var w2, Var b2);
  // Elementwise piecewise-linear table lookup. The table must outlive the tape.
  Var tabulated(Var z, const TabulatedFunction& table);

  // Gradient of a 1x1 loss with respect to every parameter leaf. Clears the tape.
  GradientMap backward(Var loss);

  const Tensor& value(Var v) const { return nodes_.at(v.index).value; }
  OpKind kind(Var v) const { return nodes_.at(v.index).kind; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    OpKind kind = OpKind::Constant;
    std::vector<std::size_t> parents;
    Tensor value;
    std::vector<Tensor> saved;
    double scalar = 0.0;
    ParamId param = 0;
    Builtin base = Builtin::Identity;
    std::vector<int> labels;
    std::vector<std::vector<int>> columns;
    const TabulatedFunction* table = nullptr;
  };

  Var push(Node node);
  void check_owned(Var v) const;
  void backprop_node(const Node& node, const Tensor& grad, std::vector<Tensor>& grads) const;

  std::vector<Node> nodes_;
};

// Free-function spellings of the recorded ops.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var sine(Var a);
Var identity(Var a);
Var zero(Var a);
Var square(Var a);
Var scale(Var a, double factor);
Var reduce_mean(Var a);
Var mean_squared_error(Var pred, Var target);
Var softmax_cross_entropy(Var logits, std::span<const int> labels);
Var apply_builtin(Builtin b, Var a);

// Gradient of a scalar loss with respect to a flat parameter vector.
using GradientFunction = std::function<Vector(const Vector&)>;

// Hv by central difference of gradients along v / |v|_2 with step
// 1e-4 * (1 + |p|_inf), rescaled by |v|_2.
Vector hessian_vector_product(const GradientFunction& gradient, const Vector& point,
                              const Vector& v);

}  // namespace ldnn
