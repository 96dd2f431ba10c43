#include "ldnn/autodiff.hpp"

#include "ldnn/error.hpp"

#include <cmath>
#include <string>

namespace ldnn {

std::string_view to_string(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Constant: return "constant";
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Tanh: return "tanh";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Relu: return "relu";
    case OpKind::Sine: return "sine";
    case OpKind::Identity: return "identity";
    case OpKind::Zero: return "zero";
    case OpKind::Square: return "square";
    case OpKind::Scale: return "scale";
    case OpKind::ReduceMean: return "reduce-mean";
    case OpKind::SoftmaxCrossEntropy: return "softmax-cross-entropy";
    case OpKind::MeanSquaredError: return "mean-squared-error";
    case OpKind::SelectColumns: return "select-columns";
    case OpKind::AssembleColumns: return "assemble-columns";
    case OpKind::SubnetActivation: return "subnet-activation";
    case OpKind::Tabulated: return "tabulated";
  }
  return "?";
}

const Tensor& Var::value() const { return tape->value(*this); }

const Tensor& GradientMap::at(ParamId id) const {
  auto it = grads_.find(id);
  if (it == grads_.end()) throw Error("no gradient recorded for parameter " + std::to_string(id));
  return it->second;
}

namespace {

[[noreturn]] void shape_mismatch(OpKind kind, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(to_string(kind)) + ": incompatible shapes " + shape_string(a) +
                   " and " + shape_string(b));
}

std::optional<Builtin> elementwise_builtin(OpKind kind) {
  switch (kind) {
    case OpKind::Tanh: return Builtin::Tanh;
    case OpKind::Sigmoid: return Builtin::Sigmoid;
    case OpKind::Relu: return Builtin::Relu;
    case OpKind::Sine: return Builtin::Sine;
    case OpKind::Identity: return Builtin::Identity;
    case OpKind::Zero: return Builtin::Zero;
    default: return std::nullopt;
  }
}

Tensor map_builtin(Builtin b, const Tensor& x) {
  switch (b) {
    case Builtin::Zero: return Tensor::Zero(x.rows(), x.cols());
    case Builtin::Identity: return x;
    case Builtin::Sigmoid: return (1.0 + (-x.array()).exp()).inverse().matrix();
    case Builtin::Tanh: return x.array().tanh().matrix();
    case Builtin::Relu: return x.array().max(0.0).matrix();
    case Builtin::Sine: return x.array().sin().matrix();
  }
  return x;
}

Tensor map_builtin_derivative(Builtin b, const Tensor& x) {
  switch (b) {
    case Builtin::Zero: return Tensor::Zero(x.rows(), x.cols());
    case Builtin::Identity: return Tensor::Ones(x.rows(), x.cols());
    case Builtin::Sigmoid: {
      const Eigen::ArrayXXd s = (1.0 + (-x.array()).exp()).inverse();
      return (s * (1.0 - s)).matrix();
    }
    case Builtin::Tanh: {
      const Eigen::ArrayXXd t = x.array().tanh();
      return (1.0 - t.square()).matrix();
    }
    case Builtin::Relu: return (x.array() > 0.0).cast<double>().matrix();
    case Builtin::Sine: return x.array().cos().matrix();
  }
  return x;
}

void accumulate(std::vector<Tensor>& grads, std::size_t index, const Tensor& g) {
  Tensor& slot = grads[index];
  if (slot.size() == 0) {
    slot = g;
  } else {
    slot += g;
  }
}

// Flat column view of a row-major tensor.
Eigen::Map<const Vector> flat(const Tensor& t) { return {t.data(), t.size()}; }

}  // namespace

Var Tape::push(Node node) {
  if (!node.value.allFinite()) {
    throw NonFiniteError(std::string(to_string(node.kind)) + ": non-finite value produced");
  }
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

void Tape::check_owned(Var v) const {
  if (v.tape != this || v.index >= nodes_.size()) {
    throw Error("variable does not belong to this tape");
  }
}

Var Tape::parameter(Tensor value, ParamId id) {
  Node n;
  n.kind = OpKind::Leaf;
  n.value = std::move(value);
  n.param = id;
  return push(std::move(n));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.kind = OpKind::Constant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::record(OpKind kind, std::span<const Var> inputs, double scalar) {
  for (const Var& v : inputs) check_owned(v);
  auto arity = [&](std::size_t n) {
    if (inputs.size() != n) {
      throw Error(std::string(to_string(kind)) + ": expected " + std::to_string(n) +
                  " inputs, got " + std::to_string(inputs.size()));
    }
  };

  Node n;
  n.kind = kind;
  for (const Var& v : inputs) n.parents.push_back(v.index);

  if (auto b = elementwise_builtin(kind)) {
    arity(1);
    n.value = map_builtin(*b, value(inputs[0]));
    return push(std::move(n));
  }

  switch (kind) {
    case OpKind::MatMul: {
      arity(2);
      const Tensor& a = value(inputs[0]);
      const Tensor& b = value(inputs[1]);
      if (a.cols() != b.rows()) shape_mismatch(kind, a, b);
      n.value = a * b;
      break;
    }
    case OpKind::Add: {
      arity(2);
      const Tensor& a = value(inputs[0]);
      const Tensor& b = value(inputs[1]);
      if (a.rows() == b.rows() && a.cols() == b.cols()) {
        n.value = a + b;
      } else if (b.size() == 1) {
        n.value = a.array() + b(0, 0);
      } else if (a.size() == 1) {
        n.value = b.array() + a(0, 0);
      } else if (b.rows() == 1 && b.cols() == a.cols()) {
        n.value = a.rowwise() + b.row(0);
      } else {
        shape_mismatch(kind, a, b);
      }
      break;
    }
    case OpKind::Square:
      arity(1);
      n.value = value(inputs[0]).array().square().matrix();
      break;
    case OpKind::Scale:
      arity(1);
      n.scalar = scalar;
      n.value = scalar * value(inputs[0]);
      break;
    case OpKind::ReduceMean:
      arity(1);
      if (value(inputs[0]).size() == 0) throw ShapeError("reduce-mean: empty input");
      n.value = scalar_tensor(value(inputs[0]).mean());
      break;
    case OpKind::MeanSquaredError: {
      arity(2);
      const Tensor& p = value(inputs[0]);
      const Tensor& t = value(inputs[1]);
      if (p.rows() != t.rows() || p.cols() != t.cols()) shape_mismatch(kind, p, t);
      if (p.size() == 0) throw ShapeError("mean-squared-error: empty input");
      n.value = scalar_tensor((p - t).squaredNorm() / static_cast<double>(p.size()));
      break;
    }
    default:
      throw Error(std::string(to_string(kind)) + ": not recordable through the generic entry point");
  }
  return push(std::move(n));
}

Var Tape::softmax_cross_entropy(Var logits, std::span<const int> labels) {
  check_owned(logits);
  const Tensor& z = value(logits);
  if (static_cast<Eigen::Index>(labels.size()) != z.rows()) {
    throw ShapeError("softmax-cross-entropy: " + std::to_string(labels.size()) +
                     " labels for logits " + shape_string(z));
  }
  if (z.rows() == 0) throw ShapeError("softmax-cross-entropy: empty batch");
  Node n;
  n.kind = OpKind::SoftmaxCrossEntropy;
  n.parents = {logits.index};
  n.labels.assign(labels.begin(), labels.end());

  const Eigen::Index m = z.rows();
  const Eigen::Index k = z.cols();
  Tensor probs(m, k);
  double total = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) {
      throw ShapeError("softmax-cross-entropy: label " + std::to_string(y) + " outside [0, " +
                       std::to_string(k) + ")");
    }
    const double zmax = z.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (z.row(i).array() - zmax).exp().matrix();
    const double sum = e.sum();
    probs.row(i) = e / sum;
    total += std::log(sum) + zmax - z(i, y);
  }
  n.value = scalar_tensor(total / static_cast<double>(m));
  n.saved.push_back(std::move(probs));
  return push(std::move(n));
}

Var Tape::select_columns(Var x, std::vector<int> columns) {
  check_owned(x);
  const Tensor& v = value(x);
  Node n;
  n.kind = OpKind::SelectColumns;
  n.parents = {x.index};
  n.value.resize(v.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j] < 0 || columns[j] >= v.cols()) {
      throw ShapeError("select-columns: column " + std::to_string(columns[j]) + " outside " +
                       shape_string(v));
    }
    n.value.col(static_cast<Eigen::Index>(j)) = v.col(columns[j]);
  }
  n.columns.push_back(std::move(columns));
  return push(std::move(n));
}

Var Tape::assemble_columns(std::span<const Var> parts, std::vector<std::vector<int>> columns,
                           Eigen::Index width) {
  if (parts.size() != columns.size() || parts.empty()) {
    throw ShapeError("assemble-columns: parts and column lists differ in count");
  }
  const Eigen::Index rows = value(parts[0]).rows();
  Node n;
  n.kind = OpKind::AssembleColumns;
  n.value = Tensor::Zero(rows, width);
  std::vector<int> seen(static_cast<std::size_t>(width), 0);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    check_owned(parts[p]);
    const Tensor& v = value(parts[p]);
    if (v.rows() != rows || v.cols() != static_cast<Eigen::Index>(columns[p].size())) {
      throw ShapeError("assemble-columns: part " + std::to_string(p) + " has shape " +
                       shape_string(v));
    }
    for (std::size_t j = 0; j < columns[p].size(); ++j) {
      const int c = columns[p][j];
      if (c < 0 || c >= width) throw ShapeError("assemble-columns: column out of range");
      ++seen[static_cast<std::size_t>(c)];
      n.value.col(c) = v.col(static_cast<Eigen::Index>(j));
    }
    n.parents.push_back(parts[p].index);
  }
  for (int s : seen) {
    if (s != 1) throw ShapeError("assemble-columns: columns do not partition the output");
  }
  n.columns = std::move(columns);
  return push(std::move(n));
}

Var Tape::subnet_activation(Var z, Builtin base, Var w1, Var b1, Var w2, Var b2) {
  for (Var v : {z, w1, b1, w2, b2}) check_owned(v);
  const Tensor& zv = value(z);
  const Tensor& w1v = value(w1);
  const Tensor& b1v = value(b1);
  const Tensor& w2v = value(w2);
  const Tensor& b2v = value(b2);
  const Eigen::Index h = w1v.cols();
  if (w1v.rows() != 1 || b1v.rows() != 1 || b1v.cols() != h || w2v.rows() != h ||
      w2v.cols() != 1 || b2v.size() != 1) {
    throw ShapeError("subnet-activation: inconsistent sub-network shapes w1" + shape_string(w1v) +
                     " b1" + shape_string(b1v) + " w2" + shape_string(w2v) + " b2" +
                     shape_string(b2v));
  }
  Node n;
  n.kind = OpKind::SubnetActivation;
  n.base = base;
  n.parents = {z.index, w1.index, b1.index, w2.index, b2.index};

  const auto zf = flat(zv);
  Tensor hidden = ((zf * w1v.row(0)).rowwise() + b1v.row(0)).array().tanh().matrix();
  const Vector residual = hidden * w2v.col(0);
  const Tensor basev = map_builtin(base, zv);
  n.value.resize(zv.rows(), zv.cols());
  Eigen::Map<Vector>(n.value.data(), n.value.size()) =
      flat(basev) + residual + Vector::Constant(residual.size(), b2v(0, 0));
  n.saved.push_back(std::move(hidden));
  return push(std::move(n));
}

Var Tape::tabulated(Var z, const TabulatedFunction& table) {
  check_owned(z);
  const Tensor& zv = value(z);
  Node n;
  n.kind = OpKind::Tabulated;
  n.parents = {z.index};
  n.table = &table;
  n.value.resize(zv.rows(), zv.cols());
  for (Eigen::Index i = 0; i < zv.size(); ++i) n.value.data()[i] = table(zv.data()[i]);
  return push(std::move(n));
}

void Tape::backprop_node(const Node& node, const Tensor& g, std::vector<Tensor>& grads) const {
  const auto& p = node.parents;
  auto parent_value = [&](std::size_t i) -> const Tensor& { return nodes_[p[i]].value; };

  if (auto b = elementwise_builtin(node.kind)) {
    if (*b == Builtin::Zero) return;
    if (*b == Builtin::Identity) {
      accumulate(grads, p[0], g);
      return;
    }
    accumulate(grads, p[0], g.cwiseProduct(map_builtin_derivative(*b, parent_value(0))));
    return;
  }

  switch (node.kind) {
    case OpKind::Leaf:
    case OpKind::Constant:
      return;
    case OpKind::MatMul:
      accumulate(grads, p[0], g * parent_value(1).transpose());
      accumulate(grads, p[1], parent_value(0).transpose() * g);
      return;
    case OpKind::Add: {
      const Tensor& a = parent_value(0);
      const Tensor& b = parent_value(1);
      auto reduce_to = [&](const Tensor& target) -> Tensor {
        if (target.rows() == g.rows() && target.cols() == g.cols()) return g;
        if (target.size() == 1) return scalar_tensor(g.sum());
        return g.colwise().sum();
      };
      accumulate(grads, p[0], reduce_to(a));
      accumulate(grads, p[1], reduce_to(b));
      return;
    }
    case OpKind::Square:
      accumulate(grads, p[0], 2.0 * g.cwiseProduct(parent_value(0)));
      return;
    case OpKind::Scale:
      accumulate(grads, p[0], node.scalar * g);
      return;
    case OpKind::ReduceMean: {
      const Tensor& a = parent_value(0);
      accumulate(grads, p[0],
                 Tensor::Constant(a.rows(), a.cols(), g(0, 0) / static_cast<double>(a.size())));
      return;
    }
    case OpKind::MeanSquaredError: {
      const Tensor& pr = parent_value(0);
      const Tensor& t = parent_value(1);
      const Tensor d = (2.0 * g(0, 0) / static_cast<double>(pr.size())) * (pr - t);
      accumulate(grads, p[0], d);
      accumulate(grads, p[1], -d);
      return;
    }
    case OpKind::SoftmaxCrossEntropy: {
      Tensor d = node.saved[0];
      for (std::size_t i = 0; i < node.labels.size(); ++i) {
        d(static_cast<Eigen::Index>(i), node.labels[i]) -= 1.0;
      }
      d *= g(0, 0) / static_cast<double>(d.rows());
      accumulate(grads, p[0], d);
      return;
    }
    case OpKind::SelectColumns: {
      const Tensor& x = parent_value(0);
      Tensor d = Tensor::Zero(x.rows(), x.cols());
      const auto& cols = node.columns[0];
      for (std::size_t j = 0; j < cols.size(); ++j) {
        d.col(cols[j]) += g.col(static_cast<Eigen::Index>(j));
      }
      accumulate(grads, p[0], d);
      return;
    }
    case OpKind::AssembleColumns: {
      for (std::size_t part = 0; part < p.size(); ++part) {
        const auto& cols = node.columns[part];
        Tensor d(g.rows(), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t j = 0; j < cols.size(); ++j) {
          d.col(static_cast<Eigen::Index>(j)) = g.col(cols[j]);
        }
        accumulate(grads, p[part], d);
      }
      return;
    }
    case OpKind::SubnetActivation: {
      const Tensor& z = parent_value(0);
      const Tensor& w1 = parent_value(1);
      const Tensor& w2 = parent_value(3);
      const Tensor& hidden = node.saved[0];
      const auto gf = flat(g);
      const auto zf = flat(z);
      // dL/d(hidden preactivation), n x h
      const Tensor gh =
          ((gf * w2.col(0).transpose()).array() * (1.0 - hidden.array().square())).matrix();
      Tensor dz(z.rows(), z.cols());
      Eigen::Map<Vector>(dz.data(), dz.size()) =
          flat(map_builtin_derivative(node.base, z)).cwiseProduct(gf) + gh * w1.row(0).transpose();
      accumulate(grads, p[0], dz);
      accumulate(grads, p[1], zf.transpose() * gh);
      accumulate(grads, p[2], gh.colwise().sum());
      accumulate(grads, p[3], hidden.transpose() * gf);
      accumulate(grads, p[4], scalar_tensor(gf.sum()));
      return;
    }
    case OpKind::Tabulated: {
      const Tensor& z = parent_value(0);
      Tensor d(z.rows(), z.cols());
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        d.data()[i] = g.data()[i] * node.table->slope(z.data()[i]);
      }
      accumulate(grads, p[0], d);
      return;
    }
    default:
      throw Error(std::string(to_string(node.kind)) + ": no backward rule");
  }
}

GradientMap Tape::backward(Var loss) {
  check_owned(loss);
  if (value(loss).size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " + shape_string(value(loss)));
  }
  std::vector<Tensor> grads(nodes_.size());
  grads[loss.index] = scalar_tensor(1.0);
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    if (grads[i].size() == 0) continue;
    backprop_node(nodes_[i], grads[i], grads);
  }
  GradientMap out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.kind != OpKind::Leaf) continue;
    Tensor g = grads[i].size() == 0 ? Tensor::Zero(n.value.rows(), n.value.cols()) : grads[i];
    if (out.contains(n.param)) {
      Tensor sum = out.at(n.param) + g;
      out.set(n.param, std::move(sum));
    } else {
      out.set(n.param, std::move(g));
    }
  }
  nodes_.clear();
  return out;
}

namespace {
Var record1(OpKind kind, Var a, double scalar = 1.0) {
  const Var in[] = {a};
  return a.tape->record(kind, in, scalar);
}
Var record2(OpKind kind, Var a, Var b) {
  const Var in[] = {a, b};
  return a.tape->record(kind, in);
}
}  // namespace

Var matmul(Var a, Var b) { return record2(OpKind::MatMul, a, b); }
Var add(Var a, Var b) { return record2(OpKind::Add, a, b); }
Var tanh(Var a) { return record1(OpKind::Tanh, a); }
Var sigmoid(Var a) { return record1(OpKind::Sigmoid, a); }
Var relu(Var a) { return record1(OpKind::Relu, a); }
Var sine(Var a) { return record1(OpKind::Sine, a); }
Var identity(Var a) { return record1(OpKind::Identity, a); }
Var zero(Var a) { return record1(OpKind::Zero, a); }
Var square(Var a) { return record1(OpKind::Square, a); }
Var scale(Var a, double factor) { return record1(OpKind::Scale, a, factor); }
Var reduce_mean(Var a) { return record1(OpKind::ReduceMean, a); }
Var mean_squared_error(Var pred, Var target) {
  return record2(OpKind::MeanSquaredError, pred, target);
}
Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  return logits.tape->softmax_cross_entropy(logits, labels);
}

Var apply_builtin(Builtin b, Var a) {
  switch (b) {
    case Builtin::Zero: return zero(a);
    case Builtin::Identity: return identity(a);
    case Builtin::Sigmoid: return sigmoid(a);
    case Builtin::Tanh: return tanh(a);
    case Builtin::Relu: return relu(a);
    case Builtin::Sine: return sine(a);
  }
  return a;
}

Vector hessian_vector_product(const GradientFunction& gradient, const Vector& point,
                              const Vector& v) {
  if (v.size() != point.size()) {
    throw ShapeError("hessian_vector_product: direction has " + std::to_string(v.size()) +
                     " entries, parameter slice has " + std::to_string(point.size()));
  }
  const double norm = v.norm();
  if (norm == 0.0) return Vector::Zero(v.size());
  const Vector dir = v / norm;
  const double eps = 1e-4 * (1.0 + point.lpNorm<Eigen::Infinity>());
  const Vector plus = gradient(point + eps * dir);
  const Vector minus = gradient(point - eps * dir);
  return (plus - minus) * (norm / (2.0 * eps));
}

}  // namespace ldnn
