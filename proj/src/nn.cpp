#include "ldnn/nn.hpp"

#include "ldnn/error.hpp"
#include "ldnn/random.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ldnn {

using nlohmann::json;

std::string describe(const ActivationSpec& spec) {
  if (const auto* b = std::get_if<Builtin>(&spec)) return std::string(to_string(*b));
  if (const auto* s = std::get_if<SubnetActivation>(&spec)) {
    return "subnet(" + std::string(to_string(s->base)) + ", " + std::to_string(s->hidden_width) +
           ")";
  }
  const auto& t = std::get<TabulatedActivation>(spec);
  return "tabulated(" + std::to_string(t.table.grid.size()) + " points)";
}

LayerSpec interleaved_layer(int width, int n_types) {
  if (width <= 0) throw ConfigError("layer width must be positive, got " + std::to_string(width));
  if (n_types <= 0) throw ConfigError("layer needs at least one activation type");
  LayerSpec layer;
  layer.width = width;
  layer.assignment.resize(static_cast<std::size_t>(width));
  for (int i = 0; i < width; ++i) layer.assignment[static_cast<std::size_t>(i)] = i % n_types;
  return layer;
}

void NetworkConfig::validate() const {
  if (input_dim <= 0) throw ConfigError("input_dim must be positive");
  if (output_dim <= 0) throw ConfigError("output_dim must be positive");
  if (hidden.empty()) throw ConfigError("network needs at least one hidden layer");
  if (activations.empty()) throw ConfigError("activation roster is empty");
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    const LayerSpec& layer = hidden[l];
    if (layer.width <= 0) {
      throw ConfigError("hidden layer " + std::to_string(l) + " has width " +
                        std::to_string(layer.width));
    }
    if (static_cast<int>(layer.assignment.size()) != layer.width) {
      throw ConfigError("hidden layer " + std::to_string(l) + " assignment length " +
                        std::to_string(layer.assignment.size()) + " != width " +
                        std::to_string(layer.width));
    }
    for (int t : layer.assignment) {
      if (t < 0 || t >= static_cast<int>(activations.size())) {
        throw ConfigError("hidden layer " + std::to_string(l) + " references activation type " +
                          std::to_string(t) + " but only " + std::to_string(activations.size()) +
                          " are declared");
      }
    }
  }
  for (const auto& spec : activations) {
    if (const auto* s = std::get_if<SubnetActivation>(&spec)) {
      if (s->hidden_width <= 0) throw ConfigError("subnet hidden_width must be positive");
    } else if (const auto* t = std::get_if<TabulatedActivation>(&spec)) {
      t->table.validate();
    }
  }
}

bool NetworkConfig::has_subnets() const {
  for (const auto& spec : activations) {
    if (std::holds_alternative<SubnetActivation>(spec)) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// ParamSet

ParamId ParamSet::add(std::string name, ParamGroup group, Tensor value) {
  if (find(name)) throw ConfigError("duplicate parameter name " + name);
  tensors_.push_back({std::move(name), group, std::move(value)});
  return tensors_.size() - 1;
}

std::optional<ParamId> ParamSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].name == name) return i;
  }
  return std::nullopt;
}

const Tensor& ParamSet::value(const std::string& name) const {
  auto id = find(name);
  if (!id) throw Error("no parameter named " + name);
  return tensors_[*id].value;
}

Eigen::Index ParamSet::count(std::optional<ParamGroup> group) const {
  Eigen::Index n = 0;
  for (const auto& t : tensors_) {
    if (!group || t.group == *group) n += t.value.size();
  }
  return n;
}

Vector ParamSet::flatten(std::optional<ParamGroup> group) const {
  Vector out(count(group));
  Eigen::Index off = 0;
  for (const auto& t : tensors_) {
    if (group && t.group != *group) continue;
    out.segment(off, t.value.size()) = Eigen::Map<const Vector>(t.value.data(), t.value.size());
    off += t.value.size();
  }
  return out;
}

void ParamSet::assign_flat(const Vector& flat, std::optional<ParamGroup> group) {
  if (flat.size() != count(group)) {
    throw ShapeError("assign_flat: vector has " + std::to_string(flat.size()) +
                     " entries, slice has " + std::to_string(count(group)));
  }
  Eigen::Index off = 0;
  for (auto& t : tensors_) {
    if (group && t.group != *group) continue;
    Eigen::Map<Vector>(t.value.data(), t.value.size()) = flat.segment(off, t.value.size());
    off += t.value.size();
  }
}

Vector ParamSet::flatten_gradient(const GradientMap& grads, std::optional<ParamGroup> group) const {
  Vector out(count(group));
  Eigen::Index off = 0;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const auto& t = tensors_[i];
    if (group && t.group != *group) continue;
    if (grads.contains(i)) {
      const Tensor& g = grads.at(i);
      out.segment(off, t.value.size()) = Eigen::Map<const Vector>(g.data(), g.size());
    } else {
      out.segment(off, t.value.size()).setZero();
    }
    off += t.value.size();
  }
  return out;
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  if (a.tensors_.size() != b.tensors_.size()) return false;
  for (std::size_t i = 0; i < a.tensors_.size(); ++i) {
    const auto& x = a.tensors_[i];
    const auto& y = b.tensors_[i];
    if (x.name != y.name || x.group != y.group || x.value.rows() != y.value.rows() ||
        x.value.cols() != y.value.cols()) {
      return false;
    }
    // Bitwise comparison.
    if (std::memcmp(x.value.data(), y.value.data(),
                    sizeof(double) * static_cast<std::size_t>(x.value.size())) != 0) {
      return false;
    }
  }
  return true;
}

std::string layer_weight_name(std::size_t layer) { return "layer" + std::to_string(layer) + ".weight"; }
std::string layer_bias_name(std::size_t layer) { return "layer" + std::to_string(layer) + ".bias"; }
std::string subnet_param_name(std::size_t type, const char* which) {
  return "act" + std::to_string(type) + "." + which;
}

ParamSet init_network(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ParamSet params;
  auto uniform_tensor = [&](Eigen::Index rows, Eigen::Index cols, double bound) {
    Tensor t(rows, cols);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-bound, bound);
    return t;
  };

  int fan_in = config.input_dim;
  for (std::size_t l = 0; l < config.hidden.size(); ++l) {
    const int width = config.hidden[l].width;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    params.add(layer_weight_name(l), ParamGroup::Network, uniform_tensor(fan_in, width, bound));
    params.add(layer_bias_name(l), ParamGroup::Network, uniform_tensor(1, width, bound));
    fan_in = width;
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  params.add(kOutputWeight, ParamGroup::Network, uniform_tensor(fan_in, config.output_dim, bound));
  params.add(kOutputBias, ParamGroup::Network, uniform_tensor(1, config.output_dim, bound));

  for (std::size_t t = 0; t < config.activations.size(); ++t) {
    const auto* s = std::get_if<SubnetActivation>(&config.activations[t]);
    if (!s) continue;
    const int h = s->hidden_width;
    // Scalar input, so fan_in is 1 for the tanh layer.
    params.add(subnet_param_name(t, "w1"), ParamGroup::Activation, uniform_tensor(1, h, 1.0));
    params.add(subnet_param_name(t, "b1"), ParamGroup::Activation, uniform_tensor(1, h, 1.0));
    params.add(subnet_param_name(t, "w2"), ParamGroup::Activation, Tensor::Zero(h, 1));
    params.add(subnet_param_name(t, "b2"), ParamGroup::Activation, Tensor::Zero(1, 1));
  }
  return params;
}

SubnetWeights subnet_weights(const ParamSet& params, std::size_t type) {
  auto get = [&](const char* which) -> const Tensor& {
    auto id = params.find(subnet_param_name(type, which));
    if (!id) throw ConfigError("no subnet at index " + std::to_string(type));
    return params[*id].value;
  };
  return {get("w1"), get("b1"), get("w2"), get("b2")};
}

Tensor eval_activation(const ActivationSpec& spec, const Tensor& a, const SubnetWeights* weights) {
  Tensor out(a.rows(), a.cols());
  if (const auto* b = std::get_if<Builtin>(&spec)) {
    for (Eigen::Index i = 0; i < a.size(); ++i) out.data()[i] = apply_builtin(*b, a.data()[i]);
  } else if (const auto* s = std::get_if<SubnetActivation>(&spec)) {
    if (!weights) throw Error("eval_activation: subnet activation needs its weights");
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      const double x = a.data()[i];
      const Eigen::RowVectorXd hidden = (weights->w1.row(0) * x + weights->b1.row(0)).array().tanh();
      out.data()[i] = apply_builtin(s->base, x) + hidden.dot(weights->w2.col(0)) + weights->b2(0, 0);
    }
  } else {
    const auto& t = std::get<TabulatedActivation>(spec);
    for (Eigen::Index i = 0; i < a.size(); ++i) out.data()[i] = t.table(a.data()[i]);
  }
  return out;
}

double eval_activation(const ActivationSpec& spec, double a, const SubnetWeights* weights) {
  return eval_activation(spec, scalar_tensor(a), weights)(0, 0);
}

namespace {

Var apply_activation_on_tape(Tape& tape, const NetworkConfig& config, std::size_t type, Var z,
                             const std::vector<Var>& leaves, const ParamSet& params) {
  const ActivationSpec& spec = config.activations[type];
  if (const auto* b = std::get_if<Builtin>(&spec)) return apply_builtin(*b, z);
  if (const auto* s = std::get_if<SubnetActivation>(&spec)) {
    auto leaf = [&](const char* which) {
      auto id = params.find(subnet_param_name(type, which));
      if (!id) throw ConfigError("missing sub-network parameters for activation type " +
                                 std::to_string(type));
      return leaves[*id];
    };
    return tape.subnet_activation(z, s->base, leaf("w1"), leaf("b1"), leaf("w2"), leaf("b2"));
  }
  return tape.tabulated(z, std::get<TabulatedActivation>(spec).table);
}

}  // namespace

TapeForward forward_on_tape(Tape& tape, const NetworkConfig& config, const ParamSet& params,
                            const Tensor& batch) {
  if (batch.cols() != config.input_dim) {
    throw ShapeError("forward: batch " + shape_string(batch) + " does not match input_dim " +
                     std::to_string(config.input_dim));
  }
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) leaves.push_back(tape.parameter(params[i].value, i));
  auto leaf = [&](const std::string& name) {
    auto id = params.find(name);
    if (!id) throw ConfigError("missing parameter " + name);
    return leaves[*id];
  };

  TapeForward out;
  Var x = tape.constant(batch);
  for (std::size_t l = 0; l < config.hidden.size(); ++l) {
    const LayerSpec& layer = config.hidden[l];
    Var z = add(matmul(x, leaf(layer_weight_name(l))), leaf(layer_bias_name(l)));
    out.preacts.push_back(z);

    std::vector<std::vector<int>> columns(config.activations.size());
    for (int i = 0; i < layer.width; ++i) {
      columns[static_cast<std::size_t>(layer.assignment[static_cast<std::size_t>(i)])].push_back(i);
    }
    std::vector<std::size_t> used;
    for (std::size_t t = 0; t < columns.size(); ++t) {
      if (!columns[t].empty()) used.push_back(t);
    }
    Var act;
    if (used.size() == 1) {
      act = apply_activation_on_tape(tape, config, used[0], z, leaves, params);
    } else {
      std::vector<Var> parts;
      std::vector<std::vector<int>> part_cols;
      for (std::size_t t : used) {
        Var zt = tape.select_columns(z, columns[t]);
        parts.push_back(apply_activation_on_tape(tape, config, t, zt, leaves, params));
        part_cols.push_back(columns[t]);
      }
      act = tape.assemble_columns(parts, std::move(part_cols), layer.width);
    }
    out.acts.push_back(act);
    x = act;
  }
  out.output = add(matmul(x, leaf(kOutputWeight)), leaf(kOutputBias));
  return out;
}

ForwardResult forward(const NetworkConfig& config, const ParamSet& params, const Tensor& batch) {
  Tape tape;
  TapeForward f = forward_on_tape(tape, config, params, batch);
  return {f.output.value(), f.preacts.back().value(), f.acts.back().value()};
}

Tensor hidden_activity_matrix(const NetworkConfig& config, const ParamSet& params,
                              const Tensor& inputs, std::optional<std::size_t> layer) {
  if (inputs.rows() == 0) throw ShapeError("hidden_activity_matrix: empty dataset");
  Tape tape;
  TapeForward f = forward_on_tape(tape, config, params, inputs);
  const std::size_t l = layer.value_or(f.acts.size() - 1);
  if (l >= f.acts.size()) throw ShapeError("hidden_activity_matrix: no hidden layer " + std::to_string(l));
  return f.acts[l].value().transpose();
}

TabulatedActivation extract_tabulated(const NetworkConfig& config, const ParamSet& params,
                                      std::size_t type, double lo, double hi, int n_points) {
  if (!(lo < hi)) throw ConfigError("extract_tabulated: need lo < hi");
  if (n_points < 2) throw ConfigError("extract_tabulated: need at least 2 points");
  if (type >= config.activations.size() ||
      !std::holds_alternative<SubnetActivation>(config.activations[type])) {
    throw ConfigError("no subnet at index " + std::to_string(type));
  }
  const ActivationSpec& spec = config.activations[type];
  std::optional<SubnetWeights> weights = subnet_weights(params, type);

  TabulatedActivation tab;
  tab.table.grid.resize(static_cast<std::size_t>(n_points));
  for (int i = 0; i < n_points; ++i) {
    tab.table.grid[static_cast<std::size_t>(i)] =
        i == n_points - 1 ? hi : lo + (hi - lo) * static_cast<double>(i) / (n_points - 1);
  }
  Tensor probe(1, n_points);
  for (int i = 0; i < n_points; ++i) probe(0, i) = tab.table.grid[static_cast<std::size_t>(i)];
  const Tensor values = eval_activation(spec, probe, weights ? &*weights : nullptr);
  tab.table.values.assign(values.data(), values.data() + values.size());
  tab.provenance["base"] = std::string(to_string(std::get<SubnetActivation>(spec).base));
  return tab;
}

// ---------------------------------------------------------------------------
// JSON

json tabulated_to_json(const TabulatedActivation& tab) {
  return json{{"kind", "tabulated"},
              {"grid", tab.table.grid},
              {"values", tab.table.values},
              {"extrapolation", "clamp"},
              {"provenance", tab.provenance}};
}

TabulatedActivation tabulated_from_json(const json& j) {
  try {
    if (j.at("kind").get<std::string>() != "tabulated") {
      throw ParseError("tabulated activation: kind must be \"tabulated\"");
    }
    if (j.contains("extrapolation") && j.at("extrapolation").get<std::string>() != "clamp") {
      throw ParseError("tabulated activation: only \"clamp\" extrapolation is supported");
    }
    TabulatedActivation tab;
    tab.table.grid = j.at("grid").get<std::vector<double>>();
    tab.table.values = j.at("values").get<std::vector<double>>();
    if (j.contains("provenance")) tab.provenance = j.at("provenance");
    tab.table.validate();
    return tab;
  } catch (const json::exception& e) {
    throw ParseError(std::string("tabulated activation: ") + e.what());
  }
}

namespace {
json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed for " + path);
}
}  // namespace

void save_tabulated(const TabulatedActivation& tab, const std::string& path) {
  write_text_file(path, tabulated_to_json(tab).dump(1) + "\n");
}

TabulatedActivation load_tabulated(const std::string& path) {
  return tabulated_from_json(read_json_file(path));
}

json activation_to_json(const ActivationSpec& spec) {
  if (const auto* b = std::get_if<Builtin>(&spec)) {
    return json{{"kind", "builtin"}, {"name", std::string(to_string(*b))}};
  }
  if (const auto* s = std::get_if<SubnetActivation>(&spec)) {
    return json{{"kind", "subnet"},
                {"base", std::string(to_string(s->base))},
                {"hidden_width", s->hidden_width}};
  }
  return tabulated_to_json(std::get<TabulatedActivation>(spec));
}

namespace {
Builtin parse_builtin(const std::string& name) {
  auto b = builtin_from_string(name);
  if (!b) throw ConfigError("unknown builtin activation \"" + name + "\"");
  return *b;
}
}  // namespace

ActivationSpec activation_from_json(const json& j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "builtin") return parse_builtin(j.at("name").get<std::string>());
    if (kind == "subnet") {
      SubnetActivation s;
      s.base = parse_builtin(j.value("base", std::string("sine")));
      s.hidden_width = j.value("hidden_width", 50);
      if (s.hidden_width <= 0) throw ConfigError("subnet hidden_width must be positive");
      return s;
    }
    if (kind == "tabulated") {
      if (j.contains("path")) return load_tabulated(j.at("path").get<std::string>());
      return tabulated_from_json(j);
    }
    throw ConfigError("unknown activation kind \"" + kind + "\"");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("activation spec: ") + e.what());
  }
}

json network_to_json(const NetworkConfig& config) {
  json hidden = json::array();
  for (const auto& layer : config.hidden) {
    hidden.push_back({{"width", layer.width}, {"assignment", layer.assignment}});
  }
  json acts = json::array();
  for (const auto& spec : config.activations) acts.push_back(activation_to_json(spec));
  return json{{"input_dim", config.input_dim},
              {"output_dim", config.output_dim},
              {"hidden", hidden},
              {"activations", acts}};
}

NetworkConfig network_from_json(const json& j) {
  try {
    NetworkConfig c;
    c.input_dim = j.at("input_dim").get<int>();
    c.output_dim = j.at("output_dim").get<int>();
    for (const auto& a : j.at("activations")) c.activations.push_back(activation_from_json(a));
    for (const auto& l : j.at("hidden")) {
      LayerSpec layer;
      layer.width = l.at("width").get<int>();
      layer.assignment = l.at("assignment").get<std::vector<int>>();
      c.hidden.push_back(std::move(layer));
    }
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ParseError(std::string("network description: ") + e.what());
  }
}

json params_to_json(const NetworkConfig& config, const ParamSet& params, const json& provenance) {
  json tensors = json::array();
  for (const auto& t : params) {
    tensors.push_back(
        {{"name", t.name},
         {"group", t.group == ParamGroup::Network ? "network" : "activation"},
         {"shape", {t.value.rows(), t.value.cols()}},
         {"data", std::vector<double>(t.value.data(), t.value.data() + t.value.size())}});
  }
  return json{{"format", "ldnn-params/1"},
              {"network", network_to_json(config)},
              {"tensors", tensors},
              {"provenance", provenance}};
}

std::pair<NetworkConfig, ParamSet> params_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "ldnn-params/1") {
      throw ParseError("params snapshot: unsupported format");
    }
    NetworkConfig config = network_from_json(j.at("network"));
    ParamSet params;
    for (const auto& t : j.at("tensors")) {
      const auto shape = t.at("shape").get<std::vector<Eigen::Index>>();
      const auto data = t.at("data").get<std::vector<double>>();
      if (shape.size() != 2 || shape[0] * shape[1] != static_cast<Eigen::Index>(data.size())) {
        throw ParseError("params snapshot: tensor " + t.at("name").get<std::string>() +
                         " shape does not match its data");
      }
      Tensor value = Eigen::Map<const Tensor>(data.data(), shape[0], shape[1]);
      const std::string group = t.at("group").get<std::string>();
      if (group != "network" && group != "activation") {
        throw ParseError("params snapshot: unknown group " + group);
      }
      params.add(t.at("name").get<std::string>(),
                 group == "network" ? ParamGroup::Network : ParamGroup::Activation,
                 std::move(value));
    }
    return {std::move(config), std::move(params)};
  } catch (const json::exception& e) {
    throw ParseError(std::string("params snapshot: ") + e.what());
  }
}

}  // namespace ldnn
