#pragma once

// Feed-forward networks whose hidden neurons carry per-type activations:
// builtin functions, trainable scalar sub-networks layered additively on a
// builtin base, or frozen tabulated interpolants.

#include "ldnn/activation_functions.hpp"
#include "ldnn/autodiff.hpp"
#include "ldnn/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace ldnn {

struct SubnetActivation {
  Builtin base = Builtin::Sine;
  int hidden_width = 50;
};

struct TabulatedActivation {
  TabulatedFunction table;
  nlohmann::json provenance = nlohmann::json::object();
};

using ActivationSpec = std::variant<Builtin, SubnetActivation, TabulatedActivation>;

std::string describe(const ActivationSpec& spec);

struct LayerSpec {
  int width = 0;
  // Activation-type index per neuron.
  std::vector<int> assignment;
};

// Neuron i gets type i mod n_types.
LayerSpec interleaved_layer(int width, int n_types);

struct NetworkConfig {
  int input_dim = 0;
  std::vector<LayerSpec> hidden;
  int output_dim = 0;
  // Activation types, shared by every layer that references them.
  std::vector<ActivationSpec> activations;

  void validate() const;
  bool has_subnets() const;
};

enum class ParamGroup { Network, Activation };

struct NamedTensor {
  std::string name;
  ParamGroup group = ParamGroup::Network;
  Tensor value;
};

// Trainable tensors partitioned into the network weights (Network) and the
// activation sub-network weights (Activation).
class ParamSet {
 public:
  ParamId add(std::string name, ParamGroup group, Tensor value);

  std::size_t size() const { return tensors_.size(); }
  const NamedTensor& operator[](ParamId id) const { return tensors_.at(id); }
  NamedTensor& operator[](ParamId id) { return tensors_.at(id); }
  std::optional<ParamId> find(const std::string& name) const;
  const Tensor& value(const std::string& name) const;

  // Scalar count, over one group or both.
  Eigen::Index count(std::optional<ParamGroup> group = std::nullopt) const;
  Vector flatten(std::optional<ParamGroup> group = std::nullopt) const;
  void assign_flat(const Vector& flat, std::optional<ParamGroup> group = std::nullopt);
  Vector flatten_gradient(const GradientMap& grads,
                          std::optional<ParamGroup> group = std::nullopt) const;

  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  friend bool operator==(const ParamSet& a, const ParamSet& b);

 private:
  std::vector<NamedTensor> tensors_;
};

bool operator==(const ParamSet& a, const ParamSet& b);

std::string layer_weight_name(std::size_t layer);
std::string layer_bias_name(std::size_t layer);
inline constexpr const char* kOutputWeight = "output.weight";
inline constexpr const char* kOutputBias = "output.bias";
std::string subnet_param_name(std::size_t type, const char* which);

// Weights drawn uniform in +-1/sqrt(fan_in); sub-network output layers start at
// zero so every sub-network activation equals its base at step 0.
ParamSet init_network(const NetworkConfig& config, std::uint64_t seed);

struct SubnetWeights {
  Tensor w1, b1, w2, b2;
};

SubnetWeights subnet_weights(const ParamSet& params, std::size_t type);

// Elementwise evaluation of one activation. Sub-network specs need weights.
Tensor eval_activation(const ActivationSpec& spec, const Tensor& a,
                       const SubnetWeights* weights = nullptr);
double eval_activation(const ActivationSpec& spec, double a,
                       const SubnetWeights* weights = nullptr);

struct ForwardResult {
  Tensor output;
  // Last hidden layer, batch rows x neurons.
  Tensor hidden_preacts;
  Tensor hidden_acts;
};

struct TapeForward {
  Var output;
  std::vector<Var> preacts;
  std::vector<Var> acts;
};

// Records the forward pass on `tape`; parameter leaves use ParamSet indices.
TapeForward forward_on_tape(Tape& tape, const NetworkConfig& config, const ParamSet& params,
                            const Tensor& batch);

ForwardResult forward(const NetworkConfig& config, const ParamSet& params, const Tensor& batch);

// Hidden activities (post-activation) as neurons x inputs, uncentered.
Tensor hidden_activity_matrix(const NetworkConfig& config, const ParamSet& params,
                              const Tensor& inputs, std::optional<std::size_t> layer = std::nullopt);

// Samples an activation type on a uniform grid over [lo, hi].
TabulatedActivation extract_tabulated(const NetworkConfig& config, const ParamSet& params,
                                      std::size_t type, double lo = -6.0, double hi = 6.0,
                                      int n_points = 601);

nlohmann::json tabulated_to_json(const TabulatedActivation& tab);
TabulatedActivation tabulated_from_json(const nlohmann::json& j);
void save_tabulated(const TabulatedActivation& tab, const std::string& path);
TabulatedActivation load_tabulated(const std::string& path);

nlohmann::json activation_to_json(const ActivationSpec& spec);
ActivationSpec activation_from_json(const nlohmann::json& j);
nlohmann::json network_to_json(const NetworkConfig& config);
NetworkConfig network_from_json(const nlohmann::json& j);

// Self-describing snapshot: network description plus named tensors with shapes.
// Doubles round-trip exactly.
nlohmann::json params_to_json(const NetworkConfig& config, const ParamSet& params,
                              const nlohmann::json& provenance = nlohmann::json::object());
std::pair<NetworkConfig, ParamSet> params_from_json(const nlohmann::json& j);

}  // namespace ldnn
