#pragma once

// Alternating two-timescale training: a stochastic-gradient inner loop on the
// network weights and a periodic outer loop on the activation sub-network
// weights, both descending the same mini-batch loss.

#include "ldnn/autodiff.hpp"
#include "ldnn/nn.hpp"
#include "ldnn/tasks.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ldnn {

enum class OptimizerKind { Sgd, Momentum, Adam };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& name);

struct TrainSchedule {
  double inner_lr = 1e-2;
  double outer_lr = 1e-3;
  int outer_period = 5;  // inner steps between outer events (E)
  int outer_steps = 1;   // outer steps per event (J)
  int batch_size = 100;
  int epochs = 30;
  OptimizerKind optimizer = OptimizerKind::Adam;
  std::uint64_t seed = 0;
  // Activation snapshots every this many steps (0: only first and last).
  int snapshot_interval = 200;
  double snapshot_lo = -6.0;
  double snapshot_hi = 6.0;
  int snapshot_points = 121;
  // Skip outer steps entirely, keeping activation weights at their initial values.
  bool freeze_activations = false;

  void validate() const;
};

// Per-tensor first-order optimizer state over one parameter group.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, ParamGroup group);

  void step(ParamSet& params, const GradientMap& grads);

  OptimizerKind kind() const { return kind_; }
  double learning_rate() const { return lr_; }

 private:
  OptimizerKind kind_;
  double lr_;
  ParamGroup group_;
  long steps_ = 0;
  std::map<ParamId, Tensor> first_;
  std::map<ParamId, Tensor> second_;
};

double cross_entropy_loss(const Tensor& logits, std::span<const int> labels);
double mse_loss(const Tensor& pred, const Tensor& target);

// Records the task loss for `batch` on the tape and returns it.
Var loss_on_tape(Tape& tape, const NetworkConfig& config, const ParamSet& params,
                 const Dataset& batch);

double batch_loss(const NetworkConfig& config, const ParamSet& params, const Dataset& batch);

// One optimizer update on the Network group; Activation tensors are untouched.
// Returns the pre-update loss. Throws NonFiniteError on a non-finite loss.
double inner_step(const NetworkConfig& config, ParamSet& params, const Dataset& batch,
                  Optimizer& optimizer);
// One optimizer update on the Activation group; Network tensors are untouched.
double outer_step(const NetworkConfig& config, ParamSet& params, const Dataset& batch,
                  Optimizer& optimizer);

enum class Phase { Inner, Outer };

struct StepRecord {
  long step = 0;
  int epoch = 0;
  double train_loss = 0.0;
  Phase phase = Phase::Inner;
  std::optional<double> val_metric;  // set on the last step of an epoch
};

struct ActivationSnapshot {
  long step = 0;
  std::size_t type = 0;
  std::vector<double> values;  // on TrainHistory::snapshot_grid
};

// Bitwise comparisons.
bool operator==(const StepRecord& a, const StepRecord& b);
bool operator==(const ActivationSnapshot& a, const ActivationSnapshot& b);

struct TrainHistory {
  std::vector<StepRecord> steps;
  std::vector<double> epoch_val_metric;
  std::vector<double> snapshot_grid;
  std::vector<ActivationSnapshot> snapshots;

  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

struct TrainResult {
  ParamSet params;
  TrainHistory history;
};

// Each epoch shuffles the training set with the schedule's generator and walks
// it in mini-batches. Every `outer_period` inner steps are followed by
// `outer_steps` outer steps on the most recent batch, unless the network has
// no activation weights or they are frozen.
TrainResult train(const NetworkConfig& config, const TrainSchedule& schedule,
                  const Dataset& train_set, const Dataset& val_set,
                  std::optional<ParamSet> initial = std::nullopt);

// Accuracy for classification, mean squared error for regression.
double evaluate(const NetworkConfig& config, const ParamSet& params, const Dataset& dataset);

// Loss gradient over `dataset` as a function of the flattened parameter slice,
// all other parameters held at their values in `params`.
GradientFunction make_gradient_function(const NetworkConfig& config, const ParamSet& params,
                                        const Dataset& dataset,
                                        std::optional<ParamGroup> group = std::nullopt);

void write_history_csv(const TrainHistory& history, std::ostream& out);
// One row per (snapshot step, grid point) for a single activation type.
void write_activation_trace_csv(const TrainHistory& history, std::size_t type, std::ostream& out);

}  // namespace ldnn
