#include "ldnn/metalearn.hpp"

#include "ldnn/error.hpp"
#include "ldnn/format.hpp"
#include "ldnn/random.hpp"

#include <cmath>
#include <cstring>
#include <ostream>

namespace ldnn {

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::Sgd: return "sgd";
    case OptimizerKind::Momentum: return "momentum";
    case OptimizerKind::Adam: return "adam";
  }
  return "?";
}

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "momentum") return OptimizerKind::Momentum;
  if (name == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer \"" + name + "\" (expected sgd, momentum or adam)");
}

void TrainSchedule::validate() const {
  if (!(inner_lr > 0.0) || !(outer_lr > 0.0)) throw ConfigError("learning rates must be positive");
  if (outer_period < 1) throw ConfigError("outer_period must be >= 1");
  if (outer_steps < 1) throw ConfigError("outer_steps must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (snapshot_interval < 0) throw ConfigError("snapshot_interval must be >= 0");
  if (!(snapshot_lo < snapshot_hi) || snapshot_points < 2) {
    throw ConfigError("snapshot grid needs lo < hi and at least 2 points");
  }
}

// ---------------------------------------------------------------------------

Optimizer::Optimizer(OptimizerKind kind, double lr, ParamGroup group)
    : kind_(kind), lr_(lr), group_(group) {}

void Optimizer::step(ParamSet& params, const GradientMap& grads) {
  constexpr double kMomentum = 0.9;
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  ++steps_;
  for (ParamId id = 0; id < params.size(); ++id) {
    NamedTensor& p = params[id];
    if (p.group != group_ || !grads.contains(id)) continue;
    const Tensor& g = grads.at(id);
    switch (kind_) {
      case OptimizerKind::Sgd:
        p.value -= lr_ * g;
        break;
      case OptimizerKind::Momentum: {
        auto [it, fresh] = first_.try_emplace(id, Tensor::Zero(g.rows(), g.cols()));
        it->second = kMomentum * it->second + g;
        p.value -= lr_ * it->second;
        break;
      }
      case OptimizerKind::Adam: {
        auto [m, fm] = first_.try_emplace(id, Tensor::Zero(g.rows(), g.cols()));
        auto [v, fv] = second_.try_emplace(id, Tensor::Zero(g.rows(), g.cols()));
        m->second = kBeta1 * m->second + (1.0 - kBeta1) * g;
        v->second = kBeta2 * v->second + (1.0 - kBeta2) * g.cwiseProduct(g);
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(steps_));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(steps_));
        p.value.array() -=
            lr_ * (m->second.array() / c1) / ((v->second.array() / c2).sqrt() + kEps);
        break;
      }
    }
  }
}

// ---------------------------------------------------------------------------

double cross_entropy_loss(const Tensor& logits, std::span<const int> labels) {
  Tape tape;
  return softmax_cross_entropy(tape.constant(logits), labels).value()(0, 0);
}

double mse_loss(const Tensor& pred, const Tensor& target) {
  Tape tape;
  return mean_squared_error(tape.constant(pred), tape.constant(target)).value()(0, 0);
}

Var loss_on_tape(Tape& tape, const NetworkConfig& config, const ParamSet& params,
                 const Dataset& batch) {
  TapeForward f = forward_on_tape(tape, config, params, batch.inputs);
  if (batch.kind == TaskKind::Classification) return softmax_cross_entropy(f.output, batch.labels);
  return mean_squared_error(f.output, tape.constant(batch.targets));
}

double batch_loss(const NetworkConfig& config, const ParamSet& params, const Dataset& batch) {
  Tape tape;
  return loss_on_tape(tape, config, params, batch).value()(0, 0);
}

namespace {

double descend(const NetworkConfig& config, ParamSet& params, const Dataset& batch,
               Optimizer& optimizer, const char* phase) {
  Tape tape;
  double loss = 0.0;
  GradientMap grads;
  try {
    Var l = loss_on_tape(tape, config, params, batch);
    loss = l.value()(0, 0);
    grads = tape.backward(l);
  } catch (const NonFiniteError& e) {
    throw NonFiniteError(std::string(phase) + " step: " + e.what());
  }
  if (!std::isfinite(loss)) throw NonFiniteError(std::string(phase) + " step: non-finite loss");
  optimizer.step(params, grads);
  return loss;
}

}  // namespace

double inner_step(const NetworkConfig& config, ParamSet& params, const Dataset& batch,
                  Optimizer& optimizer) {
  return descend(config, params, batch, optimizer, "inner");
}

double outer_step(const NetworkConfig& config, ParamSet& params, const Dataset& batch,
                  Optimizer& optimizer) {
  return descend(config, params, batch, optimizer, "outer");
}

bool operator==(const StepRecord& a, const StepRecord& b) {
  auto same = [](double x, double y) { return std::memcmp(&x, &y, sizeof(double)) == 0; };
  return a.step == b.step && a.epoch == b.epoch && a.phase == b.phase &&
         same(a.train_loss, b.train_loss) && a.val_metric.has_value() == b.val_metric.has_value() &&
         (!a.val_metric || same(*a.val_metric, *b.val_metric));
}

bool operator==(const ActivationSnapshot& a, const ActivationSnapshot& b) {
  return a.step == b.step && a.type == b.type && a.values.size() == b.values.size() &&
         std::memcmp(a.values.data(), b.values.data(), sizeof(double) * a.values.size()) == 0;
}

TrainResult train(const NetworkConfig& config, const TrainSchedule& schedule,
                  const Dataset& train_set, const Dataset& val_set, std::optional<ParamSet> initial) {
  config.validate();
  schedule.validate();
  train_set.validate();
  val_set.validate();
  if (train_set.input_dim() != config.input_dim || val_set.input_dim() != config.input_dim) {
    throw ConfigError("dataset input dimension does not match the network");
  }
  if (train_set.output_dim() != config.output_dim || val_set.output_dim() != config.output_dim) {
    throw ConfigError("dataset output dimension does not match the network");
  }

  TrainResult result{initial ? std::move(*initial) : init_network(config, schedule.seed), {}};
  ParamSet& params = result.params;
  TrainHistory& history = result.history;

  Rng rng(splitmix64(schedule.seed ^ 0x5eed5eed5eedULL));
  Optimizer inner(schedule.optimizer, schedule.inner_lr, ParamGroup::Network);
  Optimizer outer(schedule.optimizer, schedule.outer_lr, ParamGroup::Activation);
  const bool outer_active =
      !schedule.freeze_activations && params.count(ParamGroup::Activation) > 0;

  history.snapshot_grid.resize(static_cast<std::size_t>(schedule.snapshot_points));
  for (int i = 0; i < schedule.snapshot_points; ++i) {
    history.snapshot_grid[static_cast<std::size_t>(i)] =
        i == schedule.snapshot_points - 1
            ? schedule.snapshot_hi
            : schedule.snapshot_lo + (schedule.snapshot_hi - schedule.snapshot_lo) *
                                         static_cast<double>(i) / (schedule.snapshot_points - 1);
  }
  Tensor grid_tensor(1, schedule.snapshot_points);
  for (int i = 0; i < schedule.snapshot_points; ++i) {
    grid_tensor(0, i) = history.snapshot_grid[static_cast<std::size_t>(i)];
  }
  long step = 0;
  long last_snapshot = -1;
  auto snapshot = [&] {
    if (last_snapshot == step) return;
    last_snapshot = step;
    for (std::size_t t = 0; t < config.activations.size(); ++t) {
      const ActivationSpec& spec = config.activations[t];
      std::optional<SubnetWeights> w;
      if (std::holds_alternative<SubnetActivation>(spec)) w = subnet_weights(params, t);
      const Tensor v = eval_activation(spec, grid_tensor, w ? &*w : nullptr);
      history.snapshots.push_back({step, t, std::vector<double>(v.data(), v.data() + v.size())});
    }
  };
  snapshot();

  const auto n = static_cast<std::size_t>(train_set.size());
  const auto bs = static_cast<std::size_t>(schedule.batch_size);
  long inner_count = 0;
  long next_snapshot = schedule.snapshot_interval;
  for (int epoch = 1; epoch <= schedule.epochs; ++epoch) {
    const auto perm = rng.permutation(n);
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t len = std::min(bs, n - start);
      const Dataset batch = train_set.subset(std::span(perm).subspan(start, len));
      const double loss = inner_step(config, params, batch, inner);
      history.steps.push_back({++step, epoch, loss, Phase::Inner, std::nullopt});
      ++inner_count;
      if (outer_active && inner_count % schedule.outer_period == 0) {
        for (int j = 0; j < schedule.outer_steps; ++j) {
          const double outer_loss = outer_step(config, params, batch, outer);
          history.steps.push_back({++step, epoch, outer_loss, Phase::Outer, std::nullopt});
        }
      }
      if (schedule.snapshot_interval > 0 && step >= next_snapshot) {
        snapshot();
        next_snapshot = (step / schedule.snapshot_interval + 1) * schedule.snapshot_interval;
      }
    }
    const double metric = evaluate(config, params, val_set);
    if (!std::isfinite(metric)) throw NonFiniteError("validation metric is non-finite");
    history.steps.back().val_metric = metric;
    history.epoch_val_metric.push_back(metric);
  }
  snapshot();
  return result;
}

double evaluate(const NetworkConfig& config, const ParamSet& params, const Dataset& dataset) {
  const Tensor out = forward(config, params, dataset.inputs).output;
  if (dataset.kind == TaskKind::Regression) return mse_loss(out, dataset.targets);
  long correct = 0;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    Eigen::Index arg = 0;
    out.row(i).maxCoeff(&arg);
    if (arg == dataset.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(out.rows());
}

GradientFunction make_gradient_function(const NetworkConfig& config, const ParamSet& params,
                                        const Dataset& dataset, std::optional<ParamGroup> group) {
  return [config, params, dataset, group](const Vector& point) {
    ParamSet p = params;
    p.assign_flat(point, group);
    Tape tape;
    Var loss = loss_on_tape(tape, config, p, dataset);
    return p.flatten_gradient(tape.backward(loss), group);
  };
}

void write_history_csv(const TrainHistory& history, std::ostream& out) {
  out << "step,epoch,train_loss,val_metric,phase\n";
  for (const StepRecord& r : history.steps) {
    out << r.step << ',' << r.epoch << ',' << format_double(r.train_loss) << ','
        << (r.val_metric ? format_double(*r.val_metric) : std::string()) << ','
        << (r.phase == Phase::Inner ? "inner" : "outer") << '\n';
  }
}

void write_activation_trace_csv(const TrainHistory& history, std::size_t type, std::ostream& out) {
  out << "step,a,sigma\n";
  for (const ActivationSnapshot& s : history.snapshots) {
    if (s.type != type) continue;
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      out << s.step << ',' << format_double(history.snapshot_grid[i]) << ','
          << format_double(s.values[i]) << '\n';
    }
  }
}

}  // namespace ldnn
