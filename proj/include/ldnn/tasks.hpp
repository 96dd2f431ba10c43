#pragma once

// Benchmark data: a procedural 1-D digit sequence classification task in the
// style of MNIST-1D, and one-step phase-space forecasting of the van der Pol
// oscillator integrated with classical RK4.

#include "ldnn/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ldnn {

enum class TaskKind { Classification, Regression };
enum class Split { Train, Val, Test };

std::string to_string(TaskKind kind);
std::string to_string(Split split);

struct Dataset {
  TaskKind kind = TaskKind::Classification;
  Split split = Split::Train;
  Tensor inputs;              // M x D
  std::vector<int> labels;    // classification
  Tensor targets;             // regression, M x O
  int num_classes = 0;        // classification

  Eigen::Index size() const { return inputs.rows(); }
  Eigen::Index input_dim() const { return inputs.cols(); }
  // K for classification, O for regression.
  int output_dim() const {
    return kind == TaskKind::Classification ? num_classes : static_cast<int>(targets.cols());
  }

  void validate() const;
  Dataset subset(std::span<const std::size_t> rows) const;
};

// Exact equality, including split tag and element bits.
bool operator==(const Dataset& a, const Dataset& b);

// Container format:
//   #dsv1 task=<classification|regression> D=<int> K|O=<int> M=<int> [split=<val|test>]
// followed by M comma-separated lines, label/target fields last.
std::string format_dataset(const Dataset& d);
Dataset parse_dataset(const std::string& text, const std::string& source = "<memory>");
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

struct Synthetic1dParams {
  int length = 40;              // D
  int template_len = 12;
  int pad_lo = 36;
  int pad_hi = 60;
  double scale_coeff = 0.4;
  int max_translation = 48;
  double corr_noise = 0.25;
  double iid_noise = 0.02;
  double shear = 0.375;          // shear slope drawn uniform in +-shear
  double corr_sigma = 2.0;      // gaussian smoothing width, in samples
};

// Fixed 12-point stroke templates for digits 0-9, normalized.
const std::vector<std::vector<double>>& digit_templates();

Dataset generate_synthetic_1d(std::uint64_t seed, int m, const Synthetic1dParams& params = {});

// Splits a dataset by seeded shuffle; the first part gets `train_fraction`.
std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double train_fraction,
                                          std::uint64_t seed);

template <typename Scalar>
struct OscillatorState {
  Scalar x{};
  Scalar v{};
  Scalar t{};
};

// Right-hand side of x'' - mu (1 - x^2) x' + x = 0 as a first-order system.
template <typename Scalar>
std::pair<Scalar, Scalar> vdp_derivative(const OscillatorState<Scalar>& s, Scalar mu) {
  return {s.v, mu * (Scalar(1) - s.x * s.x) * s.v - s.x};
}

template <typename Scalar>
OscillatorState<Scalar> rk4_step(const OscillatorState<Scalar>& s, Scalar h, Scalar mu) {
  auto at = [&](Scalar dx, Scalar dv) {
    return vdp_derivative(OscillatorState<Scalar>{s.x + dx, s.v + dv, s.t}, mu);
  };
  const auto [k1x, k1v] = vdp_derivative(s, mu);
  const auto [k2x, k2v] = at(h / 2 * k1x, h / 2 * k1v);
  const auto [k3x, k3v] = at(h / 2 * k2x, h / 2 * k2v);
  const auto [k4x, k4v] = at(h * k3x, h * k3v);
  return {s.x + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x),
          s.v + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v), s.t + h};
}

struct VdpForecastParams {
  double x0 = 1.0;
  double v0 = 0.0;
  double mu = 2.7;
  double h = 0.01;
  int n_transient = 5000;
  int n_samples = 4000;
  double train_fraction = 0.8;
};

// Per-column affine map raw -> (raw - mean) / scale, shared by inputs and
// targets so standardized target k still equals standardized input k+1.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  Tensor apply(const Tensor& raw) const;
  Tensor invert(const Tensor& standardized) const;
};

struct VdpForecastData {
  Dataset train;
  Dataset val;
  Standardizer transform;
  VdpForecastParams params;
};

VdpForecastData build_vdp_forecast_dataset(const VdpForecastParams& params, std::uint64_t seed);

}  // namespace ldnn
