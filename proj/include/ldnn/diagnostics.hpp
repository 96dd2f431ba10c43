#pragma once

// Representation dimensionality (participation ratio of the hidden-activity
// covariance) and loss-landscape flatness (Hessian trace and the fraction of
// near-zero Hessian eigenvalues), plus multi-run distribution tables.

#include "ldnn/autodiff.hpp"
#include "ldnn/error.hpp"
#include "ldnn/tasks.hpp"
#include "ldnn/tensor.hpp"

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ldnn {

struct CovarianceSummary {
  Vector eigenvalues;  // descending
  double trace = 0.0;
  double participation_ratio = 0.0;  // R
  double normalized = 0.0;           // r = R / N
};

// Participation ratio of an N x M activity matrix (neurons x inputs). Rows are
// centered, C = X X^T / M, R = (sum lambda)^2 / sum lambda^2.
template <typename Derived>
CovarianceSummary participation_ratio(const Eigen::MatrixBase<Derived>& activity) {
  using Scalar = typename Derived::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index n = activity.rows();
  const Eigen::Index m = activity.cols();
  if (n < 1 || m < 2) {
    throw ShapeError("participation_ratio: need N >= 1 neurons and M >= 2 inputs, got " +
                     shape_string(activity));
  }
  const Matrix centered = activity.colwise() - activity.rowwise().mean();
  const Matrix cov = centered * centered.transpose() / static_cast<Scalar>(m);

  // Rounding in the row means leaves O(eps * |X|) residue on constant rows.
  const Scalar magnitude = activity.cwiseAbs().maxCoeff();
  const Scalar floor = Scalar(64) * std::numeric_limits<Scalar>::epsilon() * magnitude;
  if (!(cov.trace() > static_cast<Scalar>(n) * floor * floor)) {
    throw DegenerateInputError("participation_ratio: activity has zero covariance");
  }

  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov, Eigen::EigenvaluesOnly);
  CovarianceSummary out;
  out.eigenvalues = solver.eigenvalues().reverse().template cast<double>();
  const double sum = out.eigenvalues.sum();
  const double sum_sq = out.eigenvalues.squaredNorm();
  out.trace = static_cast<double>(cov.trace());
  out.participation_ratio = sum * sum / sum_sq;
  out.normalized = out.participation_ratio / static_cast<double>(n);
  return out;
}

using LinearOperator = std::function<Vector(const Vector&)>;

// |lambda| < rel * max|lambda| counts as near zero.
inline constexpr double kNearZeroRelative = 1e-3;

double near_zero_fraction(const Vector& eigenvalues, double rel = kNearZeroRelative);

struct HessianSummary {
  std::string method;  // "exact" or "estimate"
  double trace = 0.0;
  double trace_stderr = 0.0;
  Vector eigenvalues;  // exact spectrum or Ritz values, ascending
  Vector weights;      // Ritz weights (empty for exact)
  double near_zero_fraction = 0.0;
  double asymmetry = 0.0;  // max |H - H^T| before symmetrization (exact only)
  bool breakdown = false;
  Eigen::Index dimension = 0;
};

// Assembles H column by column from Hessian-vector products, symmetrizes, and
// eigendecomposes. Refuses when the parameter count exceeds `cap`.
HessianSummary hessian_exact(const GradientFunction& gradient, const Vector& point,
                             Eigen::Index cap = 6000, double rel_zero = kNearZeroRelative);

struct TraceEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
  int probes = 0;
};

// Mean of z^T A z over Rademacher probes z.
TraceEstimate trace_hutchinson(const LinearOperator& op, Eigen::Index dim, int n_probes,
                               std::uint64_t seed);
TraceEstimate hessian_trace_hutchinson(const GradientFunction& gradient, const Vector& point,
                                       int n_probes, std::uint64_t seed);

struct LanczosResult {
  Vector ritz_values;   // ascending
  Vector ritz_weights;  // squared first components of the Ritz vectors; sum to 1
  int steps = 0;
  bool breakdown = false;
  double near_zero_fraction = 0.0;
};

// k-step Lanczos with full reorthogonalization from a normalized Rademacher
// start vector. On breakdown returns the values found so far, flagged.
LanczosResult lanczos(const LinearOperator& op, Eigen::Index dim, int k, std::uint64_t seed,
                      double rel_zero = kNearZeroRelative);
LanczosResult spectrum_lanczos(const GradientFunction& gradient, const Vector& point, int k,
                               std::uint64_t seed, double rel_zero = kNearZeroRelative);

struct HessianEstimateOptions {
  int hutchinson_probes = 200;
  int lanczos_steps = 60;
  int lanczos_starts = 1;
  double rel_zero = kNearZeroRelative;
};

// Trace by Hutchinson; spectrum sample and near-zero fraction by Lanczos
// quadrature averaged over `lanczos_starts` start vectors.
HessianSummary hessian_estimate(const GradientFunction& gradient, const Vector& point,
                                const HessianEstimateOptions& options, std::uint64_t seed);

struct RunRecord {
  std::string variant;
  int replicate = 0;
  std::uint64_t seed = 0;
  std::string fingerprint;
  TaskKind task = TaskKind::Classification;
  bool ok = true;
  std::string error;
  double metric = 0.0;  // accuracy A or loss L
  std::optional<CovarianceSummary> covariance;
  std::optional<HessianSummary> hessian;
};

struct Distribution {
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::vector<double> outliers;  // outside [q1 - 1.5 IQR, q3 + 1.5 IQR]
};

// Quartiles by linear interpolation between order statistics.
Distribution summarize(std::vector<double> values);

struct GroupSummary {
  std::string fingerprint;
  std::string variant;
  std::size_t failures = 0;
  std::map<std::string, Distribution> metrics;  // "metric", "r", "R", "trace_h", "f"
  // Mean (metric, r) point of the group.
  double mean_metric = 0.0;
  double mean_r = 0.0;
};

struct HistogramCell {
  std::string variant;
  double metric_lo = 0.0, metric_hi = 0.0;
  double r_lo = 0.0, r_hi = 0.0;
  std::size_t count = 0;
  double density = 0.0;
};

struct AggregateTable {
  std::vector<GroupSummary> groups;  // order of first appearance
  std::vector<HistogramCell> histogram;
};

struct HistogramSpec {
  int metric_bins = 20;
  int r_bins = 20;
  // Metric axis range; when unset, the range of all successful records.
  std::optional<double> metric_lo, metric_hi;
};

AggregateTable aggregate_runs(std::span<const RunRecord> records, const HistogramSpec& spec = {});

void write_runs_csv(std::span<const RunRecord> records, std::ostream& out);
void write_distribution_csv(const AggregateTable& table, std::ostream& out);
void write_histogram_csv(const AggregateTable& table, std::ostream& out);
nlohmann::json summary_json(const AggregateTable& table);

}  // namespace ldnn
