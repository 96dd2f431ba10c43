#include "ldnn/diagnostics.hpp"

#include "ldnn/format.hpp"
#include "ldnn/random.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace ldnn {

double near_zero_fraction(const Vector& eigenvalues, double rel) {
  if (eigenvalues.size() == 0) return 0.0;
  const double threshold = rel * eigenvalues.cwiseAbs().maxCoeff();
  Eigen::Index n = 0;
  for (double v : eigenvalues) {
    if (std::abs(v) < threshold) ++n;
  }
  // All-zero spectrum: every eigenvalue is near zero.
  if (threshold == 0.0) return 1.0;
  return static_cast<double>(n) / static_cast<double>(eigenvalues.size());
}

HessianSummary hessian_exact(const GradientFunction& gradient, const Vector& point,
                             Eigen::Index cap, double rel_zero) {
  const Eigen::Index p = point.size();
  if (p > cap) {
    throw ConfigError("hessian_exact: " + std::to_string(p) + " parameters exceed the cap of " +
                      std::to_string(cap) +
                      "; use the Hutchinson/Lanczos estimators for networks this large");
  }
  Eigen::MatrixXd h(p, p);
  Vector e = Vector::Zero(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    e(i) = 1.0;
    h.col(i) = hessian_vector_product(gradient, point, e);
    e(i) = 0.0;
  }
  HessianSummary out;
  out.method = "exact";
  out.dimension = p;
  out.asymmetry = p > 0 ? (h - h.transpose()).cwiseAbs().maxCoeff() : 0.0;
  const Eigen::MatrixXd sym = 0.5 * (h + h.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym, Eigen::EigenvaluesOnly);
  out.eigenvalues = solver.eigenvalues();
  out.trace = sym.trace();
  out.near_zero_fraction = near_zero_fraction(out.eigenvalues, rel_zero);
  return out;
}

TraceEstimate trace_hutchinson(const LinearOperator& op, Eigen::Index dim, int n_probes,
                               std::uint64_t seed) {
  if (n_probes < 2) throw ConfigError("Hutchinson estimator needs at least 2 probes");
  Rng rng(seed);
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(n_probes));
  Vector z(dim);
  for (int i = 0; i < n_probes; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) z(j) = rng.rademacher();
    samples.push_back(z.dot(op(z)));
  }
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= n_probes;
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  var /= (n_probes - 1);
  return {mean, std::sqrt(var / n_probes), n_probes};
}

TraceEstimate hessian_trace_hutchinson(const GradientFunction& gradient, const Vector& point,
                                       int n_probes, std::uint64_t seed) {
  return trace_hutchinson(
      [&](const Vector& z) { return hessian_vector_product(gradient, point, z); }, point.size(),
      n_probes, seed);
}

LanczosResult lanczos(const LinearOperator& op, Eigen::Index dim, int k, std::uint64_t seed,
                      double rel_zero) {
  if (k < 1 || k > dim) {
    throw ConfigError("lanczos: need 1 <= k <= dimension (" + std::to_string(dim) + "), got " +
                      std::to_string(k));
  }
  Rng rng(seed);
  Eigen::MatrixXd basis(dim, k);
  Vector q(dim);
  for (Eigen::Index j = 0; j < dim; ++j) q(j) = rng.rademacher();
  q.normalize();
  basis.col(0) = q;

  std::vector<double> alpha;
  std::vector<double> beta;
  LanczosResult out;
  double scale = 0.0;
  for (int j = 0; j < k; ++j) {
    Vector w = op(basis.col(j));
    const double a = basis.col(j).dot(w);
    alpha.push_back(a);
    w -= a * basis.col(j);
    if (j > 0) w -= beta.back() * basis.col(j - 1);
    // Full reorthogonalization, twice for stability.
    for (int pass = 0; pass < 2; ++pass) {
      const auto known = basis.leftCols(j + 1);
      w -= known * (known.transpose() * w);
    }
    const double b = w.norm();
    scale = std::max({scale, std::abs(a), b});
    if (j == k - 1) break;
    if (b <= 1e-10 * std::max(scale, 1e-300)) {
      out.breakdown = true;
      break;
    }
    beta.push_back(b);
    basis.col(j + 1) = w / b;
  }
  out.steps = static_cast<int>(alpha.size());

  const Vector diag = Eigen::Map<const Vector>(alpha.data(), static_cast<Eigen::Index>(alpha.size()));
  const Vector sub = Eigen::Map<const Vector>(beta.data(), static_cast<Eigen::Index>(beta.size()));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  out.ritz_values = solver.eigenvalues();
  out.ritz_weights = solver.eigenvectors().row(0).transpose().array().square();

  const double threshold = rel_zero * out.ritz_values.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < out.ritz_values.size(); ++i) {
    if (std::abs(out.ritz_values(i)) < threshold || threshold == 0.0) {
      out.near_zero_fraction += out.ritz_weights(i);
    }
  }
  return out;
}

LanczosResult spectrum_lanczos(const GradientFunction& gradient, const Vector& point, int k,
                               std::uint64_t seed, double rel_zero) {
  return lanczos([&](const Vector& v) { return hessian_vector_product(gradient, point, v); },
                 point.size(), k, seed, rel_zero);
}

HessianSummary hessian_estimate(const GradientFunction& gradient, const Vector& point,
                                const HessianEstimateOptions& options, std::uint64_t seed) {
  HessianSummary out;
  out.method = "estimate";
  out.dimension = point.size();
  const TraceEstimate tr =
      hessian_trace_hutchinson(gradient, point, options.hutchinson_probes, splitmix64(seed));
  out.trace = tr.mean;
  out.trace_stderr = tr.standard_error;

  const int k = static_cast<int>(std::min<Eigen::Index>(options.lanczos_steps, point.size()));
  std::vector<double> values;
  std::vector<double> weights;
  double f = 0.0;
  const int starts = std::max(1, options.lanczos_starts);
  for (int s = 0; s < starts; ++s) {
    const LanczosResult lz = spectrum_lanczos(gradient, point, k,
                                              splitmix64(seed + 1 + static_cast<std::uint64_t>(s)),
                                              options.rel_zero);
    out.breakdown = out.breakdown || lz.breakdown;
    f += lz.near_zero_fraction;
    for (Eigen::Index i = 0; i < lz.ritz_values.size(); ++i) {
      values.push_back(lz.ritz_values(i));
      weights.push_back(lz.ritz_weights(i) / starts);
    }
  }
  // Sort the pooled nodes ascending, carrying weights along.
  std::vector<std::size_t> order(values.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  out.eigenvalues.resize(static_cast<Eigen::Index>(values.size()));
  out.weights.resize(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.eigenvalues(static_cast<Eigen::Index>(i)) = values[order[i]];
    out.weights(static_cast<Eigen::Index>(i)) = weights[order[i]];
  }
  out.near_zero_fraction = f / starts;
  return out;
}

// ---------------------------------------------------------------------------
// Run aggregation

namespace {

double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

Distribution summarize(std::vector<double> values) {
  Distribution d;
  d.count = values.size();
  if (values.empty()) return d;
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  d.mean = sum / static_cast<double>(values.size());
  d.median = quantile_sorted(values, 0.5);
  d.q1 = quantile_sorted(values, 0.25);
  d.q3 = quantile_sorted(values, 0.75);
  d.min = values.front();
  d.max = values.back();
  const double iqr = d.q3 - d.q1;
  for (double v : values) {
    if (v < d.q1 - 1.5 * iqr || v > d.q3 + 1.5 * iqr) d.outliers.push_back(v);
  }
  return d;
}

AggregateTable aggregate_runs(std::span<const RunRecord> records, const HistogramSpec& spec) {
  AggregateTable table;
  std::vector<std::vector<const RunRecord*>> members;
  for (const RunRecord& r : records) {
    auto it = std::find_if(table.groups.begin(), table.groups.end(),
                           [&](const GroupSummary& g) { return g.fingerprint == r.fingerprint; });
    std::size_t idx;
    if (it == table.groups.end()) {
      table.groups.push_back({r.fingerprint, r.variant, 0, {}, 0.0, 0.0});
      members.emplace_back();
      idx = table.groups.size() - 1;
    } else {
      idx = static_cast<std::size_t>(it - table.groups.begin());
    }
    if (r.ok) {
      members[idx].push_back(&r);
    } else {
      ++table.groups[idx].failures;
    }
  }

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < table.groups.size(); ++g) {
    std::map<std::string, std::vector<double>> series;
    for (const RunRecord* r : members[g]) {
      series["metric"].push_back(r->metric);
      lo = std::min(lo, r->metric);
      hi = std::max(hi, r->metric);
      if (r->covariance) {
        series["R"].push_back(r->covariance->participation_ratio);
        series["r"].push_back(r->covariance->normalized);
      }
      if (r->hessian) {
        series["trace_h"].push_back(r->hessian->trace);
        series["f"].push_back(r->hessian->near_zero_fraction);
      }
    }
    GroupSummary& gs = table.groups[g];
    for (auto& [name, values] : series) gs.metrics[name] = summarize(values);
    if (gs.metrics.count("metric")) gs.mean_metric = gs.metrics["metric"].mean;
    if (gs.metrics.count("r")) gs.mean_r = gs.metrics["r"].mean;
  }

  const double mlo = spec.metric_lo.value_or(lo);
  double mhi = spec.metric_hi.value_or(hi);
  if (!(mhi > mlo)) mhi = mlo + 1.0;
  const double mw = (mhi - mlo) / spec.metric_bins;
  const double rw = 1.0 / spec.r_bins;
  for (std::size_t g = 0; g < table.groups.size(); ++g) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(spec.metric_bins * spec.r_bins), 0);
    std::size_t total = 0;
    for (const RunRecord* r : members[g]) {
      if (!r->covariance) continue;
      auto bin = [](double v, double origin, double width, int n) {
        int b = static_cast<int>(std::floor((v - origin) / width));
        return std::clamp(b, 0, n - 1);
      };
      const int mb = bin(r->metric, mlo, mw, spec.metric_bins);
      const int rb = bin(r->covariance->normalized, 0.0, rw, spec.r_bins);
      ++counts[static_cast<std::size_t>(mb * spec.r_bins + rb)];
      ++total;
    }
    if (total == 0) continue;
    for (int mb = 0; mb < spec.metric_bins; ++mb) {
      for (int rb = 0; rb < spec.r_bins; ++rb) {
        HistogramCell cell;
        cell.variant = table.groups[g].variant;
        cell.metric_lo = mlo + mb * mw;
        cell.metric_hi = mlo + (mb + 1) * mw;
        cell.r_lo = rb * rw;
        cell.r_hi = (rb + 1) * rw;
        cell.count = counts[static_cast<std::size_t>(mb * spec.r_bins + rb)];
        cell.density = static_cast<double>(cell.count) / (static_cast<double>(total) * mw * rw);
        table.histogram.push_back(cell);
      }
    }
  }
  return table;
}

void write_runs_csv(std::span<const RunRecord> records, std::ostream& out) {
  out << "variant,replicate,seed,fingerprint,status,task,metric,R,r,trace_h,trace_h_stderr,f,"
         "hessian_method,error\n";
  for (const RunRecord& r : records) {
    auto opt = [](bool present, double v) { return present ? format_double(v) : std::string(); };
    const bool cov = r.ok && r.covariance.has_value();
    const bool hes = r.ok && r.hessian.has_value();
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << r.variant << ',' << r.replicate << ',' << r.seed << ',' << r.fingerprint << ','
        << (r.ok ? "ok" : "failed") << ',' << to_string(r.task) << ',' << opt(r.ok, r.metric) << ','
        << opt(cov, cov ? r.covariance->participation_ratio : 0.0) << ','
        << opt(cov, cov ? r.covariance->normalized : 0.0) << ','
        << opt(hes, hes ? r.hessian->trace : 0.0) << ','
        << opt(hes, hes ? r.hessian->trace_stderr : 0.0) << ','
        << opt(hes, hes ? r.hessian->near_zero_fraction : 0.0) << ','
        << (hes ? r.hessian->method : std::string()) << ',' << err << '\n';
  }
}

void write_distribution_csv(const AggregateTable& table, std::ostream& out) {
  out << "variant,fingerprint,quantity,count,failures,mean,median,q1,q3,min,max,n_outliers\n";
  for (const GroupSummary& g : table.groups) {
    for (const auto& [name, d] : g.metrics) {
      out << g.variant << ',' << g.fingerprint << ',' << name << ',' << d.count << ','
          << g.failures << ',' << format_double(d.mean) << ',' << format_double(d.median) << ','
          << format_double(d.q1) << ',' << format_double(d.q3) << ',' << format_double(d.min)
          << ',' << format_double(d.max) << ',' << d.outliers.size() << '\n';
    }
  }
}

void write_histogram_csv(const AggregateTable& table, std::ostream& out) {
  out << "variant,metric_lo,metric_hi,r_lo,r_hi,count,density\n";
  for (const HistogramCell& c : table.histogram) {
    out << c.variant << ',' << format_double(c.metric_lo) << ',' << format_double(c.metric_hi)
        << ',' << format_double(c.r_lo) << ',' << format_double(c.r_hi) << ',' << c.count << ','
        << format_double(c.density) << '\n';
  }
}

nlohmann::json summary_json(const AggregateTable& table) {
  nlohmann::json groups = nlohmann::json::array();
  for (const GroupSummary& g : table.groups) {
    nlohmann::json metrics = nlohmann::json::object();
    for (const auto& [name, d] : g.metrics) {
      metrics[name] = {{"count", d.count},   {"mean", d.mean}, {"median", d.median},
                       {"q1", d.q1},         {"q3", d.q3},     {"min", d.min},
                       {"max", d.max},       {"outliers", d.outliers}};
    }
    groups.push_back({{"variant", g.variant},
                      {"fingerprint", g.fingerprint},
                      {"failures", g.failures},
                      {"mean_metric", g.mean_metric},
                      {"mean_r", g.mean_r},
                      {"metrics", metrics}});
  }
  return {{"groups", groups}};
}

}  // namespace ldnn
