#include "ldnn/tasks.hpp"

#include "ldnn/error.hpp"
#include "ldnn/random.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>

namespace ldnn {

std::string to_string(TaskKind kind) {
  return kind == TaskKind::Classification ? "classification" : "regression";
}

std::string to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

void Dataset::validate() const {
  if (inputs.rows() == 0) throw ConfigError("dataset has no examples");
  if (!inputs.allFinite()) throw ConfigError("dataset inputs contain non-finite values");
  if (kind == TaskKind::Classification) {
    if (num_classes <= 0) throw ConfigError("classification dataset needs K > 0");
    if (static_cast<Eigen::Index>(labels.size()) != inputs.rows()) {
      throw ConfigError("dataset has " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(inputs.rows()) + " examples");
    }
    for (int y : labels) {
      if (y < 0 || y >= num_classes) {
        throw ConfigError("label " + std::to_string(y) + " outside [0, " +
                          std::to_string(num_classes) + ")");
      }
    }
  } else {
    if (targets.rows() != inputs.rows() || targets.cols() == 0) {
      throw ConfigError("regression targets " + shape_string(targets) + " do not match inputs " +
                        shape_string(inputs));
    }
    if (!targets.allFinite()) throw ConfigError("dataset targets contain non-finite values");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.kind = kind;
  out.split = split;
  out.num_classes = num_classes;
  out.inputs.resize(static_cast<Eigen::Index>(rows.size()), inputs.cols());
  if (kind == TaskKind::Classification) {
    out.labels.reserve(rows.size());
  } else {
    out.targets.resize(static_cast<Eigen::Index>(rows.size()), targets.cols());
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    out.inputs.row(static_cast<Eigen::Index>(i)) = inputs.row(r);
    if (kind == TaskKind::Classification) {
      out.labels.push_back(labels[rows[i]]);
    } else {
      out.targets.row(static_cast<Eigen::Index>(i)) = targets.row(r);
    }
  }
  return out;
}

namespace {
bool same_bits(const Tensor& a, const Tensor& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}
}  // namespace

bool operator==(const Dataset& a, const Dataset& b) {
  return a.kind == b.kind && a.split == b.split && a.num_classes == b.num_classes &&
         a.labels == b.labels && same_bits(a.inputs, b.inputs) && same_bits(a.targets, b.targets);
}

// ---------------------------------------------------------------------------
// Container format

namespace {

void append_double(std::string& out, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

std::optional<std::string> find_header_field(const std::string& header, const std::string& key) {
  std::istringstream ss(header);
  std::string tok;
  while (ss >> tok) {
    if (tok.rfind(key + "=", 0) == 0) return tok.substr(key.size() + 1);
  }
  return std::nullopt;
}

std::string header_field(const std::string& header, const std::string& key,
                         const std::string& source) {
  if (auto v = find_header_field(header, key)) return *v;
  throw ParseError(source + ":1: header is missing " + key + "=");
}

int header_int(const std::string& header, const std::string& key, const std::string& source) {
  const std::string v = header_field(header, key, source);
  int out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || out < 0) {
    throw ParseError(source + ":1: header field " + key + "=" + v + " is not a non-negative integer");
  }
  return out;
}

}  // namespace

std::string format_dataset(const Dataset& d) {
  std::string out = "#dsv1 task=" + to_string(d.kind) + " D=" + std::to_string(d.input_dim());
  out += d.kind == TaskKind::Classification ? " K=" : " O=";
  out += std::to_string(d.output_dim()) + " M=" + std::to_string(d.size());
  // Optional trailing field; readers that ignore it see a train split.
  if (d.split != Split::Train) out += " split=" + to_string(d.split);
  out += '\n';
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    for (Eigen::Index j = 0; j < d.input_dim(); ++j) {
      append_double(out, d.inputs(i, j));
      out += ',';
    }
    if (d.kind == TaskKind::Classification) {
      out += std::to_string(d.labels[static_cast<std::size_t>(i)]);
    } else {
      for (Eigen::Index j = 0; j < d.targets.cols(); ++j) {
        if (j) out += ',';
        append_double(out, d.targets(i, j));
      }
    }
    out += '\n';
  }
  return out;
}

Dataset parse_dataset(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string header;
  if (!std::getline(in, header) || header.rfind("#dsv1", 0) != 0) {
    throw ParseError(source + ":1: missing #dsv1 header");
  }
  Dataset d;
  const std::string task = header_field(header, "task", source);
  if (task == "classification") {
    d.kind = TaskKind::Classification;
  } else if (task == "regression") {
    d.kind = TaskKind::Regression;
  } else {
    throw ParseError(source + ":1: unknown task \"" + task + "\"");
  }
  const int dim = header_int(header, "D", source);
  const int out_dim = header_int(header, d.kind == TaskKind::Classification ? "K" : "O", source);
  const int m = header_int(header, "M", source);
  if (dim <= 0 || out_dim <= 0) throw ParseError(source + ":1: D and K/O must be positive");
  if (auto split = find_header_field(header, "split")) {
    if (*split == "train") d.split = Split::Train;
    else if (*split == "val") d.split = Split::Val;
    else if (*split == "test") d.split = Split::Test;
    else throw ParseError(source + ":1: unknown split \"" + *split + "\"");
  }

  const int fields = dim + (d.kind == TaskKind::Classification ? 1 : out_dim);
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> values;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    int field = 0;
    while (true) {
      const char* comma = std::find(p, end, ',');
      if (d.kind == TaskKind::Classification && field == dim) {
        int y = 0;
        auto [ptr, ec] = std::from_chars(p, comma, y);
        if (ec != std::errc() || ptr != comma) {
          throw ParseError(source + ":" + std::to_string(line_no) + ": field " +
                           std::to_string(field + 1) + " is not an integer label");
        }
        labels.push_back(y);
      } else {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(p, comma, v);
        if (ec != std::errc() || ptr != comma) {
          throw ParseError(source + ":" + std::to_string(line_no) + ": field " +
                           std::to_string(field + 1) + " is not a number");
        }
        values.push_back(v);
      }
      ++field;
      if (comma == end) break;
      p = comma + 1;
    }
    if (field != fields) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(fields) + " fields, found " + std::to_string(field));
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw ParseError(source + ": no examples");
  if (static_cast<int>(rows.size()) != m) {
    throw ParseError(source + ": header declares M=" + std::to_string(m) + " but body has " +
                     std::to_string(rows.size()) + " examples");
  }

  d.inputs.resize(m, dim);
  if (d.kind == TaskKind::Regression) d.targets.resize(m, out_dim);
  for (int i = 0; i < m; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    for (int j = 0; j < dim; ++j) d.inputs(i, j) = r[static_cast<std::size_t>(j)];
    if (d.kind == TaskKind::Regression) {
      for (int j = 0; j < out_dim; ++j) d.targets(i, j) = r[static_cast<std::size_t>(dim + j)];
    }
  }
  if (d.kind == TaskKind::Classification) {
    d.labels = std::move(labels);
    d.num_classes = out_dim;
  }
  try {
    d.validate();
  } catch (const ConfigError& e) {
    throw ParseError(source + ": " + e.what());
  }
  return d;
}

void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << format_dataset(d);
  if (!out) throw IoError("write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str(), path);
}

// ---------------------------------------------------------------------------
// Synthetic 1-D digits

const std::vector<std::vector<double>>& digit_templates() {
  static const std::vector<std::vector<double>> templates = [] {
    std::vector<std::vector<double>> raw = {
        {5, 6, 6.5, 6.75, 7, 7, 7, 7, 6.75, 6.5, 6, 5},
        {5, 3, 3, 3.4, 3.8, 4.2, 4.6, 5, 5.4, 5.8, 5, 5},
        {5, 6, 6.5, 6.5, 6, 5.25, 4.75, 4, 3.5, 3.5, 4, 5},
        {5, 6, 6.5, 6.5, 6, 5, 5, 6, 6.5, 6.5, 6, 5},
        {5, 4.4, 3.8, 3.2, 2.6, 2.6, 5, 5, 5, 5, 5, 5},
        {5, 3, 3, 3, 3, 5, 6, 6.5, 6.5, 6, 4.5, 5},
        {5, 4, 3.5, 3.25, 3, 3, 3, 3, 3.25, 3.5, 4, 5},
        {5, 7, 7, 6.6, 6.2, 5.8, 5.4, 5, 4.6, 4.2, 5, 5},
        {5, 4, 3.5, 3.5, 4, 5, 5, 4, 3.5, 3.5, 4, 5},
        {5, 4, 3.5, 3.5, 4, 5, 5, 5, 5, 4.7, 4.3, 5},
    };
    // Whiten each template, anchor it to start at zero, and shrink by 6.
    for (auto& t : raw) {
      const double n = static_cast<double>(t.size());
      double mean = 0.0;
      for (double v : t) mean += v;
      mean /= n;
      double var = 0.0;
      for (double v : t) var += (v - mean) * (v - mean);
      const double sd = std::sqrt(var / n);
      for (double& v : t) v = (v - mean) / sd;
      const double first = t.front();
      for (double& v : t) v = (v - first) / 6.0;
    }
    return raw;
  }();
  return templates;
}

namespace {

std::vector<double> resample_linear(const std::vector<double>& x, int n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  const double last = static_cast<double>(x.size() - 1);
  for (int i = 0; i < n; ++i) {
    const double pos = n == 1 ? 0.0 : last * static_cast<double>(i) / (n - 1);
    const auto k = std::min(static_cast<std::size_t>(pos), x.size() - 2);
    const double t = pos - static_cast<double>(k);
    out[static_cast<std::size_t>(i)] = x[k] + t * (x[k + 1] - x[k]);
  }
  return out;
}

// Gaussian smoothing with mirror ("reflect") boundaries, kernel radius 4 sigma.
std::vector<double> gaussian_smooth(const std::vector<double>& x, double sigma) {
  if (sigma <= 0.0) return x;
  const int radius = static_cast<int>(4.0 * sigma + 0.5);
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    const double w = std::exp(-0.5 * k * k / (sigma * sigma));
    kernel[static_cast<std::size_t>(k + radius)] = w;
    sum += w;
  }
  for (double& w : kernel) w /= sum;
  const int n = static_cast<int>(x.size());
  auto reflect = [n](int i) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return i;
  };
  std::vector<double> out(x.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int k = -radius; k <= radius; ++k) {
      acc += kernel[static_cast<std::size_t>(k + radius)] * x[static_cast<std::size_t>(reflect(i + k))];
    }
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

}  // namespace

Dataset generate_synthetic_1d(std::uint64_t seed, int m, const Synthetic1dParams& params) {
  if (m <= 0) throw ConfigError("generate_synthetic_1d: M must be positive");
  if (params.length < 2 || params.pad_lo < 0 || params.pad_hi < params.pad_lo ||
      params.max_translation < 0) {
    throw ConfigError("generate_synthetic_1d: invalid generator parameters");
  }
  const auto& templates = digit_templates();
  Rng rng(seed);
  Dataset d;
  d.kind = TaskKind::Classification;
  d.num_classes = 10;
  d.inputs.resize(m, params.length);
  d.labels.resize(static_cast<std::size_t>(m));
  const int window = params.template_len + params.pad_hi;

  for (int i = 0; i < m; ++i) {
    const int y = i % 10;
    std::vector<double> x = templates[static_cast<std::size_t>(y)];
    if (params.template_len != static_cast<int>(x.size())) x = resample_linear(x, params.template_len);
    // Template samples stay distinguishable from padding.
    for (double& v : x) v += 1e-8;

    const int pad = params.pad_lo +
                    static_cast<int>(rng.below(static_cast<std::uint64_t>(params.pad_hi - params.pad_lo + 1)));
    x.resize(x.size() + static_cast<std::size_t>(pad), 0.0);
    x = resample_linear(x, window);

    const double gain = 1.0 + params.scale_coeff * (rng.uniform() - 0.5);
    for (double& v : x) v *= gain;

    if (params.max_translation > 0) {
      const auto k = static_cast<std::ptrdiff_t>(rng.below(static_cast<std::uint64_t>(params.max_translation)));
      std::rotate(x.begin(), x.end() - k, x.end());
    }

    std::vector<double> noise(x.size());
    for (double& v : noise) v = params.corr_noise * rng.normal();
    noise = gaussian_smooth(noise, params.corr_sigma);
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (x[j] == 0.0) x[j] = noise[j];
      x[j] += params.iid_noise * rng.normal();
    }

    const double slope = params.shear * (2.0 * rng.uniform() - 1.0);
    const double n = static_cast<double>(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
      x[j] -= slope * (-0.5 + static_cast<double>(j) / (n - 1.0));
    }

    x = resample_linear(x, params.length);
    for (int j = 0; j < params.length; ++j) d.inputs(i, j) = x[static_cast<std::size_t>(j)];
    d.labels[static_cast<std::size_t>(i)] = y;
  }
  return d;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double train_fraction,
                                          std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train fraction must lie in (0, 1)");
  }
  Rng rng(seed);
  const auto perm = rng.permutation(static_cast<std::size_t>(d.size()));
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(d.size())));
  if (n_train == 0 || n_train >= perm.size()) throw ConfigError("split leaves an empty part");
  Dataset train = d.subset(std::span(perm).first(n_train));
  Dataset val = d.subset(std::span(perm).subspan(n_train));
  train.split = Split::Train;
  val.split = Split::Val;
  return {std::move(train), std::move(val)};
}

// ---------------------------------------------------------------------------
// van der Pol forecasting

Tensor Standardizer::apply(const Tensor& raw) const {
  return ((raw.rowwise() - mean).array().rowwise() / scale.array()).matrix();
}

Tensor Standardizer::invert(const Tensor& standardized) const {
  return (standardized.array().rowwise() * scale.array()).matrix().rowwise() + mean;
}

VdpForecastData build_vdp_forecast_dataset(const VdpForecastParams& params, std::uint64_t seed) {
  if (params.n_transient <= 0 || params.n_samples <= 0) {
    throw ConfigError("van der Pol dataset: n_transient and n_samples must be positive");
  }
  if (!(params.h > 0.0)) throw ConfigError("van der Pol dataset: step h must be positive");
  OscillatorState<double> s{params.x0, params.v0, 0.0};
  auto advance = [&] {
    s = rk4_step(s, params.h, params.mu);
    if (!std::isfinite(s.x) || !std::isfinite(s.v) || std::abs(s.x) > 1e6) {
      throw NonFiniteError("van der Pol trajectory diverged at t=" + std::to_string(s.t));
    }
  };
  for (int i = 0; i < params.n_transient; ++i) advance();

  Tensor states(params.n_samples + 1, 2);
  states(0, 0) = s.x;
  states(0, 1) = s.v;
  for (int i = 1; i <= params.n_samples; ++i) {
    advance();
    states(i, 0) = s.x;
    states(i, 1) = s.v;
  }

  Dataset all;
  all.kind = TaskKind::Regression;
  all.inputs = states.topRows(params.n_samples);
  all.targets = states.bottomRows(params.n_samples);
  auto [train, val] = split_dataset(all, params.train_fraction, seed);

  Standardizer tr;
  tr.mean = train.inputs.colwise().mean();
  const Tensor centered = train.inputs.rowwise() - tr.mean;
  tr.scale = (centered.array().square().colwise().sum() / static_cast<double>(train.size())).sqrt();
  for (Split which : {Split::Train, Split::Val}) {
    Dataset& part = which == Split::Train ? train : val;
    part.inputs = tr.apply(part.inputs);
    part.targets = tr.apply(part.targets);
  }
  return {std::move(train), std::move(val), std::move(tr), params};
}

}  // namespace ldnn
