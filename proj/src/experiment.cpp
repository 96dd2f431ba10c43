#include "ldnn/experiment.hpp"

#include "ldnn/error.hpp"
#include "ldnn/random.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace ldnn {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(TaskName task) { return task == TaskName::Mnist1d ? "mnist1d" : "vdp"; }

bool VariantSpec::has_learned() const {
  return std::any_of(types.begin(), types.end(),
                     [](const TypeDescriptor& t) { return std::holds_alternative<LearnedRef>(t); });
}

const VariantSpec& ExperimentConfig::variant(const std::string& name) const {
  for (const VariantSpec& v : variants) {
    if (v.name == name) return v;
  }
  throw ConfigError("no variant named \"" + name + "\" in the roster");
}

void ExperimentConfig::validate() const {
  if (n_seeds < 1) throw ConfigError("n_seeds must be >= 1");
  if (variants.empty()) throw ConfigError("variant roster is empty");
  if (hidden_widths.empty()) throw ConfigError("hidden_widths must list at least one layer");
  for (int w : hidden_widths) {
    if (w < 1) throw ConfigError("hidden width must be >= 1, got " + std::to_string(w));
  }
  for (int w : sizes) {
    if (w < 1) throw ConfigError("size-sweep width must be >= 1, got " + std::to_string(w));
  }
  schedule.validate();
  if (data.train_path.has_value() != data.val_path.has_value()) {
    throw ConfigError("data: give both train and val paths, or neither");
  }
  if (!(data.train_fraction > 0.0 && data.train_fraction < 1.0)) {
    throw ConfigError("data: train_fraction must lie in (0, 1)");
  }
  if (data.examples < 2) throw ConfigError("data: examples must be >= 2");
  if (diagnostics.hessian_samples < 1) throw ConfigError("diagnostics: hessian_samples must be >= 1");
  if (!(learned_export.lo < learned_export.hi) || learned_export.points < 2) {
    throw ConfigError("learned_export: need lo < hi and at least 2 points");
  }

  std::set<std::string> names;
  for (const VariantSpec& v : variants) {
    if (v.name.empty()) throw ConfigError("variant without a name");
    if (!names.insert(v.name).second) throw ConfigError("duplicate variant \"" + v.name + "\"");
    if (v.types.empty()) throw ConfigError("variant \"" + v.name + "\" has no activation types");
    if (!v.split.empty()) {
      if (v.split.size() != v.types.size()) {
        throw ConfigError("variant \"" + v.name + "\": split needs one count per type");
      }
      int sum = 0;
      for (int s : v.split) {
        if (s < 0) throw ConfigError("variant \"" + v.name + "\": negative split count");
        sum += s;
      }
      const auto widths = sizes.empty() ? hidden_widths : sizes;
      for (int w : widths) {
        if (sum != w) {
          throw ConfigError("variant \"" + v.name + "\": split sums to " + std::to_string(sum) +
                            " but the layer width is " + std::to_string(w));
        }
      }
    }
  }
  for (const VariantSpec& v : variants) {
    for (const TypeDescriptor& t : v.types) {
      const auto* ref = std::get_if<LearnedRef>(&t);
      if (!ref) continue;
      const VariantSpec& src = variant(ref->variant);
      if (src.has_learned()) {
        throw ConfigError("variant \"" + v.name + "\" learns from \"" + src.name +
                          "\", which itself has learned types");
      }
      if (ref->type >= src.types.size()) {
        throw ConfigError("variant \"" + v.name + "\": \"" + src.name + "\" has no type " +
                          std::to_string(ref->type));
      }
      const auto& spec = std::get<ActivationSpec>(src.types[ref->type]);
      if (!std::holds_alternative<SubnetActivation>(spec)) {
        throw ConfigError("variant \"" + v.name + "\": no subnet at index " +
                          std::to_string(ref->type) + " of \"" + src.name + "\"");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) { return key == k; }) ==
        known.end()) {
      throw ConfigError(where + ": unknown key \"" + key + "\"");
    }
  }
}

std::string resolve(const std::string& path, const fs::path& base) {
  const fs::path p(path);
  if (p.is_absolute() || base.empty()) return path;
  return (base / p).lexically_normal().string();
}

TrainSchedule parse_schedule(const json& j) {
  reject_unknown(j,
                 {"inner_lr", "outer_lr", "outer_period", "outer_steps", "batch_size", "epochs",
                  "optimizer", "snapshot_interval", "snapshot_range", "snapshot_points",
                  "freeze_activations"},
                 "schedule");
  TrainSchedule s;
  s.inner_lr = j.value("inner_lr", s.inner_lr);
  s.outer_lr = j.value("outer_lr", s.outer_lr);
  s.outer_period = j.value("outer_period", s.outer_period);
  s.outer_steps = j.value("outer_steps", s.outer_steps);
  s.batch_size = j.value("batch_size", s.batch_size);
  s.epochs = j.value("epochs", s.epochs);
  if (j.contains("optimizer")) s.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
  s.snapshot_interval = j.value("snapshot_interval", s.snapshot_interval);
  if (j.contains("snapshot_range")) {
    const auto r = j.at("snapshot_range").get<std::vector<double>>();
    if (r.size() != 2) throw ConfigError("schedule: snapshot_range needs [lo, hi]");
    s.snapshot_lo = r[0];
    s.snapshot_hi = r[1];
  }
  s.snapshot_points = j.value("snapshot_points", s.snapshot_points);
  s.freeze_activations = j.value("freeze_activations", s.freeze_activations);
  return s;
}

DataSpec parse_data(const json& j, TaskName task, const fs::path& base) {
  DataSpec d;
  if (task == TaskName::Mnist1d) {
    reject_unknown(j, {"examples", "train_fraction", "seed", "train", "val", "synthetic", "standardize"},
                   "data");
  } else {
    reject_unknown(j,
                   {"examples", "train_fraction", "seed", "train", "val", "mu", "h", "transient",
                    "x0", "v0"},
                   "data");
  }
  d.examples = j.value("examples", d.examples);
  d.train_fraction = j.value("train_fraction", d.train_fraction);
  d.seed = j.value("seed", d.seed);
  d.standardize = j.value("standardize", d.standardize);
  if (j.contains("train")) d.train_path = resolve(j.at("train").get<std::string>(), base);
  if (j.contains("val")) d.val_path = resolve(j.at("val").get<std::string>(), base);
  if (j.contains("synthetic")) {
    const json& s = j.at("synthetic");
    reject_unknown(s,
                   {"length", "template_len", "pad_lo", "pad_hi", "scale_coeff", "max_translation",
                    "corr_noise", "iid_noise", "shear", "corr_sigma"},
                   "data.synthetic");
    Synthetic1dParams& p = d.synthetic;
    p.length = s.value("length", p.length);
    p.template_len = s.value("template_len", p.template_len);
    p.pad_lo = s.value("pad_lo", p.pad_lo);
    p.pad_hi = s.value("pad_hi", p.pad_hi);
    p.scale_coeff = s.value("scale_coeff", p.scale_coeff);
    p.max_translation = s.value("max_translation", p.max_translation);
    p.corr_noise = s.value("corr_noise", p.corr_noise);
    p.iid_noise = s.value("iid_noise", p.iid_noise);
    p.shear = s.value("shear", p.shear);
    p.corr_sigma = s.value("corr_sigma", p.corr_sigma);
  }
  VdpForecastParams& v = d.vdp;
  v.mu = j.value("mu", v.mu);
  v.h = j.value("h", v.h);
  v.n_transient = j.value("transient", v.n_transient);
  v.x0 = j.value("x0", v.x0);
  v.v0 = j.value("v0", v.v0);
  v.n_samples = d.examples;
  v.train_fraction = d.train_fraction;
  return d;
}

TypeDescriptor parse_type(json j, const fs::path& base) {
  if (j.is_string()) j = json{{"kind", "builtin"}, {"name", j.get<std::string>()}};
  const std::string kind = j.value("kind", std::string());
  if (kind == "learned") {
    reject_unknown(j, {"kind", "from", "type"}, "learned type");
    return LearnedRef{j.at("from").get<std::string>(), j.at("type").get<std::size_t>()};
  }
  if (kind == "tabulated" && j.contains("path")) {
    j["path"] = resolve(j.at("path").get<std::string>(), base);
  }
  return activation_from_json(j);
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& j, const fs::path& base_dir) {
  try {
    reject_unknown(j,
                   {"task", "data", "hidden_widths", "variants", "schedule", "n_seeds", "seed",
                    "output_dir", "sizes", "diagnostics", "learned_export", "save_params"},
                   "config");
    ExperimentConfig c;
    const std::string task = j.at("task").get<std::string>();
    if (task == "mnist1d") {
      c.task = TaskName::Mnist1d;
    } else if (task == "vdp") {
      c.task = TaskName::Vdp;
    } else {
      throw ConfigError("unknown task \"" + task + "\" (expected mnist1d or vdp)");
    }
    c.data = parse_data(j.value("data", json::object()), c.task, base_dir);
    if (j.contains("hidden_widths")) c.hidden_widths = j.at("hidden_widths").get<std::vector<int>>();
    if (j.contains("schedule")) c.schedule = parse_schedule(j.at("schedule"));
    c.n_seeds = j.value("n_seeds", c.n_seeds);
    c.seed = j.value("seed", c.seed);
    c.output_dir = resolve(j.value("output_dir", c.output_dir), base_dir);
    if (j.contains("sizes")) c.sizes = j.at("sizes").get<std::vector<int>>();
    c.save_params = j.value("save_params", c.save_params);

    for (const json& v : j.at("variants")) {
      reject_unknown(v, {"name", "types", "split"}, "variant");
      VariantSpec spec;
      spec.name = v.at("name").get<std::string>();
      for (const json& t : v.at("types")) spec.types.push_back(parse_type(t, base_dir));
      if (v.contains("split")) spec.split = v.at("split").get<std::vector<int>>();
      spec.descriptor = v;
      c.variants.push_back(std::move(spec));
    }

    if (j.contains("diagnostics")) {
      const json& d = j.at("diagnostics");
      reject_unknown(d,
                     {"participation", "hessian", "hessian_samples", "exact_cap", "probes",
                      "lanczos_steps", "lanczos_starts", "zero_threshold"},
                     "diagnostics");
      DiagnosticsSpec& ds = c.diagnostics;
      ds.participation = d.value("participation", ds.participation);
      const std::string mode = d.value("hessian", std::string("none"));
      if (mode == "none") {
        ds.hessian = HessianMode::None;
      } else if (mode == "estimate") {
        ds.hessian = HessianMode::Estimate;
      } else if (mode == "exact") {
        ds.hessian = HessianMode::Exact;
      } else {
        throw ConfigError("diagnostics: hessian must be none, estimate or exact");
      }
      ds.hessian_samples = d.value("hessian_samples", ds.hessian_samples);
      ds.exact_cap = d.value("exact_cap", ds.exact_cap);
      ds.estimate.hutchinson_probes = d.value("probes", ds.estimate.hutchinson_probes);
      ds.estimate.lanczos_steps = d.value("lanczos_steps", ds.estimate.lanczos_steps);
      ds.estimate.lanczos_starts = d.value("lanczos_starts", ds.estimate.lanczos_starts);
      ds.estimate.rel_zero = d.value("zero_threshold", ds.estimate.rel_zero);
    }
    if (j.contains("learned_export")) {
      const json& e = j.at("learned_export");
      reject_unknown(e, {"range", "points"}, "learned_export");
      if (e.contains("range")) {
        const auto r = e.at("range").get<std::vector<double>>();
        if (r.size() != 2) throw ConfigError("learned_export: range needs [lo, hi]");
        c.learned_export.lo = r[0];
        c.learned_export.hi = r[1];
      }
      c.learned_export.points = e.value("points", c.learned_export.points);
    }
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_experiment_config(j, fs::path(path).parent_path());
}

// ---------------------------------------------------------------------------

namespace {

void standardize_inputs(TaskData& data) {
  const Eigen::RowVectorXd mean = data.train.inputs.colwise().mean();
  Eigen::RowVectorXd scale =
      ((data.train.inputs.rowwise() - mean).colwise().squaredNorm() /
       static_cast<double>(data.train.size()))
          .cwiseSqrt();
  for (Eigen::Index j = 0; j < scale.size(); ++j) {
    if (!(scale(j) > 0.0)) scale(j) = 1.0;
  }
  for (Dataset* d : {&data.train, &data.val}) {
    d->inputs = ((d->inputs.rowwise() - mean).array().rowwise() / scale.array()).matrix();
  }
}

TaskData load_task_data_raw(const ExperimentConfig& config) {
  TaskData out;
  if (config.data.train_path) {
    out.train = load_dataset(*config.data.train_path);
    out.val = load_dataset(*config.data.val_path);
    const TaskKind want =
        config.task == TaskName::Mnist1d ? TaskKind::Classification : TaskKind::Regression;
    if (out.train.kind != want || out.val.kind != want) {
      throw ConfigError("data files do not hold a " + to_string(want) + " task");
    }
    if (out.train.input_dim() != out.val.input_dim() ||
        out.train.output_dim() != out.val.output_dim()) {
      throw ConfigError("train and val files disagree on dimensions");
    }
    out.train.split = Split::Train;
    out.val.split = Split::Val;
    return out;
  }
  if (config.task == TaskName::Mnist1d) {
    const Dataset all =
        generate_synthetic_1d(config.data.seed, config.data.examples, config.data.synthetic);
    auto [train, val] = split_dataset(all, config.data.train_fraction, splitmix64(config.data.seed));
    out.train = std::move(train);
    out.val = std::move(val);
  } else {
    VdpForecastData d = build_vdp_forecast_dataset(config.data.vdp, config.data.seed);
    out.train = std::move(d.train);
    out.val = std::move(d.val);
  }
  return out;
}

}  // namespace

TaskData load_task_data(const ExperimentConfig& config) {
  TaskData out = load_task_data_raw(config);
  if (config.data.standardize && out.train.kind == TaskKind::Classification) {
    standardize_inputs(out);
  }
  return out;
}

std::uint64_t run_seed(std::uint64_t campaign_seed, const std::string& variant, int replicate) {
  return splitmix64(splitmix64(campaign_seed ^ fnv1a(variant)) +
                    static_cast<std::uint64_t>(replicate));
}

json schedule_to_json(const TrainSchedule& s) {
  return json{{"inner_lr", s.inner_lr},
              {"outer_lr", s.outer_lr},
              {"outer_period", s.outer_period},
              {"outer_steps", s.outer_steps},
              {"batch_size", s.batch_size},
              {"epochs", s.epochs},
              {"optimizer", to_string(s.optimizer)},
              {"snapshot_interval", s.snapshot_interval},
              {"snapshot_range", {s.snapshot_lo, s.snapshot_hi}},
              {"snapshot_points", s.snapshot_points},
              {"freeze_activations", s.freeze_activations}};
}

std::string variant_fingerprint(const ExperimentConfig& config, const VariantSpec& variant,
                                const std::vector<int>& widths) {
  const json j{{"task", to_string(config.task)},
               {"widths", widths},
               {"variant", variant.descriptor},
               {"schedule", schedule_to_json(config.schedule)}};
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

NetworkConfig build_network(const ExperimentConfig& /*config*/, const TaskData& data,
                            const VariantSpec& variant, const std::vector<int>& widths,
                            const std::vector<ActivationSpec>& types) {
  NetworkConfig net;
  net.input_dim = static_cast<int>(data.train.input_dim());
  net.output_dim = data.train.output_dim();
  net.activations = types;
  const int n_types = static_cast<int>(types.size());
  for (int w : widths) {
    if (variant.split.empty()) {
      net.hidden.push_back(interleaved_layer(w, n_types));
      continue;
    }
    LayerSpec layer;
    layer.width = w;
    for (int t = 0; t < n_types; ++t) {
      layer.assignment.insert(layer.assignment.end(),
                              static_cast<std::size_t>(variant.split[static_cast<std::size_t>(t)]), t);
    }
    if (static_cast<int>(layer.assignment.size()) != w) {
      throw ConfigError("variant \"" + variant.name + "\": split does not sum to width " +
                        std::to_string(w));
    }
    net.hidden.push_back(std::move(layer));
  }
  net.validate();
  return net;
}

void compute_diagnostics(const ExperimentConfig& config, const TaskData& data,
                         const NetworkConfig& network, const ParamSet& params,
                         std::uint64_t seed, RunRecord& record) {
  const DiagnosticsSpec& spec = config.diagnostics;
  if (spec.participation) {
    try {
      record.covariance = participation_ratio(hidden_activity_matrix(network, params, data.val.inputs));
    } catch (const DegenerateInputError&) {
      record.covariance.reset();
    }
  }
  if (spec.hessian == HessianMode::None) return;
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(spec.hessian_samples),
                                       static_cast<std::size_t>(data.train.size()));
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  const Dataset subset = data.train.subset(rows);
  const GradientFunction grad = make_gradient_function(network, params, subset);
  const Vector point = params.flatten();
  if (spec.hessian == HessianMode::Exact) {
    record.hessian = hessian_exact(grad, point, spec.exact_cap, spec.estimate.rel_zero);
  } else {
    record.hessian = hessian_estimate(grad, point, spec.estimate, splitmix64(seed ^ 0x4e55ULL));
  }
}

RunOutput execute_run(const ExperimentConfig& config, const TaskData& data,
                      const VariantSpec& variant, const std::vector<int>& widths, int replicate,
                      const std::vector<ActivationSpec>& types) {
  RunOutput out;
  RunRecord& r = out.record;
  r.variant = variant.name;
  r.replicate = replicate;
  r.seed = run_seed(config.seed, variant.name, replicate);
  r.fingerprint = variant_fingerprint(config, variant, widths);
  r.task = data.train.kind;
  out.network = build_network(config, data, variant, widths, types);

  TrainSchedule schedule = config.schedule;
  schedule.seed = r.seed;
  try {
    out.trained = train(out.network, schedule, data.train, data.val);
    r.metric = evaluate(out.network, out.trained->params, data.val);
    compute_diagnostics(config, data, out.network, out.trained->params, r.seed, r);
  } catch (const NonFiniteError& e) {
    r.ok = false;
    r.error = e.what();
    r.covariance.reset();
    r.hessian.reset();
    out.trained.reset();
  }
  return out;
}

std::vector<std::string> CampaignResult::empty_variants() const {
  std::vector<std::string> names;
  std::map<std::string, bool> any_ok;
  for (const RunRecord& r : records) {
    if (!any_ok.count(r.variant)) names.push_back(r.variant);
    any_ok[r.variant] = any_ok[r.variant] || r.ok;
  }
  std::vector<std::string> out;
  for (const auto& n : names) {
    if (!any_ok[n]) out.push_back(n);
  }
  return out;
}

namespace {

// Runs f(0..n-1) over a pool of workers; the first exception is rethrown.
template <typename F>
void parallel_for(std::size_t n, int jobs, F&& f) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        f(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n);
      }
    }
  };
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || n <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

CampaignResult run_campaign(const ExperimentConfig& config, const TaskData& data,
                            const std::vector<int>& widths, int jobs, const fs::path& params_dir) {
  config.validate();
  const auto n_seeds = static_cast<std::size_t>(config.n_seeds);
  const std::size_t n_variants = config.variants.size();
  std::vector<RunRecord> records(n_variants * n_seeds);

  // Learned types requested of each source variant.
  std::map<std::string, std::set<std::size_t>> wanted;
  for (const VariantSpec& v : config.variants) {
    for (const TypeDescriptor& t : v.types) {
      if (const auto* ref = std::get_if<LearnedRef>(&t)) wanted[ref->variant].insert(ref->type);
    }
  }
  // (source variant, replicate, type) -> frozen table; absent if the source failed.
  std::map<std::tuple<std::string, std::size_t, std::size_t>, TabulatedActivation> learned;
  std::mutex learned_mutex;

  if (!params_dir.empty()) fs::create_directories(params_dir);

  auto run_one = [&](std::size_t vi, std::size_t rep) {
    const VariantSpec& v = config.variants[vi];
    std::vector<ActivationSpec> types;
    for (const TypeDescriptor& t : v.types) {
      if (const auto* spec = std::get_if<ActivationSpec>(&t)) {
        types.push_back(*spec);
        continue;
      }
      const auto& ref = std::get<LearnedRef>(t);
      auto it = learned.find({ref.variant, rep, ref.type});
      if (it == learned.end()) {
        RunRecord& r = records[vi * n_seeds + rep];
        r.variant = v.name;
        r.replicate = static_cast<int>(rep);
        r.seed = run_seed(config.seed, v.name, static_cast<int>(rep));
        r.fingerprint = variant_fingerprint(config, v, widths);
        r.task = data.train.kind;
        r.ok = false;
        r.error = "source run " + ref.variant + "/" + std::to_string(rep) + " failed";
        return;
      }
      types.push_back(it->second);
    }
    RunOutput out = execute_run(config, data, v, widths, static_cast<int>(rep), types);
    if (out.trained) {
      if (auto w = wanted.find(v.name); w != wanted.end()) {
        for (std::size_t t : w->second) {
          TabulatedActivation tab =
              extract_tabulated(out.network, out.trained->params, t, config.learned_export.lo,
                                config.learned_export.hi, config.learned_export.points);
          tab.provenance["task"] = to_string(config.task);
          tab.provenance["seed"] = out.record.seed;
          tab.provenance["variant"] = v.name;
          tab.provenance["type"] = t;
          std::lock_guard lock(learned_mutex);
          learned.emplace(std::tuple{v.name, rep, t}, std::move(tab));
        }
      }
      if (!params_dir.empty()) {
        save_params_file(params_dir / (v.name + "_r" + std::to_string(rep) + ".json"),
                         out.network, out.trained->params,
                         {{"variant", v.name},
                          {"replicate", rep},
                          {"seed", out.record.seed},
                          {"task", to_string(config.task)}});
      }
    }
    records[vi * n_seeds + rep] = std::move(out.record);
  };

  for (bool dependent : {false, true}) {
    std::vector<std::pair<std::size_t, std::size_t>> jobs_list;
    for (std::size_t vi = 0; vi < n_variants; ++vi) {
      if (config.variants[vi].has_learned() != dependent) continue;
      for (std::size_t rep = 0; rep < n_seeds; ++rep) jobs_list.emplace_back(vi, rep);
    }
    parallel_for(jobs_list.size(), jobs,
                 [&](std::size_t i) { run_one(jobs_list[i].first, jobs_list[i].second); });
  }

  CampaignResult result;
  result.records = std::move(records);
  HistogramSpec spec;
  if (data.train.kind == TaskKind::Classification) {
    spec.metric_lo = 0.0;
    spec.metric_hi = 1.0;
  }
  result.table = aggregate_runs(result.records, spec);
  return result;
}

json run_record_json(const RunRecord& r) {
  json j{{"variant", r.variant},         {"replicate", r.replicate}, {"seed", r.seed},
         {"fingerprint", r.fingerprint}, {"task", to_string(r.task)}, {"ok", r.ok},
         {"metric", r.metric}};
  if (!r.ok) j["error"] = r.error;
  if (r.covariance) {
    j["participation"] = {{"R", r.covariance->participation_ratio},
                          {"r", r.covariance->normalized},
                          {"trace", r.covariance->trace},
                          {"eigenvalues", std::vector<double>(r.covariance->eigenvalues.begin(),
                                                              r.covariance->eigenvalues.end())}};
  }
  if (r.hessian) {
    const HessianSummary& h = *r.hessian;
    j["hessian"] = {{"method", h.method},
                    {"dimension", h.dimension},
                    {"trace", h.trace},
                    {"trace_stderr", h.trace_stderr},
                    {"near_zero_fraction", h.near_zero_fraction},
                    {"asymmetry", h.asymmetry},
                    {"breakdown", h.breakdown},
                    {"eigenvalues", std::vector<double>(h.eigenvalues.begin(), h.eigenvalues.end())},
                    {"weights", std::vector<double>(h.weights.begin(), h.weights.end())}};
  }
  return j;
}

void write_campaign(const CampaignResult& result, const fs::path& dir) {
  fs::create_directories(dir);
  std::ostringstream runs, dist, hist;
  write_runs_csv(result.records, runs);
  write_distribution_csv(result.table, dist);
  write_histogram_csv(result.table, hist);
  write_text_file(dir / "runs.csv", runs.str());
  write_text_file(dir / "distribution.csv", dist.str());
  write_text_file(dir / "histogram.csv", hist.str());
  write_text_file(dir / "summary.json", summary_json(result.table).dump(2) + "\n");
}

void save_params_file(const fs::path& path, const NetworkConfig& network, const ParamSet& params,
                      const json& provenance) {
  write_text_file(path, params_to_json(network, params, provenance).dump(1) + "\n");
}

std::pair<NetworkConfig, ParamSet> load_params_file(const fs::path& path) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return params_from_json(j);
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace ldnn
