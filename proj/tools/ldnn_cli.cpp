// ldnn: train, campaign, size-sweep, export-activation, gen-data, diagnose.
//
// Exit codes: 0 ok, 2 configuration/usage error, 3 training abort (or a
// campaign variant with no successful run), 4 I/O error.

#include "ldnn/error.hpp"
#include "ldnn/experiment.hpp"
#include "ldnn/format.hpp"
#include "ldnn/random.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using namespace ldnn;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kTrainingAbort = 3;
constexpr int kIoError = 4;

int default_jobs() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              std::optional<std::string> out_dir, std::optional<std::string> variant_name) {
  ExperimentConfig config = load_experiment_config(config_path);
  if (seed) config.seed = *seed;
  const fs::path out = out_dir.value_or(config.output_dir);
  const VariantSpec& variant =
      variant_name ? config.variant(*variant_name) : config.variants.front();
  if (variant.has_learned()) {
    throw ConfigError("variant \"" + variant.name +
                      "\" uses learned types; run it through campaign, or export the activation "
                      "and reference the tabulated file");
  }
  std::vector<ActivationSpec> types;
  for (const TypeDescriptor& t : variant.types) types.push_back(std::get<ActivationSpec>(t));

  const TaskData data = load_task_data(config);
  RunOutput run = execute_run(config, data, variant, config.hidden_widths, 0, types);
  if (!run.record.ok) {
    std::cerr << "training aborted: " << run.record.error << "\n";
    return kTrainingAbort;
  }
  fs::create_directories(out);
  save_params_file(out / "params.json", run.network, run.trained->params,
                   {{"variant", variant.name},
                    {"seed", run.record.seed},
                    {"task", to_string(config.task)}});
  std::ostringstream history;
  write_history_csv(run.trained->history, history);
  write_text_file(out / "history.csv", history.str());
  for (std::size_t t = 0; t < run.network.activations.size(); ++t) {
    if (!std::holds_alternative<SubnetActivation>(run.network.activations[t])) continue;
    std::ostringstream trace;
    write_activation_trace_csv(run.trained->history, t, trace);
    write_text_file(out / ("act_trace_type" + std::to_string(t) + ".csv"), trace.str());
  }
  write_text_file(out / "metrics.json", run_record_json(run.record).dump(2) + "\n");
  std::cout << variant.name << " seed " << run.record.seed << ": "
            << (data.train.kind == TaskKind::Classification ? "val accuracy " : "val mse ")
            << format_double(run.record.metric) << "\n";
  return kOk;
}

int report_campaign(const CampaignResult& result) {
  for (const GroupSummary& g : result.table.groups) {
    const auto it = g.metrics.find("metric");
    std::cout << g.variant << ": ";
    if (it == g.metrics.end()) {
      std::cout << "no successful runs";
    } else {
      std::cout << "n=" << it->second.count << " median " << format_double(it->second.median)
                << " mean " << format_double(it->second.mean);
    }
    if (g.failures > 0) std::cout << " (" << g.failures << " failed)";
    std::cout << "\n";
  }
  const auto empty = result.empty_variants();
  for (const auto& name : empty) std::cerr << "variant " << name << " has no successful run\n";
  return empty.empty() ? kOk : kTrainingAbort;
}

int cmd_campaign(const std::string& config_path, std::optional<std::uint64_t> seed,
                 std::optional<std::string> out_dir, int jobs) {
  ExperimentConfig config = load_experiment_config(config_path);
  if (seed) config.seed = *seed;
  const fs::path out = out_dir.value_or(config.output_dir);
  const TaskData data = load_task_data(config);
  const CampaignResult result = run_campaign(config, data, config.hidden_widths, jobs,
                                             config.save_params ? out / "params" : fs::path());
  write_campaign(result, out);
  return report_campaign(result);
}

int cmd_size_sweep(const std::string& config_path, std::optional<std::uint64_t> seed,
                   std::optional<std::string> out_dir, int jobs) {
  ExperimentConfig config = load_experiment_config(config_path);
  if (seed) config.seed = *seed;
  if (config.sizes.empty()) throw ConfigError("size-sweep needs a \"sizes\" list in the config");
  const fs::path out = out_dir.value_or(config.output_dir);
  const TaskData data = load_task_data(config);
  std::ostringstream sizes;
  sizes << "size,variant,count,failures,mean,median,q1,q3,min,max,n_outliers\n";
  int code = kOk;
  for (int size : config.sizes) {
    const std::vector<int> widths(config.hidden_widths.size(), size);
    const fs::path dir = out / ("size-" + std::to_string(size));
    std::cout << "width " << size << "\n";
    const CampaignResult result = run_campaign(config, data, widths, jobs,
                                               config.save_params ? dir / "params" : fs::path());
    write_campaign(result, dir);
    if (report_campaign(result) != kOk) code = kTrainingAbort;
    for (const GroupSummary& g : result.table.groups) {
      const auto it = g.metrics.find("metric");
      const Distribution d = it == g.metrics.end() ? Distribution{} : it->second;
      sizes << size << ',' << g.variant << ',' << d.count << ',' << g.failures << ','
            << format_double(d.mean) << ',' << format_double(d.median) << ','
            << format_double(d.q1) << ',' << format_double(d.q3) << ',' << format_double(d.min)
            << ',' << format_double(d.max) << ',' << d.outliers.size() << '\n';
    }
  }
  write_text_file(out / "sizes.csv", sizes.str());
  return code;
}

int cmd_export(const std::string& params_path, std::size_t type, std::vector<double> range,
               int points, const std::string& out) {
  if (range.size() != 2 || !(range[0] < range[1])) {
    throw ConfigError("--range needs two values lo < hi");
  }
  if (points < 2) throw ConfigError("--points must be >= 2");
  auto [network, params] = load_params_file(params_path);
  TabulatedActivation tab = extract_tabulated(network, params, type, range[0], range[1], points);
  tab.provenance["type"] = type;
  tab.provenance["source"] = fs::path(params_path).filename().string();
  save_tabulated(tab, out);
  return kOk;
}

int cmd_gen_data(const std::string& task, std::uint64_t seed, int examples,
                 const std::string& out_dir) {
  if (examples < 2) throw ConfigError("--examples must be >= 2");
  Dataset train, val;
  if (task == "mnist1d-synth") {
    const Dataset all = generate_synthetic_1d(seed, examples);
    std::tie(train, val) = split_dataset(all, 0.8, splitmix64(seed));
  } else if (task == "vdp") {
    VdpForecastParams params;
    params.n_samples = examples;
    VdpForecastData d = build_vdp_forecast_dataset(params, seed);
    train = std::move(d.train);
    val = std::move(d.val);
  } else {
    throw ConfigError("unknown task \"" + task + "\" (expected mnist1d-synth or vdp)");
  }
  fs::create_directories(out_dir);
  save_dataset(train, (fs::path(out_dir) / "train.dsv").string());
  save_dataset(val, (fs::path(out_dir) / "val.dsv").string());
  return kOk;
}

int cmd_diagnose(const std::string& params_path, const std::string& config_path,
                 std::optional<std::uint64_t> seed, std::optional<std::string> out_dir) {
  const ExperimentConfig config = load_experiment_config(config_path);
  auto [network, params] = load_params_file(params_path);
  const TaskData data = load_task_data(config);
  if (data.train.input_dim() != network.input_dim || data.train.output_dim() != network.output_dim) {
    throw ConfigError("params snapshot does not match the configured task dimensions");
  }
  RunRecord record;
  record.variant = fs::path(params_path).stem().string();
  record.seed = seed.value_or(config.seed);
  record.task = data.train.kind;
  record.metric = evaluate(network, params, data.val);
  compute_diagnostics(config, data, network, params, record.seed, record);
  const fs::path out = out_dir.value_or(config.output_dir);
  fs::create_directories(out);
  write_text_file(out / "diagnostics.json", run_record_json(record).dump(2) + "\n");
  std::ostringstream csv;
  write_runs_csv(std::span<const RunRecord>(&record, 1), csv);
  write_text_file(out / "diagnostics.csv", csv.str());
  std::cout << "metric " << format_double(record.metric);
  if (record.covariance) std::cout << " r " << format_double(record.covariance->normalized);
  if (record.hessian) {
    std::cout << " trH " << format_double(record.hessian->trace) << " f "
              << format_double(record.hessian->near_zero_fraction);
  }
  std::cout << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned-diversity neural networks: training, campaigns and diagnostics"};
  app.require_subcommand(1);

  std::string config_path, params_path, task;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir, variant;
  int jobs = default_jobs();
  std::size_t type_index = 0;
  std::vector<double> range{-6.0, 6.0};
  int points = 601;
  int examples = 4000;

  auto* train = app.add_subcommand("train", "Train one network and write its history");
  train->add_option("config", config_path, "Experiment config (JSON)")->required();
  train->add_option("--seed", seed, "Campaign seed override");
  train->add_option("--out", out_dir, "Output directory");
  train->add_option("--variant", variant, "Roster entry to train (default: first)");

  auto* campaign = app.add_subcommand("campaign", "Train n_seeds replicates of every variant");
  campaign->add_option("config", config_path, "Experiment config (JSON)")->required();
  campaign->add_option("--seed", seed, "Campaign seed override");
  campaign->add_option("--out", out_dir, "Output directory");
  campaign->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

  auto* sweep = app.add_subcommand("size-sweep", "Repeat the campaign at each hidden width");
  sweep->add_option("config", config_path, "Experiment config (JSON)")->required();
  sweep->add_option("--seed", seed, "Campaign seed override");
  sweep->add_option("--out", out_dir, "Output directory");
  sweep->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

  auto* exp = app.add_subcommand("export-activation", "Sample a sub-network activation to JSON");
  exp->add_option("params", params_path, "Params snapshot (JSON)")->required();
  exp->add_option("type", type_index, "Activation type index")->required();
  exp->add_option("--range", range, "Sampling interval lo hi")->expected(2);
  exp->add_option("--points", points, "Grid points");
  exp->add_option("--out", out_dir, "Output file")->required();

  auto* gen = app.add_subcommand("gen-data", "Write train/val dataset containers");
  gen->add_option("task", task, "mnist1d-synth or vdp")->required();
  std::uint64_t gen_seed = 0;
  gen->add_option("--seed", gen_seed, "Data seed");
  gen->add_option("-m,--examples", examples, "Total examples before the split");
  gen->add_option("--out", out_dir, "Output directory")->required();

  auto* diag = app.add_subcommand("diagnose", "Recompute diagnostics from a params snapshot");
  diag->add_option("params", params_path, "Params snapshot (JSON)")->required();
  diag->add_option("config", config_path, "Experiment config supplying data and diagnostics")
      ->required();
  diag->add_option("--seed", seed, "Estimator seed");
  diag->add_option("--out", out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*train) return cmd_train(config_path, seed, out_dir, variant);
    if (*campaign) return cmd_campaign(config_path, seed, out_dir, jobs);
    if (*sweep) return cmd_size_sweep(config_path, seed, out_dir, jobs);
    if (*exp) return cmd_export(params_path, type_index, range, points, *out_dir);
    if (*gen) return cmd_gen_data(task, gen_seed, examples, *out_dir);
    if (*diag) return cmd_diagnose(params_path, config_path, seed, out_dir);
  } catch (const NonFiniteError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kTrainingAbort;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
  return kConfigError;
}
