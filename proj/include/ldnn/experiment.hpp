#pragma once

// Experiment driver: JSON configuration, per-run seed derivation, single runs
// with diagnostics, and multi-seed campaigns over a roster of variants.

#include "ldnn/diagnostics.hpp"
#include "ldnn/metalearn.hpp"
#include "ldnn/nn.hpp"
#include "ldnn/tasks.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace ldnn {

enum class TaskName { Mnist1d, Vdp };

std::string to_string(TaskName task);

struct DataSpec {
  // Synthetic digits (generated, then split) unless both paths are set.
  int examples = 4000;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  Synthetic1dParams synthetic;
  VdpForecastParams vdp;
  std::optional<std::string> train_path;
  std::optional<std::string> val_path;
  // Classification inputs shifted and scaled per feature by train-split
  // statistics (regression data is standardized at construction).
  bool standardize = false;
};

// Type k of the named variant's trained network, sampled and frozen.
struct LearnedRef {
  std::string variant;
  std::size_t type = 0;
};

using TypeDescriptor = std::variant<ActivationSpec, LearnedRef>;

struct VariantSpec {
  std::string name;
  std::vector<TypeDescriptor> types;
  // Contiguous block sizes per type; interleaved assignment when empty.
  std::vector<int> split;
  nlohmann::json descriptor;  // as written in the config, for fingerprints

  bool has_learned() const;
};

enum class HessianMode { None, Estimate, Exact };

struct DiagnosticsSpec {
  bool participation = true;
  HessianMode hessian = HessianMode::None;
  int hessian_samples = 1000;  // leading training examples used for H
  Eigen::Index exact_cap = 6000;
  HessianEstimateOptions estimate;
};

struct ExportSpec {
  double lo = -6.0;
  double hi = 6.0;
  int points = 601;
};

struct ExperimentConfig {
  TaskName task = TaskName::Mnist1d;
  DataSpec data;
  std::vector<int> hidden_widths{100};
  std::vector<VariantSpec> variants;
  TrainSchedule schedule;
  int n_seeds = 1;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::vector<int> sizes;
  DiagnosticsSpec diagnostics;
  ExportSpec learned_export;
  bool save_params = false;

  void validate() const;
  const VariantSpec& variant(const std::string& name) const;
};

// Relative file paths inside the config resolve against `base_dir`.
ExperimentConfig parse_experiment_config(const nlohmann::json& j,
                                         const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::string& path);

struct TaskData {
  Dataset train;
  Dataset val;
};

TaskData load_task_data(const ExperimentConfig& config);

// run_seed = splitmix64(splitmix64(campaign_seed ^ fnv1a(variant)) + replicate).
std::uint64_t run_seed(std::uint64_t campaign_seed, const std::string& variant, int replicate);

// Stable hex digest of a variant's definition at one width.
std::string variant_fingerprint(const ExperimentConfig& config, const VariantSpec& variant,
                                const std::vector<int>& widths);

// Learned references must already be resolved to tabulated activations.
NetworkConfig build_network(const ExperimentConfig& config, const TaskData& data,
                            const VariantSpec& variant, const std::vector<int>& widths,
                            const std::vector<ActivationSpec>& types);

struct RunOutput {
  RunRecord record;
  NetworkConfig network;
  std::optional<TrainResult> trained;  // absent when the run failed
};

// Trains one replicate and computes its diagnostics. Training failures are
// recorded in the result rather than thrown.
RunOutput execute_run(const ExperimentConfig& config, const TaskData& data,
                      const VariantSpec& variant, const std::vector<int>& widths, int replicate,
                      const std::vector<ActivationSpec>& types);

// Diagnostics of a trained network on the configured data.
void compute_diagnostics(const ExperimentConfig& config, const TaskData& data,
                         const NetworkConfig& network, const ParamSet& params,
                         std::uint64_t seed, RunRecord& record);

struct CampaignResult {
  std::vector<RunRecord> records;  // roster order, then replicate
  AggregateTable table;

  // Variants whose every run failed.
  std::vector<std::string> empty_variants() const;
};

// Runs n_seeds replicates of every variant on `jobs` workers. Variants with
// learned types run after the variants they reference. When `params_dir` is
// set, each successful run's parameters land there.
CampaignResult run_campaign(const ExperimentConfig& config, const TaskData& data,
                            const std::vector<int>& widths, int jobs,
                            const std::filesystem::path& params_dir = {});

nlohmann::json schedule_to_json(const TrainSchedule& schedule);
nlohmann::json run_record_json(const RunRecord& record);

void write_campaign(const CampaignResult& result, const std::filesystem::path& dir);

void save_params_file(const std::filesystem::path& path, const NetworkConfig& network,
                      const ParamSet& params, const nlohmann::json& provenance = nlohmann::json::object());
std::pair<NetworkConfig, ParamSet> load_params_file(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace ldnn
