#pragma once

// Experiment orchestration: one synthetic dataset, a shared pretrained
// intermediate model per seed, and one joint-training run per (seed, proxy).

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "spigot/bench/analysis.hpp"
#include "spigot/bench/synthetic.hpp"
#include "spigot/learn/trainer.hpp"

namespace spigot {

struct ExperimentConfig {
  SyntheticTaskSpec task;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<ProxyVariant> proxies{ProxyVariant::kPipeline, ProxyVariant::kSte, ProxyVariant::kSpigot,
                                    ProxyVariant::kSa};
  std::string output_dir;
  /// When set, intermediate.jsonl, end.jsonl and eval.jsonl are read from
  /// here instead of being generated from the task keys.
  std::string data_dir;
  int threads = 1;

  /// Throws std::invalid_argument (e.g. SA with a graph intermediate task).
  void validate() const;
};

/// Accepts every task and training key plus `seeds`, `proxies`,
/// `output_dir` and `threads`. Errors carry line numbers.
ExperimentConfig parse_experiment_config(const std::string& text, const std::string& source = "<config>");

struct RunRecord {
  std::uint64_t seed = 0;
  ProxyVariant proxy = ProxyVariant::kPipeline;
  /// Metric name -> value, in a fixed order given by ExperimentResult::metric_names.
  std::map<std::string, double> metrics;
  std::vector<EpochMetrics> history;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<std::string> metric_names;
  std::vector<RunRecord> runs;  // seed-major, proxies in config order
  double corruption_rate = 0.0;
  double positive_rate = 0.0;
  double surface_baseline = 0.0;
  int label_threshold = 0;
  /// PIPELINE vs each other proxy, summed over seeds.
  std::map<std::string, AgreementReport> agreement;

  double median(ProxyVariant proxy, const std::string& metric) const;
  std::string aggregate_csv() const;
  std::string summary_csv() const;
  std::string result_json() const;
};

/// The generated task, or the files under cfg.data_dir (statistics left zero).
SyntheticData load_experiment_data(const ExperimentConfig& cfg);

using ProgressSink = std::function<void(const std::string&)>;

ExperimentResult run_experiment(const ExperimentConfig& cfg, const ProgressSink& progress = {});

/// Writes aggregate.csv, summary.csv, result.json and per-run metric logs.
void write_experiment(const ExperimentResult& result, const std::string& dir);

}  // namespace spigot
