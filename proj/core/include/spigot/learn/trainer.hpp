#pragma once

// Joint training of a pipeline: end-task steps backpropagate through the
// structured layer with a chosen proxy, intermediate steps use direct
// supervision. Training is single-threaded and deterministic given the seed.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "spigot/learn/metrics.hpp"
#include "spigot/learn/model.hpp"
#include "spigot/learn/params.hpp"
#include "spigot/proxy.hpp"

namespace spigot {

enum class SamplingMode { kUnion, kPretrainSubsample };

SamplingMode parse_sampling_mode(std::string_view name);
std::string_view to_string(SamplingMode m);

struct TrainConfig {
  double learning_rate = 0.05;
  double anneal_factor = 0.5;
  int anneal_every = 5;
  double clip_norm = 5.0;
  int batch_size = 1;
  double tree_eta = kTreeEta;
  double graph_eta = kGraphEta;
  /// Probability that a step is an end-task step. Unset means proportional
  /// to the dataset sizes (one pass over the union per epoch).
  std::optional<double> alpha;
  SamplingMode sampling = SamplingMode::kUnion;
  double subsample_rate = 0.2;
  int pretrain_epochs = 0;
  std::uint64_t seed = 1;
  int epochs = 10;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  double cost_weight = 1.0;
  bool freeze_intermediate = false;
  ModelSpec model;

  /// Throws std::invalid_argument when any value is out of range.
  void validate() const;
  double eta_for(IntermediateKind k) const { return k == IntermediateKind::kTree ? tree_eta : graph_eta; }
};

/// One JSON-lines record: {epoch, task, loss, uas, lf1, acc}. Metrics that do
/// not apply are absent.
struct EpochMetrics {
  int epoch = 0;
  std::string task;
  double loss = 0.0;
  std::optional<double> uas;
  std::optional<double> lf1;
  std::optional<double> acc;

  std::string to_json_line() const;
};

using Dataset = std::vector<SentenceInstance>;

/// Intermediate and end metrics of a model on an evaluation split.
MetricCounts evaluate(const PipelineModel& model, const Dataset& data, ProxyVariant variant);

struct TrainResult {
  std::vector<EpochMetrics> history;
};

using MetricsSink = std::function<void(const EpochMetrics&)>;

/// Trains `model` in place. `intermediate` may be empty (latent structure
/// only); `end` must not be. When `eval` is given, per-epoch records carry
/// its metrics. Throws std::runtime_error if a loss becomes non-finite.
TrainResult train_joint(PipelineModel& model, const Dataset& intermediate, const Dataset& end,
                        const TrainConfig& cfg, ProxyVariant proxy, const Dataset* eval = nullptr,
                        const MetricsSink& sink = {});

/// Supervised intermediate training only; used for pretraining.
TrainResult train_intermediate(PipelineModel& model, const Dataset& intermediate, const TrainConfig& cfg,
                               int epochs, const Dataset* eval = nullptr, const MetricsSink& sink = {});

/// Flat key = value configuration ('#' starts a comment). Unknown keys and
/// bad values are reported with their line number.
TrainConfig parse_train_config(const std::string& text, const std::string& source = "<config>");

struct KeyValue;
/// Applies one configuration entry; returns false for keys it does not know.
bool apply_train_key(TrainConfig& cfg, const KeyValue& kv, const std::string& source);

}  // namespace spigot
