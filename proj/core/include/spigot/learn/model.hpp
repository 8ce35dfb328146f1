#pragma once

// A two-stage pipeline: an intermediate structured model (encoder + arc
// scorer, parameters phi) whose decoded output feeds an end-task classifier
// (encoder + head features + classifier, parameters theta).

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spigot/decode.hpp"
#include "spigot/learn/layers.hpp"
#include "spigot/learn/params.hpp"
#include "spigot/proxy.hpp"
#include "spigot/structures.hpp"

namespace spigot {

enum class IntermediateKind { kTree, kGraph };

IntermediateKind parse_intermediate_kind(std::string_view name);
std::string_view to_string(IntermediateKind k);

struct ModelSpec {
  IntermediateKind intermediate = IntermediateKind::kTree;
  int vocab_size = 0;
  int label_count = 1;  // semantic roles, graph mode only
  int classes = 2;
  EncoderSpec intermediate_encoder;
  EncoderSpec end_encoder;
  int scorer_hidden = 16;
  Activation scorer_activation = Activation::kTanh;
  int proj_dim = 16;
  int classifier_hidden = 16;
  int role_dim = 4;  // graph mode only
  HeadPooling pooling = HeadPooling::kSum;

  /// Throws std::invalid_argument on nonsensical sizes.
  void validate() const;
};

/// The intermediate decision handed to the end model for one sentence.
struct IntermediateOutput {
  ArcIndexer indexer;
  StructureVec z;                  // tree parts, or [unlabeled ; labeled] graph parts
  std::optional<DepTree> tree;     // decoded tree (tree mode)
  std::optional<SemGraph> graph;   // decoded graph (graph mode)
};

struct Prediction {
  std::optional<DepTree> tree;
  std::optional<SemGraph> graph;
  int label = 0;
};

struct StepResult {
  double loss = 0.0;
};

class PipelineModel {
 public:
  explicit PipelineModel(const ModelSpec& spec);

  PipelineModel(const PipelineModel&) = default;
  PipelineModel& operator=(const PipelineModel&) = default;

  const ModelSpec& spec() const { return spec_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  void initialize(std::mt19937_64& rng) { store_.glorot_init(rng); }

  /// The proxy the model was trained with; decides whether prediction feeds
  /// marginals (SA) or decoded structures to the end model.
  ProxyVariant trained_proxy() const { return trained_proxy_; }
  void set_trained_proxy(ProxyVariant v) { trained_proxy_ = v; }

  ArcIndexer indexer(int n) const { return build_arc_indexer(n, true); }
  LabeledArcIndexer labeled_indexer(int n) const { return {indexer(n), spec_.label_count}; }

  ArcScores tree_scores(std::span<const int> tokens) const;
  SdpScores graph_scores(std::span<const int> tokens) const;

  /// Decoded intermediate structure (graph or tree by mode).
  Prediction predict(std::span<const int> tokens, ProxyVariant variant) const;

  /// Supervised intermediate step: accumulates phi gradients, returns the loss.
  /// Trees use hinge loss, or log-loss when `log_loss` is set.
  StepResult intermediate_step(const SentenceInstance& inst, bool log_loss, double cost_weight);

  /// End-task step through the structured layer: accumulates theta gradients
  /// and, unless the proxy is PIPELINE, the proxy gradient into phi.
  StepResult end_step(const SentenceInstance& inst, const ProxyKind& kind);

  /// End-task loss for a given intermediate vector z (tree parts or
  /// [unlabeled ; labeled] graph parts).
  double end_loss(std::span<const int> tokens, std::span<const double> z, int gold) const;
  /// Gradient of end_loss w.r.t. z; also accumulates theta gradients.
  std::vector<double> end_grad_z(std::span<const int> tokens, std::span<const double> z, int gold);

  std::string to_json() const;
  static PipelineModel from_json(const std::string& text);

 private:
  IntermediateOutput intermediate_forward(std::span<const int> tokens, const ProxyKind& kind) const;
  Matrix end_features(const Matrix& h, std::span<const double> z, const ArcIndexer& idx) const;
  /// Backward of end_features; returns grad w.r.t. h and adds grad w.r.t. z.
  Matrix end_features_backward(const Matrix& h, std::span<const double> z, const ArcIndexer& idx,
                               const Matrix& grad_feats, std::vector<double>& grad_z);

  ModelSpec spec_;
  ParamStore store_;
  Encoder inter_encoder_;
  ArcScorer scorer_;
  Encoder end_encoder_;
  ClassifierHead classifier_;
  std::optional<ParamId> roles_;
  ProxyVariant trained_proxy_ = ProxyVariant::kPipeline;
};

}  // namespace spigot
