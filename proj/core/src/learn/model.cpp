#include "spigot/learn/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "spigot/learn/losses.hpp"
#include "spigot/marginals.hpp"

namespace spigot {

namespace {

using json = nlohmann::json;

std::size_t scorer_outputs(const ModelSpec& s) {
  return s.intermediate == IntermediateKind::kTree ? 1 : 1 + static_cast<std::size_t>(s.label_count);
}

std::size_t feature_dim(const ModelSpec& s) {
  const auto hd = static_cast<std::size_t>(s.end_encoder.hidden_dim);
  return 2 * hd + (s.intermediate == IntermediateKind::kGraph ? static_cast<std::size_t>(s.role_dim) : 0);
}

json encoder_to_json(const EncoderSpec& e) {
  return {{"vocab_size", e.vocab_size},
          {"embed_dim", e.embed_dim},
          {"window", e.window},
          {"hidden_dim", e.hidden_dim},
          {"activation", std::string(to_string(e.activation))}};
}

EncoderSpec encoder_from_json(const json& j) {
  EncoderSpec e;
  e.vocab_size = j.at("vocab_size").get<int>();
  e.embed_dim = j.at("embed_dim").get<int>();
  e.window = j.at("window").get<int>();
  e.hidden_dim = j.at("hidden_dim").get<int>();
  e.activation = parse_activation(j.at("activation").get<std::string>());
  return e;
}

int argmax(std::span<const double> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

IntermediateKind parse_intermediate_kind(std::string_view name) {
  if (name == "tree") return IntermediateKind::kTree;
  if (name == "graph") return IntermediateKind::kGraph;
  throw std::invalid_argument("unknown intermediate kind '" + std::string(name) + "' (expected tree|graph)");
}

std::string_view to_string(IntermediateKind k) { return k == IntermediateKind::kTree ? "tree" : "graph"; }

void ModelSpec::validate() const {
  if (vocab_size < 1) throw std::invalid_argument("ModelSpec: vocab_size must be positive");
  if (label_count < 1) throw std::invalid_argument("ModelSpec: label_count must be positive");
  if (classes < 2) throw std::invalid_argument("ModelSpec: need at least two classes");
  if (scorer_hidden < 1 || proj_dim < 1 || classifier_hidden < 1 || role_dim < 1) {
    throw std::invalid_argument("ModelSpec: layer sizes must be positive");
  }
  if (intermediate_encoder.vocab_size != vocab_size || end_encoder.vocab_size != vocab_size) {
    throw std::invalid_argument("ModelSpec: encoder vocabulary differs from vocab_size");
  }
}

PipelineModel::PipelineModel(const ModelSpec& spec)
    : spec_((spec.validate(), spec)),
      store_(),
      inter_encoder_(store_, "phi.encoder", spec.intermediate_encoder, ParamGroup::kIntermediate),
      scorer_(store_, "phi.scorer", static_cast<std::size_t>(spec.intermediate_encoder.hidden_dim),
              static_cast<std::size_t>(spec.scorer_hidden), scorer_outputs(spec), spec.scorer_activation,
              ParamGroup::kIntermediate),
      end_encoder_(store_, "theta.encoder", spec.end_encoder, ParamGroup::kEnd),
      classifier_(store_, "theta.classifier", feature_dim(spec), static_cast<std::size_t>(spec.proj_dim),
                  static_cast<std::size_t>(spec.classifier_hidden), static_cast<std::size_t>(spec.classes),
                  ParamGroup::kEnd) {
  if (spec.intermediate == IntermediateKind::kGraph) {
    roles_ = store_.add("theta.roles", static_cast<std::size_t>(spec.label_count),
                        static_cast<std::size_t>(spec.role_dim), ParamGroup::kEnd);
  }
}

ArcScores PipelineModel::tree_scores(std::span<const int> tokens) const {
  const auto idx = indexer(static_cast<int>(tokens.size()));
  const auto enc = inter_encoder_.forward(store_, tokens);
  const auto sc = scorer_.forward(store_, enc.h, idx);
  return ArcScores(idx, std::vector<double>(sc.scores.data.begin(), sc.scores.data.end()));
}

namespace {

SdpScores split_graph_scores(const LabeledArcIndexer& lidx, const Matrix& scores) {
  const std::size_t d = lidx.base().size();
  const auto labels = static_cast<std::size_t>(lidx.label_count());
  std::vector<double> u(d), l(d * labels);
  for (std::size_t k = 0; k < d; ++k) {
    u[k] = scores(k, 0);
    for (std::size_t m = 0; m < labels; ++m) l[k * labels + m] = scores(k, 1 + m);
  }
  return SdpScores(lidx, std::move(u), std::move(l));
}

Matrix join_graph_grad(const LabeledArcIndexer& lidx, std::span<const double> g) {
  const std::size_t d = lidx.base().size();
  const auto labels = static_cast<std::size_t>(lidx.label_count());
  Matrix out(d, 1 + labels);
  for (std::size_t k = 0; k < d; ++k) {
    out(k, 0) = g[k];
    for (std::size_t m = 0; m < labels; ++m) out(k, 1 + m) = g[d + k * labels + m];
  }
  return out;
}

}  // namespace

SdpScores PipelineModel::graph_scores(std::span<const int> tokens) const {
  const auto lidx = labeled_indexer(static_cast<int>(tokens.size()));
  const auto enc = inter_encoder_.forward(store_, tokens);
  const auto sc = scorer_.forward(store_, enc.h, lidx.base());
  return split_graph_scores(lidx, sc.scores);
}

IntermediateOutput PipelineModel::intermediate_forward(std::span<const int> tokens, const ProxyKind& kind) const {
  const int n = static_cast<int>(tokens.size());
  IntermediateOutput out{indexer(n), {}, std::nullopt, std::nullopt};
  if (spec_.intermediate == IntermediateKind::kTree) {
    const ArcScores s = tree_scores(tokens);
    out.tree = eisner_decode(s);
    out.z = kind.variant == ProxyVariant::kSa ? inside_outside(s).arc_marginals : encode_tree(*out.tree, out.indexer);
  } else {
    const SdpScores s = graph_scores(tokens);
    out.graph = sdp_decode(s);
    out.z = encode_graph(*out.graph, s.indexer);
  }
  return out;
}

Matrix PipelineModel::end_features(const Matrix& h, std::span<const double> z, const ArcIndexer& idx) const {
  const std::size_t d = idx.size();
  Matrix base = head_feature_concat(h, z.subspan(0, d), idx, spec_.pooling);
  if (!roles_) return base;
  const Param& roles = store_[*roles_];
  const auto labels = static_cast<std::size_t>(spec_.label_count);
  const auto rd = static_cast<std::size_t>(spec_.role_dim);
  const int n = idx.length();
  Matrix out(base.rows, base.cols + rd);
  for (std::size_t r = 0; r < base.rows; ++r) std::copy_n(base.row(r).begin(), base.cols, out.row(r).begin());
  for (int j = 1; j <= n; ++j) {
    const auto row = static_cast<std::size_t>(j - 1);
    double mass = 0.0;
    for (int i = 0; i <= n; ++i) {
      if (i == j) continue;
      const std::size_t k = idx.index(i, j);
      mass += z[k];
      for (std::size_t m = 0; m < labels; ++m) {
        const double w = z[d + k * labels + m];
        if (w == 0.0) continue;
        for (std::size_t c = 0; c < rd; ++c) out(row, base.cols + c) += w * roles.at(m, c);
      }
    }
    if (spec_.pooling == HeadPooling::kAverage && mass != 0.0) {
      for (std::size_t c = 0; c < rd; ++c) out(row, base.cols + c) /= mass;
    }
  }
  return out;
}

Matrix PipelineModel::end_features_backward(const Matrix& h, std::span<const double> z, const ArcIndexer& idx,
                                            const Matrix& grad_feats, std::vector<double>& grad_z) {
  const std::size_t d = idx.size();
  const std::size_t base_cols = 2 * h.cols;
  Matrix grad_base(grad_feats.rows, base_cols);
  for (std::size_t r = 0; r < grad_feats.rows; ++r) {
    std::copy_n(grad_feats.row(r).begin(), base_cols, grad_base.row(r).begin());
  }
  auto g = head_feature_concat_backward(h, z.subspan(0, d), idx, spec_.pooling, grad_base);
  for (std::size_t k = 0; k < d; ++k) grad_z[k] += g.grad_z[k];
  if (!roles_) return std::move(g.grad_h);

  Param& roles = store_[*roles_];
  const auto labels = static_cast<std::size_t>(spec_.label_count);
  const auto rd = static_cast<std::size_t>(spec_.role_dim);
  const int n = idx.length();
  std::vector<double> pooled(rd);
  for (int j = 1; j <= n; ++j) {
    const auto row = static_cast<std::size_t>(j - 1);
    double mass = 0.0;
    std::fill(pooled.begin(), pooled.end(), 0.0);
    for (int i = 0; i <= n; ++i) {
      if (i == j) continue;
      const std::size_t k = idx.index(i, j);
      mass += z[k];
      for (std::size_t m = 0; m < labels; ++m) {
        for (std::size_t c = 0; c < rd; ++c) pooled[c] += z[d + k * labels + m] * roles.at(m, c);
      }
    }
    const bool averaged = spec_.pooling == HeadPooling::kAverage && mass != 0.0;
    const double scale = averaged ? 1.0 / mass : 1.0;
    double g_mass = 0.0;
    for (std::size_t c = 0; c < rd; ++c) g_mass -= grad_feats(row, base_cols + c) * pooled[c] * scale * scale;
    for (int i = 0; i <= n; ++i) {
      if (i == j) continue;
      const std::size_t k = idx.index(i, j);
      if (averaged) grad_z[k] += g_mass;
      for (std::size_t m = 0; m < labels; ++m) {
        const std::size_t lk = d + k * labels + m;
        double gz = 0.0;
        for (std::size_t c = 0; c < rd; ++c) {
          const double go = grad_feats(row, base_cols + c) * scale;
          gz += go * roles.at(m, c);
          roles.grad_at(m, c) += go * z[lk];
        }
        grad_z[lk] += gz;
      }
    }
  }
  return std::move(g.grad_h);
}

Prediction PipelineModel::predict(std::span<const int> tokens, ProxyVariant variant) const {
  const ProxyKind kind(variant, 1.0);
  const IntermediateOutput io = intermediate_forward(tokens, kind);
  const auto enc = end_encoder_.forward(store_, tokens);
  const Matrix feats = end_features(enc.h, io.z.values, io.indexer);
  const auto cc = classifier_.forward(store_, feats);
  return {io.tree, io.graph, argmax(cc.log_probs)};
}

double PipelineModel::end_loss(std::span<const int> tokens, std::span<const double> z, int gold) const {
  const auto idx = indexer(static_cast<int>(tokens.size()));
  const auto enc = end_encoder_.forward(store_, tokens);
  const Matrix feats = end_features(enc.h, z, idx);
  return ClassifierHead::loss(classifier_.forward(store_, feats), gold);
}

std::vector<double> PipelineModel::end_grad_z(std::span<const int> tokens, std::span<const double> z, int gold) {
  const auto idx = indexer(static_cast<int>(tokens.size()));
  const auto enc = end_encoder_.forward(store_, tokens);
  const Matrix feats = end_features(enc.h, z, idx);
  const auto cc = classifier_.forward(store_, feats);
  const Matrix g_feats = classifier_.backward(store_, cc, feats, gold);
  std::vector<double> grad_z(z.size(), 0.0);
  end_encoder_.backward(store_, enc, end_features_backward(enc.h, z, idx, g_feats, grad_z));
  return grad_z;
}

StepResult PipelineModel::intermediate_step(const SentenceInstance& inst, bool log_loss, double cost_weight) {
  const int n = inst.length();
  const auto idx = indexer(n);
  const auto enc = inter_encoder_.forward(store_, inst.tokens);
  const auto sc = scorer_.forward(store_, enc.h, idx);
  LossGrad lg;
  Matrix grad_scores;
  if (spec_.intermediate == IntermediateKind::kTree) {
    if (!inst.gold_tree) throw std::invalid_argument("intermediate_step: instance has no gold tree");
    const ArcScores s(idx, std::vector<double>(sc.scores.data.begin(), sc.scores.data.end()));
    lg = log_loss ? log_loss_tree(s, *inst.gold_tree) : structured_hinge(s, *inst.gold_tree, cost_weight);
    grad_scores = Matrix(idx.size(), 1);
    grad_scores.data = lg.grad;
  } else {
    if (!inst.gold_graph) throw std::invalid_argument("intermediate_step: instance has no gold graph");
    const auto lidx = labeled_indexer(n);
    lg = structured_hinge(split_graph_scores(lidx, sc.scores), *inst.gold_graph, cost_weight);
    grad_scores = join_graph_grad(lidx, lg.grad);
  }
  const Matrix gh = scorer_.backward(store_, sc, enc.h, idx, grad_scores);
  inter_encoder_.backward(store_, enc, gh);
  return {lg.loss};
}

StepResult PipelineModel::end_step(const SentenceInstance& inst, const ProxyKind& kind) {
  if (!inst.end_label) throw std::invalid_argument("end_step: instance has no end label");
  const int n = inst.length();
  const auto idx = indexer(n);
  const auto ienc = inter_encoder_.forward(store_, inst.tokens);
  const auto sc = scorer_.forward(store_, ienc.h, idx);

  std::optional<TreeTape> tree_tape;
  std::optional<GraphTape> graph_tape;
  StructureVec z;
  if (spec_.intermediate == IntermediateKind::kTree) {
    auto [zz, tape] = forward(ArcScores(idx, std::vector<double>(sc.scores.data.begin(), sc.scores.data.end())), kind);
    z = std::move(zz);
    tree_tape = std::move(tape);
  } else {
    auto [zz, tape] = forward(split_graph_scores(labeled_indexer(n), sc.scores), kind);
    z = std::move(zz);
    graph_tape = std::move(tape);
  }

  const auto eenc = end_encoder_.forward(store_, inst.tokens);
  const Matrix feats = end_features(eenc.h, z.values, idx);
  const auto cc = classifier_.forward(store_, feats);
  const double loss = ClassifierHead::loss(cc, *inst.end_label);
  const Matrix g_feats = classifier_.backward(store_, cc, feats, *inst.end_label);
  std::vector<double> grad_z(z.size(), 0.0);
  const Matrix g_h = end_features_backward(eenc.h, z.values, idx, g_feats, grad_z);
  end_encoder_.backward(store_, eenc, g_h);

  if (kind.variant == ProxyVariant::kPipeline) return {loss};
  Matrix grad_scores;
  if (tree_tape) {
    grad_scores = Matrix(idx.size(), 1);
    grad_scores.data = backward(*tree_tape, grad_z);
  } else {
    grad_scores = join_graph_grad(graph_tape->scores.indexer, backward(*graph_tape, grad_z));
  }
  const Matrix gih = scorer_.backward(store_, sc, ienc.h, idx, grad_scores);
  inter_encoder_.backward(store_, ienc, gih);
  return {loss};
}

std::string PipelineModel::to_json() const {
  json j;
  j["format"] = "spigot-model";
  j["version"] = 1;
  json s;
  s["intermediate"] = std::string(to_string(spec_.intermediate));
  s["vocab_size"] = spec_.vocab_size;
  s["label_count"] = spec_.label_count;
  s["classes"] = spec_.classes;
  s["intermediate_encoder"] = encoder_to_json(spec_.intermediate_encoder);
  s["end_encoder"] = encoder_to_json(spec_.end_encoder);
  s["scorer_hidden"] = spec_.scorer_hidden;
  s["scorer_activation"] = std::string(to_string(spec_.scorer_activation));
  s["proj_dim"] = spec_.proj_dim;
  s["classifier_hidden"] = spec_.classifier_hidden;
  s["role_dim"] = spec_.role_dim;
  s["pooling"] = spec_.pooling == HeadPooling::kSum ? "sum" : "average";
  j["spec"] = s;
  j["trained_proxy"] = std::string(to_string(trained_proxy_));
  json params = json::object();
  for (const auto& p : store_.all()) params[p.name] = {{"rows", p.rows}, {"cols", p.cols}, {"values", p.value}};
  j["params"] = params;
  return j.dump();
}

PipelineModel PipelineModel::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("model file is not valid JSON: ") + e.what());
  }
  if (j.value("format", "") != "spigot-model") throw std::invalid_argument("not a spigot model file");
  try {
    const json& s = j.at("spec");
    ModelSpec spec;
    spec.intermediate = parse_intermediate_kind(s.at("intermediate").get<std::string>());
    spec.vocab_size = s.at("vocab_size").get<int>();
    spec.label_count = s.at("label_count").get<int>();
    spec.classes = s.at("classes").get<int>();
    spec.intermediate_encoder = encoder_from_json(s.at("intermediate_encoder"));
    spec.end_encoder = encoder_from_json(s.at("end_encoder"));
    spec.scorer_hidden = s.at("scorer_hidden").get<int>();
    spec.scorer_activation = parse_activation(s.at("scorer_activation").get<std::string>());
    spec.proj_dim = s.at("proj_dim").get<int>();
    spec.classifier_hidden = s.at("classifier_hidden").get<int>();
    spec.role_dim = s.at("role_dim").get<int>();
    spec.pooling = s.at("pooling").get<std::string>() == "sum" ? HeadPooling::kSum : HeadPooling::kAverage;
    PipelineModel model(spec);
    model.trained_proxy_ = parse_proxy_variant(j.value("trained_proxy", "pipeline"));
    const json& params = j.at("params");
    for (auto& p : model.store_.all()) {
      const json& e = params.at(p.name);
      if (e.at("rows").get<std::size_t>() != p.rows || e.at("cols").get<std::size_t>() != p.cols) {
        throw std::invalid_argument("parameter '" + p.name + "' has the wrong shape");
      }
      auto values = e.at("values").get<std::vector<double>>();
      if (values.size() != p.value.size()) throw std::invalid_argument("parameter '" + p.name + "' has the wrong size");
      p.value = std::move(values);
    }
    return model;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed model file: ") + e.what());
  }
}

}  // namespace spigot
