#include "spigot/learn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "spigot/util/keyvalue.hpp"

namespace spigot {

namespace {

enum class Task { kIntermediate, kEnd };

struct Item {
  Task task;
  std::size_t index;
};

class Stepper {
 public:
  Stepper(PipelineModel& model, const TrainConfig& cfg) : model_(model), cfg_(cfg), opt_(cfg.optimizer, cfg.learning_rate) {
    if (cfg.freeze_intermediate) opt_.freeze(ParamGroup::kIntermediate);
    model_.params().zero_grad();
  }

  void set_epoch_rate(int epoch) {
    const int stages = cfg_.anneal_every > 0 ? epoch / cfg_.anneal_every : 0;
    opt_.set_learning_rate(cfg_.learning_rate * std::pow(cfg_.anneal_factor, stages));
  }

  void accumulate() {
    if (++pending_ >= cfg_.batch_size) flush();
  }

  void flush() {
    if (pending_ == 0) return;
    auto& store = model_.params();
    if (pending_ > 1) store.scale_grad(1.0 / pending_);
    store.clip_grad_norm(cfg_.clip_norm);
    opt_.step(store);
    store.zero_grad();
    pending_ = 0;
  }

 private:
  PipelineModel& model_;
  const TrainConfig& cfg_;
  Optimizer opt_;
  int pending_ = 0;
};

void check_loss(double loss, int epoch, long step, Task task, const SentenceInstance& inst) {
  if (std::isfinite(loss)) return;
  std::ostringstream msg;
  msg << "training diverged: non-finite " << (task == Task::kEnd ? "end-task" : "intermediate")
      << " loss at epoch " << epoch << ", step " << step << " (instance id " << inst.id << ", length "
      << inst.length() << "); lower the learning rate or clip norm";
  throw std::runtime_error(msg.str());
}

template <typename Rng>
std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

void add_eval(EpochMetrics& m, const PipelineModel& model, const Dataset* eval, ProxyVariant variant) {
  if (eval == nullptr || eval->empty()) return;
  const MetricCounts c = evaluate(model, *eval, variant);
  if (c.heads_total > 0) m.uas = c.uas();
  if (c.arcs_gold + c.arcs_predicted > 0 && model.spec().intermediate == IntermediateKind::kGraph) {
    m.lf1 = c.labeled_f1();
  }
  if (c.labels_total > 0) m.acc = c.accuracy();
}

}  // namespace

SamplingMode parse_sampling_mode(std::string_view name) {
  if (name == "union") return SamplingMode::kUnion;
  if (name == "pretrain_subsample") return SamplingMode::kPretrainSubsample;
  throw std::invalid_argument("unknown sampling mode '" + std::string(name) +
                              "' (expected union|pretrain_subsample)");
}

std::string_view to_string(SamplingMode m) { return m == SamplingMode::kUnion ? "union" : "pretrain_subsample"; }

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string("TrainConfig: ") + name + " must be positive");
  };
  positive(learning_rate, "learning_rate");
  positive(anneal_factor, "anneal_factor");
  positive(clip_norm, "clip_norm");
  positive(tree_eta, "tree_eta");
  positive(graph_eta, "graph_eta");
  positive(subsample_rate, "subsample_rate");
  if (subsample_rate > 1.0) throw std::invalid_argument("TrainConfig: subsample_rate must be at most 1");
  if (cost_weight < 0.0) throw std::invalid_argument("TrainConfig: cost_weight must be non-negative");
  if (anneal_every < 0 || batch_size < 1 || epochs < 0 || pretrain_epochs < 0) {
    throw std::invalid_argument("TrainConfig: anneal_every, batch_size, epochs and pretrain_epochs must be non-negative");
  }
  if (alpha && (*alpha < 0.0 || *alpha > 1.0)) throw std::invalid_argument("TrainConfig: alpha must lie in [0, 1]");
  model.validate();
}

std::string EpochMetrics::to_json_line() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["task"] = task;
  j["loss"] = loss;
  if (uas) j["uas"] = *uas;
  if (lf1) j["lf1"] = *lf1;
  if (acc) j["acc"] = *acc;
  return j.dump();
}

MetricCounts evaluate(const PipelineModel& model, const Dataset& data, ProxyVariant variant) {
  MetricCounts c;
  for (const auto& inst : data) {
    const Prediction p = model.predict(inst.tokens, variant);
    if (p.tree && inst.gold_tree) c.add_tree(*p.tree, *inst.gold_tree);
    if (p.graph && inst.gold_graph) c.add_graph(*p.graph, *inst.gold_graph);
    if (inst.end_label) c.add_label(p.label, *inst.end_label);
  }
  return c;
}

TrainResult train_intermediate(PipelineModel& model, const Dataset& intermediate, const TrainConfig& cfg, int epochs,
                               const Dataset* eval, const MetricsSink& sink) {
  cfg.validate();
  TrainResult result;
  if (intermediate.empty()) return result;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  Stepper stepper(model, cfg);
  long step = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    stepper.set_epoch_rate(epoch);
    double total = 0.0;
    for (std::size_t i : permutation(intermediate.size(), rng)) {
      const auto& inst = intermediate[i];
      const double loss = model.intermediate_step(inst, false, cfg.cost_weight).loss;
      check_loss(loss, epoch, step++, Task::kIntermediate, inst);
      total += loss;
      stepper.accumulate();
    }
    stepper.flush();
    EpochMetrics m{epoch, "pretrain", total / static_cast<double>(intermediate.size()), {}, {}, {}};
    add_eval(m, model, eval, ProxyVariant::kPipeline);
    if (sink) sink(m);
    result.history.push_back(m);
  }
  return result;
}

TrainResult train_joint(PipelineModel& model, const Dataset& intermediate, const Dataset& end, const TrainConfig& cfg,
                        ProxyVariant proxy, const Dataset* eval, const MetricsSink& sink) {
  cfg.validate();
  if (end.empty()) throw std::invalid_argument("train_joint: end-task data is empty");
  if (proxy == ProxyVariant::kSa && model.spec().intermediate == IntermediateKind::kGraph) {
    throw std::invalid_argument(
        "train_joint: structured attention needs marginal inference, which is not available for semantic graphs");
  }
  TrainResult result;
  if (cfg.sampling == SamplingMode::kPretrainSubsample && cfg.pretrain_epochs > 0) {
    result = train_intermediate(model, intermediate, cfg, cfg.pretrain_epochs, eval, sink);
  }

  model.set_trained_proxy(proxy);
  const ProxyKind kind(proxy, cfg.eta_for(model.spec().intermediate));
  const bool log_loss = proxy == ProxyVariant::kSa;
  std::mt19937_64 rng(cfg.seed);
  Stepper stepper(model, cfg);
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    stepper.set_epoch_rate(epoch);
    std::vector<Item> schedule;
    if (cfg.sampling == SamplingMode::kPretrainSubsample) {
      for (std::size_t i = 0; i < end.size(); ++i) schedule.push_back({Task::kEnd, i});
      const auto take = static_cast<std::size_t>(std::llround(cfg.subsample_rate * static_cast<double>(intermediate.size())));
      const auto perm = permutation(intermediate.size(), rng);
      for (std::size_t k = 0; k < take; ++k) schedule.push_back({Task::kIntermediate, perm[k]});
      std::shuffle(schedule.begin(), schedule.end(), rng);
    } else if (!cfg.alpha) {
      for (std::size_t i = 0; i < end.size(); ++i) schedule.push_back({Task::kEnd, i});
      for (std::size_t i = 0; i < intermediate.size(); ++i) schedule.push_back({Task::kIntermediate, i});
      std::shuffle(schedule.begin(), schedule.end(), rng);
    } else {
      std::bernoulli_distribution pick_end(*cfg.alpha);
      const std::size_t total = end.size() + intermediate.size();
      for (std::size_t k = 0; k < total; ++k) {
        const bool is_end = intermediate.empty() || pick_end(rng);
        const std::size_t size = is_end ? end.size() : intermediate.size();
        std::uniform_int_distribution<std::size_t> pick(0, size - 1);
        schedule.push_back({is_end ? Task::kEnd : Task::kIntermediate, pick(rng)});
      }
    }

    double end_total = 0.0;
    double inter_total = 0.0;
    long end_steps = 0;
    long inter_steps = 0;
    for (const Item& item : schedule) {
      double loss = 0.0;
      if (item.task == Task::kEnd) {
        const auto& inst = end[item.index];
        loss = model.end_step(inst, kind).loss;
        check_loss(loss, epoch, step, item.task, inst);
        end_total += loss;
        ++end_steps;
      } else {
        const auto& inst = intermediate[item.index];
        loss = model.intermediate_step(inst, log_loss, cfg.cost_weight).loss;
        check_loss(loss, epoch, step, item.task, inst);
        inter_total += loss;
        ++inter_steps;
      }
      ++step;
      stepper.accumulate();
    }
    stepper.flush();

    if (inter_steps > 0) {
      EpochMetrics m{epoch, "intermediate", inter_total / static_cast<double>(inter_steps), {}, {}, {}};
      if (sink) sink(m);
      result.history.push_back(m);
    }
    EpochMetrics m{epoch, "end", end_steps > 0 ? end_total / static_cast<double>(end_steps) : 0.0, {}, {}, {}};
    add_eval(m, model, eval, proxy);
    if (sink) sink(m);
    result.history.push_back(m);
  }
  return result;
}

bool apply_train_key(TrainConfig& cfg, const KeyValue& kv, const std::string& source) {
  const std::string& k = kv.key;
  auto as_int = [&] { return static_cast<int>(kv_int(kv, source)); };
  auto wrap = [&](auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ConfigError(source, kv.line, e.what());
    }
  };
  auto& m = cfg.model;
  bool known = true;
  wrap([&] {
    if (k == "learning_rate") cfg.learning_rate = kv_double(kv, source);
    else if (k == "anneal_factor") cfg.anneal_factor = kv_double(kv, source);
    else if (k == "anneal_every") cfg.anneal_every = as_int();
    else if (k == "clip_norm") cfg.clip_norm = kv_double(kv, source);
    else if (k == "batch_size") cfg.batch_size = as_int();
    else if (k == "tree_eta") cfg.tree_eta = kv_double(kv, source);
    else if (k == "graph_eta") cfg.graph_eta = kv_double(kv, source);
    else if (k == "alpha") {
      if (kv.value == "proportional") cfg.alpha.reset();
      else cfg.alpha = kv_double(kv, source);
    } else if (k == "sampling") cfg.sampling = parse_sampling_mode(kv.value);
    else if (k == "subsample_rate") cfg.subsample_rate = kv_double(kv, source);
    else if (k == "pretrain_epochs") cfg.pretrain_epochs = as_int();
    else if (k == "seed") cfg.seed = kv_u64(kv, source);
    else if (k == "epochs") cfg.epochs = as_int();
    else if (k == "optimizer") cfg.optimizer = parse_optimizer(kv.value);
    else if (k == "cost_weight") cfg.cost_weight = kv_double(kv, source);
    else if (k == "freeze_intermediate") cfg.freeze_intermediate = kv_bool(kv, source);
    else if (k == "intermediate") m.intermediate = parse_intermediate_kind(kv.value);
    else if (k == "vocab_size") m.vocab_size = m.intermediate_encoder.vocab_size = m.end_encoder.vocab_size = as_int();
    else if (k == "label_count") m.label_count = as_int();
    else if (k == "classes") m.classes = as_int();
    else if (k == "embed_dim") m.intermediate_encoder.embed_dim = m.end_encoder.embed_dim = as_int();
    else if (k == "window") m.intermediate_encoder.window = m.end_encoder.window = as_int();
    else if (k == "hidden_dim") m.intermediate_encoder.hidden_dim = m.end_encoder.hidden_dim = as_int();
    else if (k == "activation") m.intermediate_encoder.activation = m.end_encoder.activation = parse_activation(kv.value);
    else if (k == "scorer_hidden") m.scorer_hidden = as_int();
    else if (k == "scorer_activation") m.scorer_activation = parse_activation(kv.value);
    else if (k == "proj_dim") m.proj_dim = as_int();
    else if (k == "classifier_hidden") m.classifier_hidden = as_int();
    else if (k == "role_dim") m.role_dim = as_int();
    else if (k == "pooling") {
      if (kv.value == "sum") m.pooling = HeadPooling::kSum;
      else if (kv.value == "average") m.pooling = HeadPooling::kAverage;
      else throw ConfigError(source, kv.line, "'pooling' expects sum|average, got '" + kv.value + "'");
    } else known = false;
  });
  return known;
}

TrainConfig parse_train_config(const std::string& text, const std::string& source) {
  TrainConfig cfg;
  for (const auto& kv : parse_key_values(text, source)) {
    if (!apply_train_key(cfg, kv, source)) throw ConfigError(source, kv.line, "unknown key '" + kv.key + "'");
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source, 0, e.what());
  }
  return cfg;
}

}  // namespace spigot
