#include "spigot/bench/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "spigot/decode.hpp"
#include "spigot/util/keyvalue.hpp"

namespace spigot {

namespace {

int token_class(int tok, int classes) { return tok % classes; }

class TrueScorer {
 public:
  TrueScorer(const SyntheticTaskSpec& spec, std::mt19937_64& rng)
      : spec_(spec),
        encoder_(store_, "teacher.encoder", {spec.vocab_size, spec.teacher_hidden, 0, spec.teacher_hidden, Activation::kTanh},
                 ParamGroup::kIntermediate),
        scorer_(store_, "teacher.scorer", static_cast<std::size_t>(spec.teacher_hidden),
                static_cast<std::size_t>(spec.teacher_hidden),
                spec.kind == IntermediateKind::kTree ? 1 : 1 + static_cast<std::size_t>(spec.label_count),
                Activation::kTanh, ParamGroup::kIntermediate) {
    store_.glorot_init(rng);
    // Non-zero biases so that the teacher is not symmetric around zero.
    std::normal_distribution<double> nd(0.0, 0.5);
    for (auto& p : store_.all()) {
      if (p.cols == 1) {
        for (double& x : p.value) x = nd(rng);
      }
    }
  }

  /// Arc scores (d x outputs) with the distance prior added to column 0.
  Matrix scores(const std::vector<int>& toks, const ArcIndexer& idx) const {
    const auto enc = encoder_.forward(store_, toks);
    Matrix s = scorer_.forward(store_, enc.h, idx).scores;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const Arc a = idx.arc(k);
      const int dist = a.head == 0 ? a.mod : std::abs(a.head - a.mod);
      for (std::size_t o = 0; o < s.cols; ++o) s(k, o) *= spec_.teacher_scale;
      s(k, 0) -= spec_.distance_weight * std::log(static_cast<double>(dist));
    }
    return s;
  }

 private:
  SyntheticTaskSpec spec_;
  ParamStore store_;
  Encoder encoder_;
  ArcScorer scorer_;
};

DepTree true_tree(const TrueScorer& ts, const std::vector<int>& toks) {
  const ArcIndexer idx(static_cast<int>(toks.size()), true);
  const Matrix s = ts.scores(toks, idx);
  return eisner_decode(ArcScores(idx, s.data));
}

SemGraph true_graph(const TrueScorer& ts, const std::vector<int>& toks, int labels) {
  const LabeledArcIndexer lidx(ArcIndexer(static_cast<int>(toks.size()), true), labels);
  const Matrix m = ts.scores(toks, lidx.base());
  SdpScores s(lidx);
  for (std::size_t k = 0; k < s.unlabeled.size(); ++k) {
    s.unlabeled[k] = m(k, 0);
    for (std::size_t l = 0; l < static_cast<std::size_t>(labels); ++l) s.labeled[k * static_cast<std::size_t>(labels) + l] = m(k, 1 + l);
  }
  return sdp_decode(s);
}

SemGraph tree_as_graph(const DepTree& t, const std::vector<int>& toks, int classes) {
  std::vector<LabeledArc> arcs;
  for (int j = 1; j <= t.length(); ++j) {
    const int h = t.head(j);
    const bool same = h != 0 && token_class(toks[static_cast<std::size_t>(h - 1)], classes) ==
                                    token_class(toks[static_cast<std::size_t>(j - 1)], classes);
    arcs.push_back({h, j, same ? 1 : 0});
  }
  return SemGraph(t.length(), std::move(arcs));
}

int corrupt_graph(SemGraph& g, double rho, std::mt19937_64& rng, long& debt) {
  const int n = g.length();
  std::vector<LabeledArc> arcs = g.arcs();
  std::bernoulli_distribution flip(rho);
  int changed = 0;
  for (std::size_t a = 0; a < arcs.size(); ++a) {
    const bool want = flip(rng);
    if (!want && debt <= 0) continue;
    std::vector<int> options;
    for (int h = 0; h <= n; ++h) {
      if (h == arcs[a].mod || h == arcs[a].head) continue;
      const bool taken = std::any_of(arcs.begin(), arcs.end(),
                                     [&](const LabeledArc& o) { return o.head == h && o.mod == arcs[a].mod; });
      if (!taken) options.push_back(h);
    }
    if (options.empty()) {
      if (want) ++debt;
      continue;
    }
    arcs[a].head = options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
    ++changed;
    if (!want) --debt;
  }
  g = SemGraph(n, std::move(arcs));
  return changed;
}

}  // namespace

EndRule parse_end_rule(std::string_view name) {
  if (name == "same_class") return EndRule::kSameClass;
  if (name == "root_children") return EndRule::kRootChildren;
  if (name == "root_class") return EndRule::kRootClass;
  throw std::invalid_argument("unknown end rule '" + std::string(name) +
                              "' (expected same_class|root_children|root_class)");
}

std::string_view to_string(EndRule r) {
  switch (r) {
    case EndRule::kSameClass:
      return "same_class";
    case EndRule::kRootChildren:
      return "root_children";
    case EndRule::kRootClass:
      return "root_class";
  }
  return "?";
}

void SyntheticTaskSpec::validate() const {
  if (vocab_size < 2) throw std::invalid_argument("task spec: vocab_size must be at least 2");
  if (min_length < 1 || max_length < min_length) throw std::invalid_argument("task spec: need 1 <= min_length <= max_length");
  if (token_classes < 2) throw std::invalid_argument("task spec: token_classes must be at least 2");
  if (label_count < 1 || teacher_hidden < 1) {
    throw std::invalid_argument("task spec: task_label_count and teacher_hidden must be positive");
  }
  if (!(teacher_scale > 0.0)) throw std::invalid_argument("task spec: teacher_scale must be positive");
  if (!(noise >= 0.0 && noise <= 1.0)) throw std::invalid_argument("task spec: noise must lie in [0, 1]");
  if (distance_weight < 0.0) throw std::invalid_argument("task spec: distance_weight must be non-negative");
  if (intermediate_size < 0 || end_size < 1 || eval_size < 1) {
    throw std::invalid_argument("task spec: split sizes must be positive (intermediate may be 0)");
  }
}

bool apply_task_key(SyntheticTaskSpec& spec, const KeyValue& kv, const std::string& source) {
  const std::string& k = kv.key;
  auto as_int = [&] { return static_cast<int>(kv_int(kv, source)); };
  try {
    if (k == "task") spec.kind = parse_intermediate_kind(kv.value);
    else if (k == "task_vocab_size") spec.vocab_size = as_int();
    else if (k == "min_length") spec.min_length = as_int();
    else if (k == "max_length") spec.max_length = as_int();
    else if (k == "token_classes") spec.token_classes = as_int();
    else if (k == "end_rule") spec.end_rule = parse_end_rule(kv.value);
    else if (k == "task_label_count") spec.label_count = as_int();
    else if (k == "teacher_hidden") spec.teacher_hidden = as_int();
    else if (k == "teacher_scale") spec.teacher_scale = kv_double(kv, source);
    else if (k == "distance_weight") spec.distance_weight = kv_double(kv, source);
    else if (k == "task_seed") spec.seed = kv_u64(kv, source);
    else if (k == "noise") spec.noise = kv_double(kv, source);
    else if (k == "intermediate_size") spec.intermediate_size = as_int();
    else if (k == "end_size") spec.end_size = as_int();
    else if (k == "eval_size") spec.eval_size = as_int();
    else return false;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source, kv.line, e.what());
  }
  return true;
}

SyntheticTaskSpec parse_task_spec(const std::string& text, const std::string& source) {
  SyntheticTaskSpec spec;
  for (const auto& kv : parse_key_values(text, source)) {
    if (!apply_task_key(spec, kv, source)) throw ConfigError(source, kv.line, "unknown key '" + kv.key + "'");
  }
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source, 0, e.what());
  }
  return spec;
}

int same_class_arcs(const SentenceInstance& inst, int token_classes) {
  auto cls = [&](int node) { return token_class(inst.tokens[static_cast<std::size_t>(node - 1)], token_classes); };
  int count = 0;
  if (inst.gold_graph) {
    for (const auto& a : inst.gold_graph->arcs()) count += a.head != 0 && cls(a.head) == cls(a.mod) ? 1 : 0;
  } else if (inst.gold_tree) {
    for (int j = 1; j <= inst.length(); ++j) {
      const int h = inst.gold_tree->head(j);
      count += h != 0 && cls(h) == cls(j) ? 1 : 0;
    }
  }
  return count;
}

int corrupt_tree(std::vector<int>& heads, double rho, std::mt19937_64& rng, long& debt) {
  const int n = static_cast<int>(heads.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) order[static_cast<std::size_t>(j)] = j + 1;
  std::shuffle(order.begin(), order.end(), rng);
  std::bernoulli_distribution flip(rho);
  int changed = 0;
  for (int j : order) {
    const bool want = flip(rng);
    if (!want && debt <= 0) continue;
    auto& slot = heads[static_cast<std::size_t>(j - 1)];
    const int current = slot;
    std::vector<int> options;
    for (int h = 0; h <= n; ++h) {
      if (h == j || h == current) continue;
      slot = h;
      if (tree_violation(heads).empty() && is_projective(heads)) options.push_back(h);
    }
    slot = current;
    if (options.empty()) {
      if (want) ++debt;
      continue;
    }
    slot = options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
    ++changed;
    if (!want) --debt;
  }
  return changed;
}

int root_children(const SentenceInstance& inst, int token_classes, int cls) {
  auto counts = [&](int mod) {
    return cls < 0 || token_class(inst.tokens[static_cast<std::size_t>(mod - 1)], token_classes) == cls;
  };
  int count = 0;
  if (inst.gold_graph) {
    for (const auto& a : inst.gold_graph->arcs()) count += a.head == 0 && counts(a.mod) ? 1 : 0;
  } else if (inst.gold_tree) {
    for (int j = 1; j <= inst.length(); ++j) count += inst.gold_tree->head(j) == 0 && counts(j) ? 1 : 0;
  }
  return count;
}

int end_rule_count(const SentenceInstance& inst, const SyntheticTaskSpec& spec) {
  switch (spec.end_rule) {
    case EndRule::kSameClass:
      return same_class_arcs(inst, spec.token_classes);
    case EndRule::kRootChildren:
      return root_children(inst);
    case EndRule::kRootClass:
      return root_children(inst, spec.token_classes, 0);
  }
  return 0;
}

SyntheticData generate_dataset(const SyntheticTaskSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const TrueScorer scorer(spec, rng);
  std::uniform_int_distribution<int> length(spec.min_length, spec.max_length);
  std::uniform_int_distribution<int> token(0, spec.vocab_size - 1);

  const int total = spec.intermediate_size + spec.end_size + spec.eval_size;
  Dataset all;
  all.reserve(static_cast<std::size_t>(total));
  std::vector<int> counts;
  for (int id = 0; id < total; ++id) {
    SentenceInstance inst;
    inst.id = id;
    const int n = length(rng);
    for (int k = 0; k < n; ++k) inst.tokens.push_back(token(rng));
    if (spec.kind == IntermediateKind::kTree) {
      inst.gold_tree = true_tree(scorer, inst.tokens);
    } else {
      inst.gold_graph = true_graph(scorer, inst.tokens, spec.label_count);
    }
    counts.push_back(end_rule_count(inst, spec));
    all.push_back(std::move(inst));
  }

  // Threshold giving the most balanced binary label.
  SyntheticData out;
  out.spec = spec;
  const int max_count = *std::max_element(counts.begin(), counts.end());
  double best_gap = 2.0;
  for (int t = 1; t <= max_count + 1; ++t) {
    const auto pos = std::count_if(counts.begin(), counts.end(), [&](int c) { return c >= t; });
    const double gap = std::abs(static_cast<double>(pos) / total - 0.5);
    if (gap < best_gap) {
      best_gap = gap;
      out.label_threshold = t;
    }
  }
  long positives = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    all[i].end_label = counts[i] >= out.label_threshold ? 1 : 0;
    positives += *all[i].end_label;
  }
  out.positive_rate = static_cast<double>(positives) / total;

  long debt = 0;
  std::mt19937_64 noise_rng(spec.seed ^ 0x6a09e667f3bcc909ULL);
  for (int id = 0; id < total; ++id) {
    SentenceInstance inst = all[static_cast<std::size_t>(id)];
    if (id < spec.intermediate_size) {
      out.intermediate_truth.push_back(inst);
      inst.end_label.reset();
      if (inst.gold_tree) {
        auto heads = inst.gold_tree->heads();
        out.corrupted_parts += corrupt_tree(heads, spec.noise, noise_rng, debt);
        out.total_parts += static_cast<long>(heads.size());
        inst.gold_tree = DepTree(std::move(heads));
      } else {
        SemGraph g = *inst.gold_graph;
        out.total_parts += static_cast<long>(g.arcs().size());
        out.corrupted_parts += corrupt_graph(g, spec.noise, noise_rng, debt);
        inst.gold_graph = std::move(g);
      }
      out.intermediate.push_back(std::move(inst));
    } else if (id < spec.intermediate_size + spec.end_size) {
      inst.gold_tree.reset();
      inst.gold_graph.reset();
      out.end.push_back(std::move(inst));
    } else {
      if (inst.gold_tree) inst.gold_graph = tree_as_graph(*inst.gold_tree, inst.tokens, spec.token_classes);
      out.eval.push_back(std::move(inst));
    }
  }

  // Surface baseline: majority label per token-class histogram.
  auto histogram = [&](const SentenceInstance& inst) {
    std::vector<int> h(static_cast<std::size_t>(spec.token_classes), 0);
    for (int t : inst.tokens) ++h[static_cast<std::size_t>(token_class(t, spec.token_classes))];
    return h;
  };
  std::map<std::vector<int>, std::pair<int, int>> votes;
  int global_pos = 0;
  for (const auto& inst : out.end) {
    auto& v = votes[histogram(inst)];
    (*inst.end_label == 1 ? v.second : v.first) += 1;
    global_pos += *inst.end_label;
  }
  const int global = 2 * global_pos >= static_cast<int>(out.end.size()) ? 1 : 0;
  int correct = 0;
  for (const auto& inst : out.eval) {
    const auto it = votes.find(histogram(inst));
    int guess = global;
    if (it != votes.end() && it->second.first != it->second.second) guess = it->second.second > it->second.first ? 1 : 0;
    correct += guess == *inst.end_label ? 1 : 0;
  }
  out.surface_baseline = static_cast<double>(correct) / static_cast<double>(out.eval.size());
  return out;
}

ModelSpec default_model_for(const SyntheticTaskSpec& spec) {
  ModelSpec m;
  m.intermediate = spec.kind;
  m.vocab_size = spec.vocab_size;
  m.label_count = spec.kind == IntermediateKind::kGraph ? spec.label_count : 1;
  m.classes = 2;
  m.intermediate_encoder = {spec.vocab_size, 16, 0, 16, Activation::kTanh};
  m.end_encoder = {spec.vocab_size, 16, 0, 16, Activation::kTanh};
  m.scorer_hidden = 16;
  m.proj_dim = 16;
  m.classifier_hidden = 16;
  m.role_dim = 4;
  m.pooling = spec.kind == IntermediateKind::kTree ? HeadPooling::kSum : HeadPooling::kAverage;
  return m;
}

}  // namespace spigot
