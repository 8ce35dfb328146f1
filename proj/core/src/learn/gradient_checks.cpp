#include "spigot/learn/gradient_checks.hpp"

#include <algorithm>
#include <functional>
#include <random>
#include <stdexcept>

#include "spigot/gradcheck.hpp"
#include "spigot/learn/layers.hpp"
#include "spigot/learn/losses.hpp"
#include "spigot/learn/model.hpp"
#include "spigot/marginals.hpp"

namespace spigot {

namespace {

constexpr double kBlockTol = 1e-4;
constexpr double kMarginalTol = 1e-5;
// Gradients smaller than this are compared in absolute terms.
constexpr double kNormFloor = 1e-6;

double rel(std::span<const double> a, std::span<const double> b) { return relative_error(a, b, kNormFloor); }

struct Rng {
  std::mt19937_64 eng;

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng); }
  std::vector<double> normals(std::size_t k) {
    std::vector<double> v(k);
    for (double& x : v) x = normal();
    return v;
  }
  Matrix matrix(std::size_t r, std::size_t c) {
    Matrix m(r, c);
    m.data = normals(r * c);
    return m;
  }
  std::vector<int> tokens(int n, int vocab) {
    std::vector<int> t(static_cast<std::size_t>(n));
    for (int& x : t) x = integer(0, vocab);  // vocab itself is out of range, exercising UNK
    return t;
  }
  DepTree projective_tree(int n) {
    for (;;) {
      std::vector<int> heads(static_cast<std::size_t>(n));
      for (int j = 1; j <= n; ++j) {
        int h = integer(0, n - 1);
        if (h >= j) ++h;
        heads[static_cast<std::size_t>(j - 1)] = h;
      }
      if (tree_violation(heads).empty() && is_projective(heads)) return DepTree(std::move(heads));
    }
  }
};

double dot(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.data.size(); ++k) s += a.data[k] * b.data[k];
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

// Compares accumulated parameter gradients against central differences of
// `loss` over every entry of every parameter in `store`.
double param_error(ParamStore& store, const std::function<double()>& loss, const std::function<void()>& backward,
                   double step) {
  store.zero_grad();
  backward();
  std::vector<double> analytic;
  std::vector<double> numeric;
  for (auto& p : store.all()) {
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      analytic.push_back(p.grad[k]);
      const double orig = p.value[k];
      p.value[k] = orig + step;
      const double up = loss();
      p.value[k] = orig - step;
      const double down = loss();
      p.value[k] = orig;
      numeric.push_back((up - down) / (2.0 * step));
    }
  }
  return rel(analytic, numeric);
}

double encoder_check(Rng& rng, double step) {
  EncoderSpec spec{6, 3, rng.integer(0, 2), 4, Activation::kTanh};
  ParamStore store;
  Encoder enc(store, "enc", spec, ParamGroup::kIntermediate);
  store.glorot_init(rng.eng);
  const auto tokens = rng.tokens(rng.integer(1, 5), spec.vocab_size);
  const Matrix c = rng.matrix(tokens.size() + 1, 4);
  auto loss = [&] { return dot(enc.forward(store, tokens).h, c); };
  return param_error(store, loss, [&] { enc.backward(store, enc.forward(store, tokens), c); }, step);
}

double scorer_check(Rng& rng, double step) {
  const int n = rng.integer(1, 5);
  const ArcIndexer idx(n, true);
  const std::size_t outputs = static_cast<std::size_t>(rng.integer(1, 3));
  ParamStore store;
  ArcScorer scorer(store, "sc", 3, 4, outputs, Activation::kTanh, ParamGroup::kIntermediate);
  store.glorot_init(rng.eng);
  for (auto& p : store.all()) {
    for (double& x : p.value) x += 0.1 * rng.normal();
  }
  Matrix h = rng.matrix(static_cast<std::size_t>(n) + 1, 3);
  const Matrix c = rng.matrix(idx.size(), outputs);
  auto loss = [&] { return dot(scorer.forward(store, h, idx).scores, c); };
  const double e_params =
      param_error(store, loss, [&] { scorer.backward(store, scorer.forward(store, h, idx), h, idx, c); }, step);
  store.zero_grad();
  const Matrix gh = scorer.backward(store, scorer.forward(store, h, idx), h, idx, c);
  const auto numeric = central_difference(
      [&](std::span<const double> x) {
        Matrix hh = h;
        std::copy(x.begin(), x.end(), hh.data.begin());
        return dot(scorer.forward(store, hh, idx).scores, c);
      },
      h.data, step);
  return std::max(e_params, rel(gh.data, numeric));
}

double head_concat_check(Rng& rng, double step, HeadPooling mode) {
  const int n = rng.integer(1, 5);
  const ArcIndexer idx(n, rng.integer(0, 1) == 1 || n == 1);
  const Matrix h = rng.matrix(static_cast<std::size_t>(n) + 1, 3);
  std::vector<double> z(idx.size());
  for (double& x : z) x = rng.uniform(0.1, 1.0);
  const Matrix g = rng.matrix(static_cast<std::size_t>(n), 6);
  const auto grad = head_feature_concat_backward(h, z, idx, mode, g);
  const auto num_h = central_difference(
      [&](std::span<const double> x) {
        Matrix hh = h;
        std::copy(x.begin(), x.end(), hh.data.begin());
        return dot(head_feature_concat(hh, z, idx, mode), g);
      },
      h.data, step);
  const auto num_z = central_difference(
      [&](std::span<const double> x) { return dot(head_feature_concat(h, x, idx, mode), g); }, z, step);
  return std::max(rel(grad.grad_h.data, num_h), rel(grad.grad_z, num_z));
}

double classifier_check(Rng& rng, double step) {
  ParamStore store;
  ClassifierHead head(store, "cls", 4, 5, 5, 3, ParamGroup::kEnd);
  store.glorot_init(rng.eng);
  for (auto& p : store.all()) {
    if (p.cols == 1) {
      for (double& x : p.value) x = 0.1 * rng.normal();
    }
  }
  const Matrix x = rng.matrix(static_cast<std::size_t>(rng.integer(1, 4)), 4);
  const int gold = rng.integer(0, 2);
  auto loss = [&] { return ClassifierHead::loss(head.forward(store, x), gold); };
  const double e_params = param_error(store, loss, [&] { head.backward(store, head.forward(store, x), x, gold); }, step);
  store.zero_grad();
  const Matrix gx = head.backward(store, head.forward(store, x), x, gold);
  const auto numeric = central_difference(
      [&](std::span<const double> v) {
        Matrix xx = x;
        std::copy(v.begin(), v.end(), xx.data.begin());
        return ClassifierHead::loss(head.forward(store, xx), gold);
      },
      x.data, step);
  return std::max(e_params, rel(gx.data, numeric));
}

double sa_check(Rng& rng, double step) {
  const int n = rng.integer(1, 6);
  const ArcIndexer idx(n, true);
  const auto s = rng.normals(idx.size());
  const auto up = rng.normals(idx.size());
  const auto analytic = marginal_backward(ArcScores(idx, s), up);
  const auto numeric = central_difference(
      [&](std::span<const double> x) {
        return dot(inside_outside(ArcScores(idx, {x.begin(), x.end()})).arc_marginals.values, up);
      },
      s, step);
  return rel(analytic, numeric);
}

double log_loss_check(Rng& rng, double step) {
  const int n = rng.integer(1, 6);
  const ArcIndexer idx(n, true);
  const auto s = rng.normals(idx.size());
  const DepTree gold = rng.projective_tree(n);
  const auto analytic = log_loss_tree(ArcScores(idx, s), gold).grad;
  const auto numeric = central_difference(
      [&](std::span<const double> x) {
        const ArcScores sc(idx, {x.begin(), x.end()});
        return inside_outside(sc).log_partition - tree_score(sc, gold);
      },
      s, step);
  return rel(analytic, numeric);
}

ModelSpec small_spec(IntermediateKind kind, HeadPooling pooling) {
  ModelSpec m;
  m.intermediate = kind;
  m.vocab_size = 6;
  m.label_count = 2;
  m.classes = 3;
  m.intermediate_encoder = {6, 3, 1, 3, Activation::kTanh};
  m.end_encoder = {6, 3, 1, 3, Activation::kTanh};
  m.scorer_hidden = 3;
  m.proj_dim = 4;
  m.classifier_hidden = 4;
  m.role_dim = 2;
  m.pooling = pooling;
  return m;
}

void perturb_biases(ParamStore& store, Rng& rng) {
  for (auto& p : store.all()) {
    if (p.cols == 1) {
      for (double& x : p.value) x = 0.1 * rng.normal();
    }
  }
}

// End-model features and classifier, w.r.t. the intermediate vector z
// (graph mode exercises the role block).
double end_features_check(Rng& rng, double step) {
  const bool graph = rng.integer(0, 1) == 1;
  const auto pooling = rng.integer(0, 1) == 1 ? HeadPooling::kAverage : HeadPooling::kSum;
  PipelineModel model(small_spec(graph ? IntermediateKind::kGraph : IntermediateKind::kTree, pooling));
  model.initialize(rng.eng);
  perturb_biases(model.params(), rng);
  const int n = rng.integer(1, 4);
  const auto tokens = rng.tokens(n, 6);
  const ArcIndexer idx(n, true);
  const std::size_t dim = graph ? idx.size() * 3 : idx.size();
  std::vector<double> z(dim);
  for (double& x : z) x = rng.uniform(0.1, 1.0);
  const int gold = rng.integer(0, 2);
  const auto analytic = model.end_grad_z(tokens, z, gold);
  const auto numeric =
      central_difference([&](std::span<const double> x) { return model.end_loss(tokens, x, gold); }, z, step);
  const double e_z = rel(analytic, numeric);
  const double e_theta = param_error(
      model.params(), [&] { return model.end_loss(tokens, z, gold); }, [&] { model.end_grad_z(tokens, z, gold); },
      step);
  return std::max(e_z, e_theta);
}

// The full SA pipeline: end loss through inside-outside marginals, w.r.t.
// every parameter of both stages.
double pipeline_sa_check(Rng& rng, double step) {
  PipelineModel model(small_spec(IntermediateKind::kTree, HeadPooling::kSum));
  model.initialize(rng.eng);
  perturb_biases(model.params(), rng);
  SentenceInstance inst;
  inst.tokens = rng.tokens(rng.integer(1, 4), 6);
  inst.end_label = rng.integer(0, 2);
  const ProxyKind kind(ProxyVariant::kSa, 1.0);
  auto loss = [&] {
    const auto m = inside_outside(model.tree_scores(inst.tokens));
    return model.end_loss(inst.tokens, m.arc_marginals.values, *inst.end_label);
  };
  return param_error(model.params(), loss, [&] { model.end_step(inst, kind); }, step);
}

struct Entry {
  const char* module;
  const char* block;
  double tolerance;
  std::function<double(Rng&, double)> run;
};

const std::vector<Entry>& entries() {
  static const std::vector<Entry> all = {
      {"encoder", "encoder", kBlockTol, encoder_check},
      {"scorer", "arc_scorer", kBlockTol, scorer_check},
      {"head_concat", "head_feature_concat_sum", kBlockTol,
       [](Rng& r, double h) { return head_concat_check(r, h, HeadPooling::kSum); }},
      {"head_concat", "head_feature_concat_average", kBlockTol,
       [](Rng& r, double h) { return head_concat_check(r, h, HeadPooling::kAverage); }},
      {"classifier", "classifier_head", kBlockTol, classifier_check},
      {"end_model", "end_model_features", kBlockTol, end_features_check},
      {"sa", "marginal_backward", kMarginalTol, sa_check},
      {"sa", "sa_pipeline", kMarginalTol, pipeline_sa_check},
      {"log_loss", "log_loss_tree", kMarginalTol, log_loss_check},
  };
  return all;
}

}  // namespace

std::vector<std::string> gradient_check_modules() {
  std::vector<std::string> out{"all"};
  for (const auto& e : entries()) {
    if (std::find(out.begin(), out.end(), e.module) == out.end()) out.emplace_back(e.module);
  }
  return out;
}

std::vector<GradCheckResult> run_gradient_checks(std::string_view module, int instances, std::uint64_t seed,
                                                 double step) {
  const auto names = gradient_check_modules();
  if (std::find(names.begin(), names.end(), module) == names.end()) {
    throw std::invalid_argument("unknown gradient-check module '" + std::string(module) + "'");
  }
  std::vector<GradCheckResult> results;
  std::uint64_t salt = 0;
  for (const auto& e : entries()) {
    ++salt;
    if (module != "all" && module != e.module) continue;
    Rng rng{std::mt19937_64(seed * 1000003ULL + salt)};
    GradCheckResult r{e.block, instances, 0.0, e.tolerance};
    for (int i = 0; i < instances; ++i) r.max_rel_error = std::max(r.max_rel_error, e.run(rng, step));
    results.push_back(r);
  }
  return results;
}

}  // namespace spigot
