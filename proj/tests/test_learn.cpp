#include "doctest.h"

#include <cmath>
#include <random>
#include <set>

#include "spigot/learn/gradient_checks.hpp"
#include "spigot/learn/layers.hpp"
#include "spigot/learn/losses.hpp"
#include "spigot/learn/metrics.hpp"
#include "spigot/learn/model.hpp"
#include "spigot/learn/trainer.hpp"
#include "spigot/marginals.hpp"
#include "spigot/util/keyvalue.hpp"
#include "support/generators.hpp"

using namespace spigot;

namespace {

ModelSpec tiny_spec(IntermediateKind kind = IntermediateKind::kTree) {
  ModelSpec m;
  m.intermediate = kind;
  m.vocab_size = 8;
  m.label_count = 2;
  m.classes = 2;
  m.intermediate_encoder = {8, 4, 1, 5, Activation::kTanh};
  m.end_encoder = {8, 4, 1, 5, Activation::kTanh};
  m.scorer_hidden = 5;
  m.proj_dim = 5;
  m.classifier_hidden = 5;
  m.pooling = kind == IntermediateKind::kTree ? HeadPooling::kSum : HeadPooling::kAverage;
  return m;
}

Dataset tiny_data(int count, std::uint64_t seed, bool graphs = false) {
  testing::Gen gen(seed);
  Dataset out;
  for (int i = 0; i < count; ++i) {
    SentenceInstance inst;
    inst.id = i;
    const int n = gen.integer(2, 5);
    for (int k = 0; k < n; ++k) inst.tokens.push_back(gen.integer(0, 7));
    inst.gold_tree = gen.tree(n, true);
    if (graphs) {
      std::vector<LabeledArc> arcs;
      for (int j = 1; j <= n; ++j) arcs.push_back({inst.gold_tree->head(j), j, gen.integer(0, 1)});
      inst.gold_graph = SemGraph(n, arcs);
    }
    inst.end_label = inst.tokens[0] % 2;
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<double> all_values(const ParamStore& s, ParamGroup g) {
  std::vector<double> out;
  for (const auto& p : s.all()) {
    if (p.group == g) out.insert(out.end(), p.value.begin(), p.value.end());
  }
  return out;
}

}  // namespace

TEST_CASE("every differentiable block passes finite differences") {
  for (const auto& r : run_gradient_checks("all", 20, 11)) {
    INFO(r.block << " rel. error " << r.max_rel_error);
    CHECK(r.passed());
  }
  CHECK_THROWS_AS(run_gradient_checks("nonsense"), std::invalid_argument);
}

TEST_CASE("parameter store") {
  ParamStore s;
  const auto w = s.add("w", 2, 3, ParamGroup::kIntermediate);
  s.add("b", 2, 1, ParamGroup::kEnd);
  CHECK_THROWS_AS(s.add("w", 1, 1, ParamGroup::kEnd), std::invalid_argument);
  CHECK(s.find("b") == 1);
  CHECK_THROWS_AS(s.find("c"), std::out_of_range);
  std::mt19937_64 rng(3);
  s.glorot_init(rng);
  const double bound = std::sqrt(6.0 / 5.0);
  for (double x : s[w].value) CHECK(std::abs(x) <= bound);
  CHECK(s[1].value == std::vector<double>{0.0, 0.0});
  CHECK(s.parameter_count(ParamGroup::kIntermediate) == 6);

  for (auto& p : s.all()) std::fill(p.grad.begin(), p.grad.end(), 10.0);
  const double before = s.clip_grad_norm(5.0);
  CHECK(before == doctest::Approx(std::sqrt(800.0)));
  CHECK(s.grad_norm() <= 5.0 + 1e-9);
  s.zero_grad();
  CHECK(s.grad_norm() == 0.0);
}

TEST_CASE("optimizers skip frozen groups") {
  ParamStore s;
  s.add("a", 1, 1, ParamGroup::kIntermediate);
  s.add("b", 1, 1, ParamGroup::kEnd);
  s[0].grad[0] = 1.0;
  s[1].grad[0] = 1.0;
  for (auto kind : {OptimizerKind::kSgd, OptimizerKind::kAdam}) {
    ParamStore t = s;
    Optimizer opt(kind, 0.1);
    opt.freeze(ParamGroup::kIntermediate);
    opt.step(t);
    CHECK(t[0].value[0] == 0.0);
    CHECK(t[1].value[0] == doctest::Approx(-0.1));
  }
  CHECK_THROWS(Optimizer(OptimizerKind::kSgd, 0.0));
  CHECK(parse_optimizer("adam") == OptimizerKind::kAdam);
}

TEST_CASE("encoder locality and zero parameters") {
  ParamStore s;
  Encoder enc(s, "e", {10, 3, 0, 4, Activation::kTanh}, ParamGroup::kIntermediate);
  std::mt19937_64 rng(5);
  s.glorot_init(rng);
  const std::vector<int> a{1, 2, 3, 4};
  const std::vector<int> b{1, 7, 3, 4};
  const auto ha = enc.forward(s, a).h;
  const auto hb = enc.forward(s, b).h;
  for (std::size_t j : {0u, 1u, 3u, 4u}) {
    for (std::size_t k = 0; k < 4; ++k) CHECK(ha(j, k) == hb(j, k));
  }
  bool differs = false;
  for (std::size_t k = 0; k < 4; ++k) differs = differs || ha(2, k) != hb(2, k);
  CHECK(differs);

  // Window 1 reaches neighbours but nothing further.
  ParamStore s1;
  Encoder enc1(s1, "e", {10, 3, 1, 4, Activation::kTanh}, ParamGroup::kIntermediate);
  s1.glorot_init(rng);
  const auto h1a = enc1.forward(s1, a).h;
  const auto h1b = enc1.forward(s1, b).h;
  for (std::size_t k = 0; k < 4; ++k) CHECK(h1a(4, k) == h1b(4, k));

  ParamStore z;
  Encoder ez(z, "e", {10, 3, 1, 4, Activation::kTanh}, ParamGroup::kIntermediate);
  z[z.find("e.bias")].value = {0.1, -0.2, 0.3, 0.0};
  const auto h = ez.forward(z, a).h;
  for (std::size_t j = 0; j < h.rows; ++j) {
    CHECK(h(j, 0) == doctest::Approx(std::tanh(0.1)));
    CHECK(h(j, 1) == doctest::Approx(std::tanh(-0.2)));
  }
  // Out-of-vocabulary tokens share the UNK embedding.
  const auto c = enc.forward(s, std::vector<int>{-1, 10, 99});
  CHECK(c.ids == std::vector<int>{kRootId, kUnkId, kUnkId, kUnkId});
}

TEST_CASE("arc scorer symmetry and linear output layer") {
  ParamStore s;
  ArcScorer sc(s, "s", 3, 4, 1, Activation::kTanh, ParamGroup::kIntermediate);
  std::mt19937_64 rng(6);
  s.glorot_init(rng);
  s[s.find("s.w_mod")].value = s[s.find("s.w_head")].value;
  for (double& x : s[s.find("s.dist")].value) x = 0.0;
  Matrix h(4, 3);
  for (std::size_t j = 0; j < 4; ++j) h.row(j)[0] = 0.5, h.row(j)[1] = -1.0, h.row(j)[2] = 2.0;
  const ArcIndexer idx(3, true);
  const auto scores = sc.forward(s, h, idx).scores;
  for (double v : scores.data) CHECK(v == scores.data[0]);

  testing::Gen gen(2);
  Matrix hr(4, 3);
  hr.data = gen.normals(12);
  s[s.find("s.out_bias")].value = {0.7};
  const auto before = sc.forward(s, hr, idx).scores;
  for (auto* name : {"s.out", "s.out_bias"}) {
    for (double& x : s[s.find(name)].value) x *= 2.0;
  }
  const auto after = sc.forward(s, hr, idx).scores;
  for (std::size_t k = 0; k < before.data.size(); ++k) CHECK(after.data[k] == doctest::Approx(2.0 * before.data[k]));
}

TEST_CASE("head feature concatenation") {
  testing::Gen gen(8);
  const ArcIndexer idx(4, true);
  Matrix h(5, 3);
  h.data = gen.normals(15);
  const DepTree t({2, 0, 2, 3});
  const auto f = head_feature_concat(h, encode_tree(t, idx).values, idx, HeadPooling::kSum);
  for (int j = 1; j <= 4; ++j) {
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(f(static_cast<std::size_t>(j - 1), k) == h(static_cast<std::size_t>(j), k));
      CHECK(f(static_cast<std::size_t>(j - 1), 3 + k) == h(static_cast<std::size_t>(t.head(j)), k));
    }
  }
  for (auto mode : {HeadPooling::kSum, HeadPooling::kAverage}) {
    const auto f0 = head_feature_concat(h, std::vector<double>(idx.size(), 0.0), idx, mode);
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t k = 3; k < 6; ++k) CHECK(f0(r, k) == 0.0);
    }
  }
  // Marginals give a convex combination of the candidate heads.
  const auto m = inside_outside(gen.arc_scores(4)).arc_marginals.values;
  const auto fm = head_feature_concat(h, m, idx, HeadPooling::kSum);
  for (int j = 1; j <= 4; ++j) {
    for (std::size_t k = 0; k < 3; ++k) {
      double expect = 0.0;
      for (int i = 0; i <= 4; ++i) {
        if (i != j) expect += m[idx.index(i, j)] * h(static_cast<std::size_t>(i), k);
      }
      CHECK(fm(static_cast<std::size_t>(j - 1), 3 + k) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
  // Average mode divides by the number of active heads.
  std::vector<double> two(idx.size(), 0.0);
  two[idx.index(0, 1)] = 1.0;
  two[idx.index(2, 1)] = 1.0;
  const auto fa = head_feature_concat(h, two, idx, HeadPooling::kAverage);
  CHECK(fa(0, 3) == doctest::Approx((h(0, 0) + h(2, 0)) / 2.0));
  CHECK_THROWS_AS(head_feature_concat(h, std::vector<double>(3, 0.0), idx, HeadPooling::kSum), std::invalid_argument);
}

TEST_CASE("classifier head") {
  ParamStore s;
  ClassifierHead head(s, "c", 2, 3, 3, 2, ParamGroup::kEnd);
  Matrix x(2, 2);
  x.data = {0.3, -0.2, 1.0, 0.5};
  const auto c = head.forward(s, x);
  CHECK(std::exp(c.log_probs[0]) == doctest::Approx(0.5));
  CHECK(ClassifierHead::loss(c, 1) == doctest::Approx(std::log(2.0)));
  const auto lp = log_softmax(std::vector<double>{1.0, 2.0, 3.0});
  CHECK(std::exp(lp[0]) + std::exp(lp[1]) + std::exp(lp[2]) == doctest::Approx(1.0));
}

TEST_CASE("structured hinge loss") {
  testing::Gen gen(12);
  const ArcIndexer idx(4, true);
  const DepTree gold({2, 0, 2, 3});
  const auto zg = encode_tree(gold, idx).values;

  // Gold wins by more than any cost.
  std::vector<double> v(idx.size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = zg[k] > 0 ? 10.0 : -10.0;
  const auto easy = structured_hinge(ArcScores(idx, v), gold);
  CHECK(easy.loss == 0.0);
  for (double g : easy.grad) CHECK(g == 0.0);

  // Zero scores: loss equals the largest Hamming cost over projective trees.
  double worst = 0.0;
  for (const auto& t : enumerate_trees(4, true)) worst = std::max(worst, hamming(t, gold, idx));
  CHECK(structured_hinge(ArcScores(idx), gold).loss == worst);

  // Moving against the subgradient does not increase the loss.
  int decreased = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = gen.arc_scores(4);
    const auto lg = structured_hinge(s, gold);
    CHECK(lg.loss >= 0.0);
    if (lg.loss == 0.0) continue;
    auto moved = s.values;
    for (std::size_t k = 0; k < moved.size(); ++k) moved[k] -= 1e-3 * lg.grad[k];
    const double after = structured_hinge(ArcScores(idx, moved), gold).loss;
    CHECK(after <= lg.loss + 1e-12);
    decreased += after < lg.loss ? 1 : 0;
  }
  CHECK(decreased > 0);

  const LabeledArcIndexer lidx(idx, 2);
  const SemGraph g(4, {{0, 2, 1}, {2, 1, 0}});
  const auto gz = structured_hinge(SdpScores(lidx), g);
  // Every one of the 14 non-gold arcs with a label costs 2 parts; each gold
  // arc costs 2 whether dropped or mislabeled.
  CHECK(gz.loss == doctest::Approx(14 * 2 + 2 * 2));
  CHECK(gz.grad.size() == idx.size() * 3);
}

TEST_CASE("log loss") {
  const auto one = log_loss_tree(ArcScores(ArcIndexer(1, true), {0.7}), DepTree({0}));
  CHECK(one.loss == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(one.grad[0] == doctest::Approx(0.0));
  testing::Gen gen(13);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = gen.integer(1, 6);
    CHECK(log_loss_tree(gen.arc_scores(n, 3.0), gen.tree(n, true)).loss >= 0.0);
  }
}

TEST_CASE("metrics") {
  MetricCounts c;
  c.add_tree(DepTree({0, 1}), DepTree({0, 1}));
  c.add_tree(DepTree({2, 0}), DepTree({0, 1}));
  CHECK(c.uas() == 0.5);

  // Two sentences, one wrong head out of four.
  MetricCounts e;
  e.add_tree(DepTree({0, 1}), DepTree({0, 1}));
  e.add_tree(DepTree({0, 1}), DepTree({0, 0}));
  CHECK(e.uas() == 0.75);

  MetricCounts g;
  g.add_graph(SemGraph(3, {}), SemGraph(3, {{1, 2, 0}}));
  CHECK(g.unlabeled_f1() == 0.0);
  MetricCounts h;
  h.add_graph(SemGraph(3, {{1, 2, 0}, {2, 3, 1}}), SemGraph(3, {{1, 2, 0}, {2, 3, 0}}));
  CHECK(h.unlabeled_f1() == 1.0);
  CHECK(h.labeled_f1() == 0.5);
  h.add_label(1, 1);
  h.add_label(0, 1);
  CHECK(h.accuracy() == 0.5);
}

TEST_CASE("training is deterministic and respects freezing") {
  const Dataset inter = tiny_data(12, 1);
  const Dataset end = tiny_data(12, 2);
  TrainConfig cfg;
  cfg.model = tiny_spec();
  cfg.epochs = 3;
  cfg.seed = 9;

  auto run = [&](ProxyVariant v, const TrainConfig& c) {
    PipelineModel m(c.model);
    std::mt19937_64 rng(c.seed);
    m.initialize(rng);
    train_joint(m, inter, end, c, v);
    return m;
  };
  for (auto v : {ProxyVariant::kSpigot, ProxyVariant::kSa}) {
    const auto a = run(v, cfg);
    const auto b = run(v, cfg);
    CHECK(a.params().all().size() == b.params().all().size());
    for (std::size_t i = 0; i < a.params().all().size(); ++i) CHECK(a.params()[i].value == b.params()[i].value);
  }

  PipelineModel init(cfg.model);
  std::mt19937_64 rng(cfg.seed);
  init.initialize(rng);
  const auto phi0 = all_values(init.params(), ParamGroup::kIntermediate);
  const auto theta0 = all_values(init.params(), ParamGroup::kEnd);

  TrainConfig frozen = cfg;
  frozen.freeze_intermediate = true;
  const auto pf = run(ProxyVariant::kPipeline, frozen);
  CHECK(all_values(pf.params(), ParamGroup::kIntermediate) == phi0);
  CHECK(all_values(pf.params(), ParamGroup::kEnd) != theta0);

  TrainConfig end_only = cfg;
  end_only.alpha = 1.0;
  CHECK(all_values(run(ProxyVariant::kPipeline, end_only).params(), ParamGroup::kIntermediate) == phi0);
  CHECK(all_values(run(ProxyVariant::kSpigot, end_only).params(), ParamGroup::kIntermediate) != phi0);
}

TEST_CASE("graph pipelines train with every proxy except structured attention") {
  const Dataset inter = tiny_data(6, 3, true);
  const Dataset end = tiny_data(6, 4, true);
  TrainConfig cfg;
  cfg.model = tiny_spec(IntermediateKind::kGraph);
  cfg.epochs = 2;
  cfg.sampling = SamplingMode::kPretrainSubsample;
  cfg.pretrain_epochs = 1;
  for (auto v : {ProxyVariant::kPipeline, ProxyVariant::kSte, ProxyVariant::kSpigot}) {
    PipelineModel m(cfg.model);
    std::mt19937_64 rng(1);
    m.initialize(rng);
    std::vector<EpochMetrics> seen;
    train_joint(m, inter, end, cfg, v, &end, [&](const EpochMetrics& e) { seen.push_back(e); });
    CHECK(seen.front().task == "pretrain");
    CHECK(seen.back().task == "end");
    CHECK(seen.back().lf1.has_value());
    CHECK(seen.back().acc.has_value());
  }
  PipelineModel m(cfg.model);
  CHECK_THROWS_AS(train_joint(m, inter, end, cfg, ProxyVariant::kSa), std::invalid_argument);
}

TEST_CASE("divergence is reported") {
  const Dataset data = tiny_data(4, 5);
  TrainConfig cfg;
  cfg.model = tiny_spec();
  cfg.epochs = 1;
  PipelineModel m(cfg.model);
  auto& p = m.params()[m.params().find("theta.classifier.out_bias")];
  p.value[0] = std::nan("");
  CHECK_THROWS_AS(train_joint(m, {}, data, cfg, ProxyVariant::kSte), std::runtime_error);
}

TEST_CASE("epoch records and model files") {
  EpochMetrics e{3, "end", 0.25, 0.5, std::nullopt, 1.0};
  CHECK(e.to_json_line() == R"({"epoch":3,"task":"end","loss":0.25,"uas":0.5,"acc":1.0})");

  PipelineModel m(tiny_spec(IntermediateKind::kGraph));
  std::mt19937_64 rng(4);
  m.initialize(rng);
  const auto copy = PipelineModel::from_json(m.to_json());
  for (std::size_t i = 0; i < m.params().all().size(); ++i) CHECK(copy.params()[i].value == m.params()[i].value);
  CHECK(copy.spec().pooling == HeadPooling::kAverage);
  CHECK_THROWS_AS(PipelineModel::from_json("{"), std::invalid_argument);
  CHECK_THROWS_AS(PipelineModel::from_json(R"({"format":"other"})"), std::invalid_argument);
}

TEST_CASE("configuration files") {
  const auto cfg = parse_train_config(
      "# comment\n"
      "vocab_size = 20\n"
      "learning_rate = 0.1   # trailing\n"
      "alpha = 0.25\n"
      "sampling = pretrain_subsample\n"
      "optimizer = adam\n"
      "pooling = average\n");
  CHECK(cfg.model.vocab_size == 20);
  CHECK(cfg.model.end_encoder.vocab_size == 20);
  CHECK(cfg.learning_rate == 0.1);
  CHECK(cfg.alpha == 0.25);
  CHECK(cfg.sampling == SamplingMode::kPretrainSubsample);

  auto error_of = [](const std::string& text) {
    try {
      parse_train_config(text, "cfg");
    } catch (const std::invalid_argument& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(error_of("vocab_size = 5\nlearning_rat = 1\n").rfind("cfg:2:", 0) == 0);
  CHECK(error_of("vocab_size = 5\n\nepochs = many\n").rfind("cfg:3:", 0) == 0);
  CHECK(error_of("vocab_size = 5\nalpha = 2\n").find("alpha") != std::string::npos);
  CHECK(error_of("vocab_size = 5\nnot a pair\n").rfind("cfg:2:", 0) == 0);
  CHECK(error_of("vocab_size = 5\nvocab_size = 6\n").rfind("cfg:2:", 0) == 0);

  const KeyValue seeds{"seeds", "1..3, 7", 1};
  CHECK(kv_u64_list(seeds, "x") == std::vector<std::uint64_t>{1, 2, 3, 7});
}

TEST_CASE("arc scorer distance buckets") {
  CHECK(ArcScorer::distance_bucket(0, 3) == 0);
  CHECK(ArcScorer::distance_bucket(2, 3) == 5);
  CHECK(ArcScorer::distance_bucket(4, 3) == 6);
  CHECK(ArcScorer::distance_bucket(1, 30) == 1);
  CHECK(ArcScorer::distance_bucket(30, 1) == 10);
  std::set<std::size_t> seen;
  for (int h = 1; h <= 12; ++h) {
    for (int m = 1; m <= 12; ++m) {
      if (h != m) seen.insert(ArcScorer::distance_bucket(h, m));
    }
  }
  seen.insert(ArcScorer::distance_bucket(0, 1));
  CHECK(seen.size() == 2 * ArcScorer::kMaxDistance + 1);
}
