#include "doctest.h"

#include <cmath>

#include "spigot/gradcheck.hpp"
#include "spigot/marginals.hpp"
#include "spigot/project.hpp"
#include "spigot/proxy.hpp"
#include "support/generators.hpp"

using namespace spigot;

TEST_CASE("proxy kinds") {
  CHECK_THROWS_AS(ProxyKind(ProxyVariant::kSpigot, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(ProxyKind(ProxyVariant::kSpigot, std::nan("")), std::invalid_argument);
  CHECK(parse_proxy_variant("spigot") == ProxyVariant::kSpigot);
  CHECK(to_string(ProxyVariant::kSa) == "sa");
  CHECK_THROWS(parse_proxy_variant("spigt"));
  CHECK(kGraphEta == 5.0 / 32.0);
}

TEST_CASE("forward pass") {
  testing::Gen gen(1);
  const auto s = gen.arc_scores(5);
  const auto [z_sp, t1] = forward(s, {ProxyVariant::kSpigot, 1.0});
  const auto [z_ste, t2] = forward(s, {ProxyVariant::kSte, 1.0});
  const auto [z_pipe, t3] = forward(s, {ProxyVariant::kPipeline, 1.0});
  CHECK(z_sp.values == z_ste.values);
  CHECK(z_sp.values == z_pipe.values);
  CHECK(z_sp.kind == StructureKind::kVertex);
  CHECK(z_sp.well_formed());

  const auto [z_sa, t4] = forward(ArcScores(ArcIndexer(1, true), {0.3}), {ProxyVariant::kSa, 1.0});
  CHECK(z_sa.values == std::vector<double>{1.0});
  CHECK(z_sa.kind == StructureKind::kRelaxed);

  const LabeledArcIndexer lidx(ArcIndexer(3, false), 2);
  CHECK_THROWS_AS(forward(SdpScores(lidx), {ProxyVariant::kSa, 1.0}), std::invalid_argument);
}

TEST_CASE("backward rules") {
  testing::Gen gen(2);
  const auto s = gen.arc_scores(4);
  const auto g = gen.normals(s.values.size());

  SUBCASE("pipeline passes nothing") {
    const auto [z, tape] = forward(s, {ProxyVariant::kPipeline, 1.0});
    for (double x : backward(tape, g)) CHECK(x == 0.0);
  }
  SUBCASE("ste is the identity") {
    const auto [z, tape] = forward(s, {ProxyVariant::kSte, 1.0});
    CHECK(backward(tape, g) == g);
  }
  SUBCASE("spigot with zero upstream gradient is a fixed point") {
    const auto [z, tape] = forward(s, {ProxyVariant::kSpigot, 1.0});
    const std::vector<double> zero(g.size(), 0.0);
    for (double x : backward(tape, zero)) CHECK(x == 0.0);
  }
  SUBCASE("NaN gradients fail loudly") {
    const auto [z, tape] = forward(s, {ProxyVariant::kSpigot, 1.0});
    auto bad = g;
    bad[1] = std::nan("");
    CHECK_THROWS_AS(backward(tape, bad), std::invalid_argument);
  }
  SUBCASE("dimension mismatch") {
    const auto [z, tape] = forward(s, {ProxyVariant::kSte, 1.0});
    CHECK_THROWS(backward(tape, std::vector<double>(3, 0.0)));
  }
}

TEST_CASE("spigot interior case equals eta times ste") {
  testing::Gen gen(3);
  int interior = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = gen.integer(1, 6);
    const auto s = gen.arc_scores(n);
    const double eta = gen.uniform(0.1, 2.0);
    const auto [z, tape] = forward(s, {ProxyVariant::kSpigot, eta});
    // Mass moved within each modifier's block from the chosen head to the
    // others keeps p_hat inside the polytope when small enough.
    std::vector<double> g(z.size(), 0.0);
    for (int j = 1; j <= n; ++j) {
      const std::size_t b = s.indexer.block_begin(j);
      const auto w = static_cast<std::size_t>(s.indexer.heads_per_mod());
      if (w < 2) continue;
      const double delta = gen.uniform(0.0, 0.5 / eta);
      for (std::size_t r = 0; r < w; ++r) {
        g[b + r] = z.values[b + r] == 1.0 ? delta : -delta / static_cast<double>(w - 1);
      }
    }
    const auto step = spigot_step(tape, g);
    REQUIRE(feasibility_check(step.p_hat, dep_polytope(s.indexer), 1e-12).feasible);
    ++interior;
    const auto [z2, ste_tape] = forward(s, {ProxyVariant::kSte, 1.0});
    const auto ste = backward(ste_tape, g);
    for (std::size_t k = 0; k < g.size(); ++k) CHECK(std::abs(step.grad_s[k] - eta * ste[k]) <= 1e-12);
  }
  CHECK(interior == 200);
}

TEST_CASE("spigot boundary case matches the QP oracle") {
  const ArcIndexer idx(2, true);
  // Scores favour heads [0, 1].
  ArcScores s(idx, std::vector<double>(idx.size(), 0.0));
  s.values[idx.index(0, 1)] = 1.0;
  s.values[idx.index(1, 2)] = 1.0;
  const auto [z, tape] = forward(s, {ProxyVariant::kSpigot, 1.0});
  REQUIRE(decode_tree(z, idx) == DepTree({0, 1}));
  // Negative gradient on the chosen arc pushes its coordinate above 1.
  std::vector<double> g(idx.size(), 0.0);
  g[idx.index(0, 1)] = -0.8;
  g[idx.index(2, 1)] = 0.3;
  g[idx.index(0, 2)] = -0.5;
  const auto step = spigot_step(tape, g);
  CHECK(step.p_hat[idx.index(0, 1)] > 1.0);
  const auto oracle = generic_qp_oracle(step.p_hat, dep_polytope(idx)).x;
  for (std::size_t k = 0; k < g.size(); ++k) {
    CHECK(std::abs(step.grad_s[k] - (z.values[k] - oracle[k])) <= 1e-8);
  }
  // The component along the violated face is removed: modifier 1's block is
  // already at the vertex and cannot move further.
  CHECK(std::abs(step.grad_s[idx.index(0, 1)]) <= 1e-12);
  CHECK(std::abs(step.grad_s[idx.index(2, 1)]) <= 1e-12);
  CHECK(std::abs(step.grad_s[idx.index(0, 2)]) > 0.0);
}

TEST_CASE("spigot gradient is bounded by eta * ||grad_z|| and z_tilde is feasible") {
  testing::Gen gen(4);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = gen.integer(1, 8);
    const auto s = gen.arc_scores(n);
    const double eta = gen.uniform(0.05, 3.0);
    const auto [z, tape] = forward(s, {ProxyVariant::kSpigot, eta});
    const auto g = gen.normals(z.size(), gen.uniform(0.01, 3.0));
    const auto step = spigot_step(tape, g);
    double gs = 0.0;
    double gz = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
      gs += step.grad_s[k] * step.grad_s[k];
      gz += g[k] * g[k];
    }
    CHECK(std::sqrt(gs) <= eta * std::sqrt(gz) + 1e-12);
    CHECK(feasibility_check(step.z_tilde, dep_polytope(s.indexer)).feasible);
  }
}

TEST_CASE("graph layer spigot") {
  testing::Gen gen(5);
  const LabeledArcIndexer lidx(ArcIndexer(3, false), 2);
  for (int trial = 0; trial < 50; ++trial) {
    SdpScores s(lidx, gen.normals(lidx.base().size()), gen.normals(lidx.size()));
    const auto [z, tape] = forward(s, {ProxyVariant::kSpigot, kGraphEta});
    CHECK(z.well_formed());
    const auto g = gen.normals(z.size());
    const auto step = spigot_step(tape, g);
    const auto oracle = generic_qp_oracle(step.p_hat, sdp_polytope(lidx)).x;
    for (std::size_t k = 0; k < g.size(); ++k) CHECK(std::abs(step.grad_s[k] - (z.values[k] - oracle[k])) <= 1e-8);
    const auto [z2, ste] = forward(s, {ProxyVariant::kSte, 1.0});
    CHECK(backward(ste, g) == g);
  }
}

TEST_CASE("sa backward matches finite differences of the forward") {
  testing::Gen gen(6);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = gen.integer(2, 6);
    const auto s = gen.arc_scores(n);
    const auto g = gen.normals(s.values.size());
    const auto [z, tape] = forward(s, {ProxyVariant::kSa, 1.0});
    const auto fd = central_difference(
        [&](std::span<const double> x) {
          const auto zz = forward(ArcScores(s.indexer, {x.begin(), x.end()}), {ProxyVariant::kSa, 1.0}).first;
          double acc = 0.0;
          for (std::size_t k = 0; k < g.size(); ++k) acc += g[k] * zz.values[k];
          return acc;
        },
        s.values);
    CHECK(relative_error(backward(tape, g), fd) <= 1e-5);
  }
}
