#include "doctest.h"

#include <cmath>
#include <numeric>

#include "spigot/project.hpp"
#include "support/generators.hpp"

using namespace spigot;

namespace {

// Enumerates which coordinates sit at 0, at the upper bound, or strictly in
// between, and returns the unique candidate satisfying the KKT conditions.
std::vector<double> active_set_simplex_oracle(const std::vector<double>& v, double mass, double upper) {
  const std::size_t k = v.size();
  std::size_t total = 1;
  for (std::size_t i = 0; i < k; ++i) total *= 3;
  for (std::size_t code = 0; code < total; ++code) {
    std::vector<int> state(k);
    std::size_t c = code;
    double free_sum = 0.0;
    std::size_t free_count = 0;
    std::size_t upper_count = 0;
    for (std::size_t i = 0; i < k; ++i) {
      state[i] = static_cast<int>(c % 3);
      c /= 3;
      if (state[i] == 1) {
        free_sum += v[i];
        ++free_count;
      } else if (state[i] == 2) {
        ++upper_count;
      }
    }
    if (free_count == 0) continue;
    const double tau = (free_sum + static_cast<double>(upper_count) * upper - mass) / static_cast<double>(free_count);
    bool ok = true;
    std::vector<double> p(k);
    for (std::size_t i = 0; i < k && ok; ++i) {
      const double x = v[i] - tau;
      if (state[i] == 0) {
        ok = x <= 1e-12;
        p[i] = 0.0;
      } else if (state[i] == 2) {
        ok = x >= upper - 1e-12;
        p[i] = upper;
      } else {
        ok = x >= -1e-12 && x <= upper + 1e-12;
        p[i] = x;
      }
    }
    if (ok) return p;
  }
  return {};
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

TEST_CASE("project_simplex examples") {
  auto p = project_simplex({{0.3, 0.3}});
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[1] == doctest::Approx(0.5));

  p = project_simplex({{2.0, 0.0, 0.0}});
  CHECK(p == std::vector<double>{1.0, 0.0, 0.0});

  const std::vector<double> v{0.5, 0.2, -0.1};
  const auto oracle = active_set_simplex_oracle(v, 1.0, 1.0);
  REQUIRE(oracle.size() == 3);
  CHECK(oracle[0] == doctest::Approx(19.0 / 30.0).epsilon(1e-12));
  CHECK(oracle[1] == doctest::Approx(10.0 / 30.0).epsilon(1e-12));
  CHECK(oracle[2] == doctest::Approx(1.0 / 30.0).epsilon(1e-12));
  p = project_simplex({v});
  CHECK(testing::max_abs_diff(p, {19.0 / 30.0, 10.0 / 30.0, 1.0 / 30.0}) < 1e-12);
}

TEST_CASE("project_simplex edge cases") {
  CHECK(project_simplex({{-3.7}}) == std::vector<double>{1.0});
  CHECK_THROWS_AS(project_simplex({{0.1, 0.2}, 3.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(project_simplex({{0.1}, 0.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(project_simplex({{std::nan("")}}), std::invalid_argument);
  // Mass equal to k * upper pins every coordinate at the bound.
  CHECK(project_simplex({{0.1, -4.0}, 2.0, 1.0}) == std::vector<double>{1.0, 1.0});
  // Upper bounds are enforced inside the projection, not by clipping.
  const auto p = project_simplex({{5.0, 5.0, 0.0}, 1.5, 1.0});
  CHECK(p[0] == doctest::Approx(0.75));
  CHECK(p[1] == doctest::Approx(0.75));
  CHECK(p[2] == doctest::Approx(0.0));
}

TEST_CASE("project_simplex agrees with active-set enumeration and the generic oracle") {
  testing::Gen gen(101);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t k = static_cast<std::size_t>(gen.integer(1, 7));
    const double upper = gen.uniform(0.3, 1.5);
    const double mass = gen.uniform(0.1, static_cast<double>(k) * upper);
    const auto v = gen.normals(k, 1.5);
    const auto p = project_simplex({v, mass, upper});
    const auto oracle = active_set_simplex_oracle(v, mass, upper);
    REQUIRE(oracle.size() == k);
    CHECK(testing::max_abs_diff(p, oracle) < 1e-10);
    CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - mass) < 1e-10);
    // The generic oracle works on the unit box; rescale to it.
    std::vector<double> scaled(k);
    for (std::size_t i = 0; i < k; ++i) scaled[i] = v[i] / upper;
    const auto q = generic_qp_oracle(scaled, simplex_polytope(k, mass / upper)).x;
    for (std::size_t i = 0; i < k; ++i) CHECK(std::abs(q[i] * upper - p[i]) < 1e-8);
  }
}

TEST_CASE("project_simplex is the unique minimizer") {
  testing::Gen gen(202);
  const auto v = gen.normals(6);
  const auto p = project_simplex({v});
  const double base = sq_dist(p, v);
  for (int trial = 0; trial < 1000; ++trial) {
    auto q = gen.dep_point(ArcIndexer(6, true));
    q.resize(6);
    const double sum = std::accumulate(q.begin(), q.end(), 0.0);
    for (double& x : q) x /= sum;
    const double eps = gen.uniform(1e-3, 1.0);
    std::vector<double> moved(6);
    for (std::size_t i = 0; i < 6; ++i) moved[i] = p[i] + eps * (q[i] - p[i]);
    if (testing::max_abs_diff(moved, p) < 1e-9) continue;
    CHECK(sq_dist(moved, v) > base);
  }
}

TEST_CASE("project_dep") {
  testing::Gen gen(303);
  const ArcIndexer idx(2, true);
  SUBCASE("feasible input is returned unchanged") {
    const auto v = gen.dep_point(ArcIndexer(4, true));
    CHECK(testing::max_abs_diff(project_dep(v, ArcIndexer(4, true)).values, v) < 1e-12);
  }
  SUBCASE("tree vertices are fixed points") {
    const ArcIndexer big(5, true);
    const auto z = encode_tree(gen.tree(5), big);
    CHECK(project_dep(z.values, big).values == z.values);
  }
  SUBCASE("matches the generic oracle on n=2 with root") {
    for (int trial = 0; trial < 50; ++trial) {
      const auto v = gen.normals(idx.size(), 1.5);
      const auto p = project_dep(v, idx);
      const auto q = generic_qp_oracle(v, dep_polytope(idx)).x;
      CHECK(testing::max_abs_diff(p.values, q) < 1e-8);
    }
  }
  SUBCASE("single candidate head is forced to one") {
    const ArcIndexer one(1, true);
    CHECK(project_dep(std::vector<double>{-2.5}, one).values == std::vector<double>{1.0});
  }
  SUBCASE("dimension mismatch") { CHECK_THROWS(project_dep(std::vector<double>(3, 0.0), idx)); }
}

TEST_CASE("project_sdp") {
  testing::Gen gen(404);
  SUBCASE("one label closed form") {
    const auto p = project_arc_labels(0.4, std::vector<double>{0.8});
    CHECK(p[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.6).epsilon(1e-12));
    // Grid search over the feasible segment p_u = p_l = t.
    double best_t = 0.0;
    double best = 1e300;
    for (int i = 0; i <= 100000; ++i) {
      const double t = i / 100000.0;
      const double f = (t - 0.4) * (t - 0.4) + (t - 0.8) * (t - 0.8);
      if (f < best) {
        best = f;
        best_t = t;
      }
    }
    CHECK(std::abs(best_t - 0.6) < 1e-5);
  }
  SUBCASE("feasible input is unchanged") {
    const LabeledArcIndexer lidx(ArcIndexer(3, false), 3);
    SemGraph g(3, {{1, 2, 0}, {3, 1, 2}});
    auto v = encode_graph(g, lidx).values;
    CHECK(project_sdp(v, lidx).values == v);
    // Fractional feasible point.
    for (std::size_t k = 0; k < lidx.base().size(); ++k) {
      const double u = gen.uniform(0.0, 1.0);
      v[k] = u;
      std::vector<double> w{gen.uniform(0, 1), gen.uniform(0, 1), gen.uniform(0, 1)};
      const double s = w[0] + w[1] + w[2];
      for (std::size_t l = 0; l < 3; ++l) v[lidx.base().size() + k * 3 + l] = u * w[l] / s;
    }
    CHECK(testing::max_abs_diff(project_sdp(v, lidx).values, v) < 1e-9);
  }
  SUBCASE("random 3-label arcs match the generic oracle") {
    const LabeledArcIndexer lidx(ArcIndexer(3, false), 3);
    for (int trial = 0; trial < 50; ++trial) {
      const auto v = gen.normals(lidx.base().size() + lidx.size(), 1.2);
      const auto p = project_sdp(v, lidx);
      const auto q = generic_qp_oracle(v, sdp_polytope(lidx)).x;
      CHECK(testing::max_abs_diff(p.values, q) < 1e-8);
      CHECK(feasibility_check(p.values, sdp_polytope(lidx)).feasible);
    }
  }
  SUBCASE("dimension mismatch") {
    const LabeledArcIndexer lidx(ArcIndexer(2, false), 2);
    CHECK_THROWS(project_sdp(std::vector<double>(5, 0.0), lidx));
  }
}

TEST_CASE("generic_qp_oracle") {
  testing::Gen gen(505);
  SUBCASE("feasible input is returned") {
    const ArcIndexer idx(3, true);
    const auto v = gen.dep_point(idx);
    const auto r = generic_qp_oracle(v, dep_polytope(idx));
    CHECK(testing::max_abs_diff(r.x, v) < 1e-9);
    CHECK(r.kkt_residual <= 1e-9);
  }
  SUBCASE("inequality rows") {
    ConstraintSystem cs;
    cs.dimension = 2;
    cs.rows.push_back({{0, 1}, {1.0, 1.0}, 1.0, RowSense::kLessEqual});
    const auto r = generic_qp_oracle(std::vector<double>{0.9, 0.9}, cs);
    CHECK(r.x[0] == doctest::Approx(0.5));
    CHECK(r.x[1] == doctest::Approx(0.5));
    const auto inside = generic_qp_oracle(std::vector<double>{0.2, 0.3}, cs);
    CHECK(inside.x[0] == doctest::Approx(0.2));
  }
  SUBCASE("oversized problems are refused") {
    const ArcIndexer idx(8, true);
    CHECK_THROWS_AS(generic_qp_oracle(std::vector<double>(idx.size(), 0.0), dep_polytope(idx)),
                    std::invalid_argument);
  }
}

TEST_CASE("projection invariants: idempotence, feasibility, nonexpansiveness") {
  testing::Gen gen(606);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = gen.integer(1, 7);
    const ArcIndexer idx(n, true);
    const auto v = gen.normals(idx.size(), 2.0);
    const auto p = project_dep(v, idx).values;
    CHECK(feasibility_check(p, dep_polytope(idx)).feasible);
    CHECK(testing::max_abs_diff(project_dep(p, idx).values, p) <= 1e-9);
    const auto q = gen.dep_point(idx);
    CHECK(testing::l2(p, q) <= testing::l2(v, q) + 1e-12);

    const LabeledArcIndexer lidx(ArcIndexer(std::max(n, 2), false), gen.integer(1, 4));
    const auto w = gen.normals(lidx.base().size() + lidx.size(), 2.0);
    const auto ps = project_sdp(w, lidx).values;
    CHECK(feasibility_check(ps, sdp_polytope(lidx)).feasible);
    CHECK(testing::max_abs_diff(project_sdp(ps, lidx).values, ps) <= 1e-9);
  }
}
