// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "spigot/bench/experiment.hpp"
#include "spigot/bench/io.hpp"
#include "spigot/decode.hpp"
#include "spigot/learn/gradient_checks.hpp"
#include "spigot/marginals.hpp"
#include "spigot/project.hpp"
#include "spigot/proxy.hpp"
#include "support/generators.hpp"

using namespace spigot;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& body) {
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("%s  C%d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome decoder_oracle() {
  testing::Gen gen(101);
  const auto t0 = Clock::now();
  long mismatches = 0;
  long total = 0;
  for (int n = 1; n <= 6; ++n) {
    for (int trial = 0; trial < 200; ++trial) {
      const auto s = gen.arc_scores(n);
      const DepTree t = eisner_decode(s);
      const TreeArgmax best = brute_force_tree_argmax(s, true);
      if (!t.is_projective() || tree_score(s, t) != tree_score(s, best.tree)) ++mismatches;
      ++total;
    }
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 5.0, fmt("%ld/%ld exact score matches, %.3f s", total - mismatches, total, secs)};
}

Outcome marginal_oracle() {
  testing::Gen gen(202);
  double worst_mu = 0.0;
  double worst_logz = 0.0;
  double worst_sum = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = gen.integer(1, 6);
    const auto s = gen.arc_scores(n, gen.uniform(0.1, 3.0));
    const MarginalResult io = inside_outside(s);
    const MarginalResult bf = brute_force_marginals(s);
    worst_mu = std::max(worst_mu, max_abs_diff(io.arc_marginals.values, bf.arc_marginals.values));
    worst_logz = std::max(worst_logz, std::abs(io.log_partition - bf.log_partition));
    for (int j = 1; j <= n; ++j) {
      double sum = 0.0;
      for (int h = 0; h <= n; ++h) {
        if (h != j) sum += io.arc_marginals.values[s.indexer.index(h, j)];
      }
      worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    }
  }
  const bool ok = worst_mu <= 1e-10 && worst_logz <= 1e-10 && worst_sum <= 1e-10;
  return {ok, fmt("100 instances; max |mu err| %.2e, max |logZ err| %.2e, max |row sum - 1| %.2e", worst_mu,
                  worst_logz, worst_sum)};
}

struct ProjectionStats {
  double oracle = 0.0;
  double idempotence = 0.0;
  long nonexpansive_violations = 0;
  long pairs = 0;
  std::size_t max_dim = 0;
};

Outcome projection_correctness() {
  testing::Gen gen(303);
  using Proj = std::function<std::vector<double>(std::span<const double>)>;

  // Each sampler returns (v, polytope, projection) for a fresh random instance.
  struct Instance {
    std::vector<double> v;
    ConstraintSystem cs;
    Proj proj;
  };
  const std::vector<std::pair<const char*, std::function<Instance()>>> cases = {
      {"simplex",
       [&] {
         const auto k = static_cast<std::size_t>(gen.integer(1, 50));
         const double mass = gen.integer(0, 3) == 0 ? gen.uniform(0.1, static_cast<double>(k)) : 1.0;
         Instance in{gen.normals(k, gen.uniform(0.1, 3.0)), simplex_polytope(k, mass), {}};
         in.proj = [mass](std::span<const double> v) {
           return project_simplex(SimplexTarget{{v.begin(), v.end()}, mass, 1.0});
         };
         return in;
       }},
      {"dep",
       [&] {
         const bool root = gen.integer(0, 3) != 0;
         int n = gen.integer(1, 7);
         if (!root) n = std::max(n, 2);
         const ArcIndexer idx(n, root);
         Instance in{gen.normals(idx.size(), gen.uniform(0.1, 3.0)), dep_polytope(idx), {}};
         in.proj = [idx](std::span<const double> v) { return project_dep(v, idx).values; };
         return in;
       }},
      {"sdp",
       [&] {
         int n = 0;
         int labels = 0;
         LabeledArcIndexer lidx(ArcIndexer(2, true), 1);
         do {
           n = gen.integer(2, 4);
           labels = gen.integer(1, 6);
           lidx = LabeledArcIndexer(ArcIndexer(n, gen.integer(0, 1) == 1), labels);
         } while (lidx.base().size() + lidx.size() > 50);
         Instance in{gen.normals(lidx.base().size() + lidx.size(), gen.uniform(0.1, 3.0)), sdp_polytope(lidx), {}};
         in.proj = [lidx](std::span<const double> v) { return project_sdp(v, lidx).values; };
         return in;
       }},
  };

  bool ok = true;
  std::string detail;
  for (const auto& [name, sample] : cases) {
    ProjectionStats st;
    for (int trial = 0; trial < 500; ++trial) {
      Instance in = sample();
      st.max_dim = std::max(st.max_dim, in.v.size());
      const auto p = in.proj(in.v);
      st.oracle = std::max(st.oracle, max_abs_diff(p, generic_qp_oracle(in.v, in.cs).x));
      st.idempotence = std::max(st.idempotence, max_abs_diff(in.proj(p), p));
    }
    for (int trial = 0; trial < 1000; ++trial) {
      Instance in = sample();
      // A feasible q: the projection of an independent point, often interior.
      const auto q = in.proj(gen.normals(in.v.size(), gen.uniform(0.01, 2.0)));
      if (!feasibility_check(q, in.cs).feasible) ++st.nonexpansive_violations;
      const auto p = in.proj(in.v);
      if (distance(p, q) > distance(in.v, q) + 1e-12) ++st.nonexpansive_violations;
      ++st.pairs;
    }
    const bool this_ok = st.oracle <= 1e-8 && st.idempotence <= 1e-9 && st.nonexpansive_violations == 0;
    ok = ok && this_ok;
    if (!detail.empty()) detail += "; ";
    detail += fmt("%s oracle %.1e idem %.1e nonexp %ld/%ld viol (dim<=%zu)", name, st.oracle, st.idempotence,
                  st.nonexpansive_violations, st.pairs, st.max_dim);
  }
  return {ok, detail};
}

Outcome spigot_identity() {
  testing::Gen gen(404);
  double interior_dev = 0.0;
  long interior = 0;
  // Interior: a gradient that moves mass away from the chosen head in small
  // amounts keeps p_hat inside the polytope.
  for (int trial = 0; trial < 500; ++trial) {
    const int n = gen.integer(1, 8);
    const auto s = gen.arc_scores(n);
    const double eta = trial % 2 == 0 ? kTreeEta : gen.uniform(0.05, 3.0);
    const auto [z, tape] = forward(s, {ProxyVariant::kSpigot, eta});
    std::vector<double> g(z.size(), 0.0);
    const auto w = static_cast<std::size_t>(s.indexer.heads_per_mod());
    for (int j = 1; j <= n; ++j) {
      if (w < 2) continue;
      const std::size_t b = s.indexer.block_begin(j);
      const double delta = gen.uniform(0.0, 0.9 / eta);
      for (std::size_t r = 0; r < w; ++r) {
        g[b + r] = z.values[b + r] == 1.0 ? delta : -delta / static_cast<double>(w - 1);
      }
    }
    const auto step = spigot_step(tape, g);
    if (!feasibility_check(step.p_hat, dep_polytope(s.indexer), 0.0).feasible) continue;
    ++interior;
    for (std::size_t k = 0; k < g.size(); ++k) {
      interior_dev = std::max(interior_dev, std::abs(step.grad_s[k] - eta * g[k]));
    }
  }
  // Random gradients: any draw whose p_hat lands inside also counts as interior.
  double boundary_dev = 0.0;
  long boundary = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int n = gen.integer(1, 7);
    const auto s = gen.arc_scores(n);
    const auto [z, tape] = forward(s, {ProxyVariant::kSpigot, kTreeEta});
    const auto g = gen.normals(z.size(), gen.uniform(0.01, 2.0));
    const auto step = spigot_step(tape, g);
    if (feasibility_check(step.p_hat, dep_polytope(s.indexer), 0.0).feasible) {
      ++interior;
      for (std::size_t k = 0; k < g.size(); ++k) {
        interior_dev = std::max(interior_dev, std::abs(step.grad_s[k] - kTreeEta * g[k]));
      }
      continue;
    }
    ++boundary;
    const auto proj = generic_qp_oracle(step.p_hat, dep_polytope(s.indexer)).x;
    for (std::size_t k = 0; k < g.size(); ++k) {
      boundary_dev = std::max(boundary_dev, std::abs(step.grad_s[k] - (z.values[k] - proj[k])));
    }
  }
  for (int trial = 0; trial < 200; ++trial) {
    const int n = gen.integer(2, 3);
    const LabeledArcIndexer lidx(ArcIndexer(n, gen.integer(0, 1) == 1), gen.integer(1, 3));
    if (lidx.base().size() + lidx.size() > 50) continue;
    const SdpScores s(lidx, gen.normals(lidx.base().size()), gen.normals(lidx.size()));
    const auto [z, tape] = forward(s, {ProxyVariant::kSpigot, kGraphEta});
    const auto g = gen.normals(z.size(), gen.uniform(0.5, 10.0));
    const auto step = spigot_step(tape, g);
    const auto proj = generic_qp_oracle(step.p_hat, sdp_polytope(lidx)).x;
    ++boundary;
    for (std::size_t k = 0; k < g.size(); ++k) {
      boundary_dev = std::max(boundary_dev, std::abs(step.grad_s[k] - (z.values[k] - proj[k])));
    }
  }
  const bool ok = interior > 0 && boundary > 0 && interior_dev <= 1e-12 && boundary_dev <= 1e-8;
  return {ok, fmt("interior %ld cases, max |grad_s - eta*grad_z| %.2e; boundary %ld cases, max dev from oracle %.2e",
                  interior, interior_dev, boundary, boundary_dev)};
}

Outcome gradient_checks() {
  const auto results = run_gradient_checks("all", 20);
  bool ok = !results.empty();
  std::string detail;
  for (const auto& r : results) {
    ok = ok && r.passed() && r.instances >= 20;
    if (!detail.empty()) detail += ", ";
    detail += fmt("%s %.1e/%.0e", r.block.c_str(), r.max_rel_error, r.tolerance);
  }
  return {ok, detail};
}

struct ExperimentRun {
  ExperimentResult result;
  double seconds = 0.0;
};

ExperimentRun run_config(const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  ExperimentResult r = run_experiment(cfg);
  return {std::move(r), seconds_since(t0)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string config_path = argc > 1 ? argv[1] : SPIGOT_ACCEPTANCE_CONFIG;
  const std::string bundle_dir = argc > 2 ? argv[2] : "";

  report(1, "decoder oracle equivalence", decoder_oracle);
  report(2, "marginal oracle equivalence", marginal_oracle);
  report(3, "projection correctness", projection_correctness);
  report(4, "SPIGOT interior identity and boundary projection", spigot_identity);
  report(5, "gradient checks", gradient_checks);

  ExperimentConfig cfg;
  ExperimentRun first;
  bool have_first = false;
  std::string setup_error;
  try {
    cfg = parse_experiment_config(read_file(config_path), config_path);
    first = run_config(cfg);
    have_first = true;
    if (!bundle_dir.empty()) write_experiment(first.result, bundle_dir);
  } catch (const std::exception& e) {
    setup_error = e.what();
  }

  report(6, "directional end-task ordering", [&]() -> Outcome {
    if (!have_first) return {false, "experiment failed: " + setup_error};
    const auto& r = first.result;
    const std::string m = "accuracy";
    const double sp = r.median(ProxyVariant::kSpigot, m);
    const double ste = r.median(ProxyVariant::kSte, m);
    const double pipe = r.median(ProxyVariant::kPipeline, m);
    std::string sa = "n/a";
    if (std::count(cfg.proxies.begin(), cfg.proxies.end(), ProxyVariant::kSa) > 0) {
      sa = fmt("%.4f (SA - PIPELINE %+.4f)", r.median(ProxyVariant::kSa, m), r.median(ProxyVariant::kSa, m) - pipe);
    }
    const bool ok = sp >= ste && sp >= pipe && first.seconds < 600.0 && cfg.seeds.size() == 10;
    return {ok, fmt("noise %.2f, %zu seeds, median accuracy SPIGOT %.4f STE %.4f PIPELINE %.4f SA %s, %.1f s",
                    cfg.task.noise, cfg.seeds.size(), sp, ste, pipe, sa.c_str(), first.seconds)};
  });

  report(7, "intermediate degradation", [&]() -> Outcome {
    if (!have_first) return {false, "experiment failed: " + setup_error};
    const auto& r = first.result;
    const std::string m = cfg.task.kind == IntermediateKind::kTree ? "uas_drop" : "lf1_drop";
    const double sp = r.median(ProxyVariant::kSpigot, m);
    const double ste = r.median(ProxyVariant::kSte, m);
    return {sp <= ste, fmt("median %s SPIGOT %+.4f STE %+.4f (PIPELINE %s %.4f)", m.c_str(), sp, ste,
                           m.substr(0, m.find('_')).c_str(),
                           r.median(ProxyVariant::kPipeline, m.substr(0, m.find('_'))))};
  });

  report(8, "determinism", [&]() -> Outcome {
    if (!have_first) return {false, "experiment failed: " + setup_error};
    const ExperimentRun second = run_config(cfg);
    const std::string a = first.result.aggregate_csv();
    const std::string b = second.result.aggregate_csv();
    return {a == b, fmt("aggregate CSV %zu bytes, rerun %s", a.size(), a == b ? "byte-identical" : "differs")};
  });

  std::printf("%s: %d of 8 criteria failed\n", failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED", failures);
  return failures == 0 ? 0 : 1;
}
