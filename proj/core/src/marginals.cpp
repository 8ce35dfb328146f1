#include "spigot/marginals.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spigot {

namespace {

// Value plus one tangent direction; enough for Hessian-vector products of the
// log-partition.
struct Dual {
  double v = 0.0;
  double d = 0.0;
};

Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
Dual& operator+=(Dual& a, Dual b) { return a = a + b; }
Dual exp_of(Dual a) {
  const double e = std::exp(a.v);
  return {e, e * a.d};
}
Dual log_of(Dual a) { return {std::log(a.v), a.d / a.v}; }
double value(Dual a) { return a.v; }

double exp_of(double x) { return std::exp(x); }
double log_of(double x) { return std::log(x); }
double value(double x) { return x; }

template <typename T>
class Chart {
 public:
  explicit Chart(int n) : width_(static_cast<std::size_t>(n) + 1), cells_(width_ * width_, T{}) {}
  T& operator()(int s, int t) { return cells_[static_cast<std::size_t>(s) * width_ + static_cast<std::size_t>(t)]; }

 private:
  std::size_t width_;
  std::vector<T> cells_;
};

// log(sum exp(terms)), shifted by the largest value.
template <typename T>
T log_sum_exp(const std::vector<T>& terms) {
  auto top = std::max_element(terms.begin(), terms.end(),
                              [](const T& a, const T& b) { return value(a) < value(b); });
  const T m = *top;
  T acc{};
  for (const T& x : terms) acc += exp_of(x - m);
  return m + log_of(acc);
}

template <typename T>
struct InsideOutside {
  std::vector<T> marginals;
  T log_partition{};
};

// Inside pass over the Eisner charts followed by its adjoint; the adjoint of
// each arc score is that arc's marginal.
template <typename T>
InsideOutside<T> run_inside_outside(const ArcIndexer& idx, const std::vector<T>& scores) {
  const int n = idx.length();
  auto sc = [&](int h, int m) -> const T& { return scores[idx.index(h, m)]; };
  Chart<T> ir(n), il(n), cr(n), cl(n);
  std::vector<T> terms;
  terms.reserve(static_cast<std::size_t>(n) + 1);

  for (int len = 1; len <= n; ++len) {
    for (int s = 0; s + len <= n; ++s) {
      const int t = s + len;
      terms.clear();
      for (int r = s; r < t; ++r) terms.push_back(cr(s, r) + cl(r + 1, t));
      const T inner = log_sum_exp(terms);
      ir(s, t) = inner + sc(s, t);
      if (s > 0) {
        il(s, t) = inner + sc(t, s);
        terms.clear();
        for (int r = s; r < t; ++r) terms.push_back(cl(s, r) + il(r, t));
        cl(s, t) = log_sum_exp(terms);
      }
      terms.clear();
      for (int r = s + 1; r <= t; ++r) terms.push_back(ir(s, r) + cr(r, t));
      cr(s, t) = log_sum_exp(terms);
    }
  }

  InsideOutside<T> out;
  out.log_partition = cr(0, n);
  out.marginals.assign(idx.size(), T{});

  Chart<T> gir(n), gil(n), gcr(n), gcl(n);
  gcr(0, n) = T{1.0};
  for (int len = n; len >= 1; --len) {
    for (int s = 0; s + len <= n; ++s) {
      const int t = s + len;
      {
        const T g = gcr(s, t);
        for (int r = s + 1; r <= t; ++r) {
          const T w = g * exp_of(ir(s, r) + cr(r, t) - cr(s, t));
          gir(s, r) += w;
          if (r < t) gcr(r, t) += w;
        }
      }
      if (s > 0) {
        const T g = gcl(s, t);
        for (int r = s; r < t; ++r) {
          const T w = g * exp_of(cl(s, r) + il(r, t) - cl(s, t));
          if (r > s) gcl(s, r) += w;
          gil(r, t) += w;
        }
      }
      const T inner = ir(s, t) - sc(s, t);
      T g_inner = gir(s, t);
      out.marginals[idx.index(s, t)] = gir(s, t);
      if (s > 0) {
        out.marginals[idx.index(t, s)] = gil(s, t);
        g_inner += gil(s, t);
      }
      for (int r = s; r < t; ++r) {
        const T w = g_inner * exp_of(cr(s, r) + cl(r + 1, t) - inner);
        if (r > s) gcr(s, r) += w;
        if (r + 1 < t) gcl(r + 1, t) += w;
      }
    }
  }
  return out;
}

void require_root(const ArcIndexer& idx, const char* who) {
  if (!idx.includes_root()) throw std::invalid_argument(std::string(who) + ": indexer must include the root");
}

}  // namespace

MarginalResult inside_outside(const ArcScores& s) {
  require_root(s.indexer, "inside_outside");
  auto io = run_inside_outside<double>(s.indexer, s.values);
  for (double& m : io.marginals) m = std::clamp(m, 0.0, 1.0);
  return {StructureVec{std::move(io.marginals), StructureKind::kRelaxed}, io.log_partition};
}

MarginalResult brute_force_marginals(const ArcScores& s) {
  require_root(s.indexer, "brute_force_marginals");
  const auto& trees = enumerate_trees(s.indexer.length(), /*projective_only=*/true);
  std::vector<double> scores;
  scores.reserve(trees.size());
  for (const auto& t : trees) scores.push_back(tree_score(s, t));
  const double log_z = log_sum_exp(scores);
  std::vector<double> marg(s.indexer.size(), 0.0);
  for (std::size_t k = 0; k < trees.size(); ++k) {
    const double p = std::exp(scores[k] - log_z);
    for (int j = 1; j <= trees[k].length(); ++j) marg[s.indexer.index(trees[k].head(j), j)] += p;
  }
  return {StructureVec{std::move(marg), StructureKind::kRelaxed}, log_z};
}

std::vector<double> marginal_backward(const ArcScores& s, std::span<const double> upstream) {
  require_root(s.indexer, "marginal_backward");
  if (upstream.size() != s.indexer.size()) throw std::invalid_argument("marginal_backward: dimension mismatch");
  std::vector<Dual> scores(s.values.size());
  for (std::size_t k = 0; k < scores.size(); ++k) scores[k] = {s.values[k], upstream[k]};
  const auto io = run_inside_outside<Dual>(s.indexer, scores);
  std::vector<double> grad(io.marginals.size());
  for (std::size_t k = 0; k < grad.size(); ++k) grad[k] = io.marginals[k].d;
  return grad;
}

}  // namespace spigot
