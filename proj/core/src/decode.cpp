#include "spigot/decode.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>

namespace spigot {

namespace {

void require_finite(const std::vector<double>& v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite score");
  }
}

// Square (n+1) x (n+1) table.
template <typename T>
class Chart {
 public:
  Chart(int n, T fill) : width_(static_cast<std::size_t>(n) + 1), cells_(width_ * width_, fill) {}
  T& operator()(int s, int t) { return cells_[static_cast<std::size_t>(s) * width_ + static_cast<std::size_t>(t)]; }
  T operator()(int s, int t) const {
    return cells_[static_cast<std::size_t>(s) * width_ + static_cast<std::size_t>(t)];
  }

 private:
  std::size_t width_;
  std::vector<T> cells_;
};

struct EisnerCharts {
  explicit EisnerCharts(int n)
      : inc_right(n, kNegInf), inc_left(n, kNegInf), comp_right(n, kNegInf), comp_left(n, kNegInf),
        bp_inc_right(n, -1), bp_inc_left(n, -1), bp_comp_right(n, -1), bp_comp_left(n, -1) {}
  static constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  Chart<double> inc_right, inc_left, comp_right, comp_left;
  Chart<int> bp_inc_right, bp_inc_left, bp_comp_right, bp_comp_left;
};

class EisnerBacktrack {
 public:
  EisnerBacktrack(const EisnerCharts& c, std::vector<int>& heads) : c_(c), heads_(heads) {}

  void complete_right(int s, int t) {
    if (s == t) return;
    const int r = c_.bp_comp_right(s, t);
    incomplete_right(s, r);
    complete_right(r, t);
  }
  void complete_left(int s, int t) {
    if (s == t) return;
    const int r = c_.bp_comp_left(s, t);
    complete_left(s, r);
    incomplete_left(r, t);
  }
  void incomplete_right(int s, int t) {
    heads_[static_cast<std::size_t>(t - 1)] = s;
    const int r = c_.bp_inc_right(s, t);
    complete_right(s, r);
    complete_left(r + 1, t);
  }
  void incomplete_left(int s, int t) {
    heads_[static_cast<std::size_t>(s - 1)] = t;
    const int r = c_.bp_inc_left(s, t);
    complete_right(s, r);
    complete_left(r + 1, t);
  }

 private:
  const EisnerCharts& c_;
  std::vector<int>& heads_;
};

// Would attaching `mod` to `head` close a cycle among already-assigned words?
bool closes_cycle(const std::vector<int>& heads, int mod, int head) {
  int cur = head;
  for (std::size_t steps = 0; steps <= heads.size(); ++steps) {
    if (cur == 0 || cur > static_cast<int>(heads.size())) return false;
    if (cur == mod) return true;
    const int next = heads[static_cast<std::size_t>(cur - 1)];
    if (next < 0) return false;
    cur = next;
  }
  return true;
}

void enumerate_rec(int j, std::vector<int>& heads, bool projective_only, std::vector<DepTree>& out) {
  const int n = static_cast<int>(heads.size());
  if (j > n) {
    if (!projective_only || is_projective(heads)) out.emplace_back(heads);
    return;
  }
  for (int h = 0; h <= n; ++h) {
    if (h == j || closes_cycle(heads, j, h)) continue;
    heads[static_cast<std::size_t>(j - 1)] = h;
    enumerate_rec(j + 1, heads, projective_only, out);
  }
  heads[static_cast<std::size_t>(j - 1)] = -1;
}

}  // namespace

ArcScores::ArcScores(ArcIndexer idx, std::vector<double> v) : indexer(idx), values(std::move(v)) {
  if (values.size() != indexer.size()) throw std::invalid_argument("ArcScores: dimension mismatch");
  require_finite(values, "ArcScores");
}

SdpScores::SdpScores(LabeledArcIndexer idx, std::vector<double> unlabeled_scores,
                     std::vector<double> labeled_scores, std::vector<double> head_scores)
    : indexer(idx),
      unlabeled(std::move(unlabeled_scores)),
      labeled(std::move(labeled_scores)),
      head(std::move(head_scores)) {
  if (unlabeled.size() != indexer.base().size() || labeled.size() != indexer.size()) {
    throw std::invalid_argument("SdpScores: dimension mismatch");
  }
  if (!head.empty() && head.size() != static_cast<std::size_t>(indexer.base().length()) + 1) {
    throw std::invalid_argument("SdpScores: head scores must cover nodes 0..n");
  }
  require_finite(unlabeled, "SdpScores");
  require_finite(labeled, "SdpScores");
  require_finite(head, "SdpScores");
}

SdpScores::SdpScores(LabeledArcIndexer idx)
    : SdpScores(idx, std::vector<double>(idx.base().size(), 0.0), std::vector<double>(idx.size(), 0.0)) {}

double SdpScores::arc_score(std::size_t k) const {
  if (head.empty()) return unlabeled[k];
  return unlabeled[k] + head[static_cast<std::size_t>(indexer.base().arc(k).head)];
}

double tree_score(const ArcScores& s, const DepTree& tree) {
  double total = 0.0;
  for (int j = 1; j <= tree.length(); ++j) total += s(tree.head(j), j);
  return total;
}

double graph_score(const SdpScores& s, const SemGraph& graph) {
  double total = 0.0;
  for (const auto& a : graph.arcs()) {
    const std::size_t k = s.indexer.base().index(a.head, a.mod);
    total += s.arc_score(k) + s.labeled[s.indexer.index(a.head, a.mod, a.label)];
  }
  return total;
}

DepTree eisner_decode(const ArcScores& s) {
  const ArcIndexer& idx = s.indexer;
  if (!idx.includes_root()) throw std::invalid_argument("eisner_decode: indexer must include the root");
  const int n = idx.length();
  EisnerCharts c(n);
  for (int i = 0; i <= n; ++i) {
    c.comp_right(i, i) = 0.0;
    c.comp_left(i, i) = 0.0;
  }
  for (int len = 1; len <= n; ++len) {
    for (int s0 = 0; s0 + len <= n; ++s0) {
      const int t = s0 + len;
      // Incomplete spans: pick the split joining a right-facing and a
      // left-facing complete span.
      double best = EisnerCharts::kNegInf;
      int best_r = -1;
      for (int r = s0; r < t; ++r) {
        const double cand = c.comp_right(s0, r) + c.comp_left(r + 1, t);
        if (cand > best) {
          best = cand;
          best_r = r;
        }
      }
      c.inc_right(s0, t) = best + s(s0, t);
      c.bp_inc_right(s0, t) = best_r;
      if (s0 > 0) {
        c.inc_left(s0, t) = best + s(t, s0);
        c.bp_inc_left(s0, t) = best_r;
      }

      if (s0 > 0) {
        best = EisnerCharts::kNegInf;
        best_r = -1;
        for (int r = s0; r < t; ++r) {
          const double cand = c.comp_left(s0, r) + c.inc_left(r, t);
          if (cand > best) {
            best = cand;
            best_r = r;
          }
        }
        c.comp_left(s0, t) = best;
        c.bp_comp_left(s0, t) = best_r;
      }

      best = EisnerCharts::kNegInf;
      best_r = -1;
      for (int r = s0 + 1; r <= t; ++r) {
        const double cand = c.inc_right(s0, r) + c.comp_right(r, t);
        if (cand > best) {
          best = cand;
          best_r = r;
        }
      }
      c.comp_right(s0, t) = best;
      c.bp_comp_right(s0, t) = best_r;
    }
  }
  std::vector<int> heads(static_cast<std::size_t>(n), -1);
  EisnerBacktrack(c, heads).complete_right(0, n);
  return DepTree(std::move(heads));
}

const std::vector<DepTree>& enumerate_trees(int n, bool projective_only) {
  if (n < 1) throw std::invalid_argument("enumerate_trees: n must be >= 1");
  if (n > kMaxBruteForceLength) throw std::invalid_argument("enumerate_trees: n too large for enumeration");
  static std::mutex mu;
  static std::map<std::pair<int, bool>, std::vector<DepTree>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto [it, inserted] = cache.try_emplace({n, projective_only});
  if (inserted) {
    std::vector<int> heads(static_cast<std::size_t>(n), -1);
    enumerate_rec(1, heads, projective_only, it->second);
  }
  return it->second;
}

TreeArgmax brute_force_tree_argmax(const ArcScores& s, bool projective_only) {
  if (!s.indexer.includes_root()) {
    throw std::invalid_argument("brute_force_tree_argmax: indexer must include the root");
  }
  const auto& trees = enumerate_trees(s.indexer.length(), projective_only);
  const DepTree* best = nullptr;
  double best_score = -std::numeric_limits<double>::infinity();
  for (const auto& t : trees) {
    const double sc = tree_score(s, t);
    if (best == nullptr || sc > best_score) {
      best = &t;
      best_score = sc;
    }
  }
  return {*best, best_score};
}

SemGraph sdp_decode(const SdpScores& s) {
  const auto& base = s.indexer.base();
  const int L = s.indexer.label_count();
  std::vector<LabeledArc> arcs;
  for (std::size_t k = 0; k < base.size(); ++k) {
    int best_label = 0;
    double best = s.labeled[k * static_cast<std::size_t>(L)];
    for (int l = 1; l < L; ++l) {
      const double v = s.labeled[k * static_cast<std::size_t>(L) + static_cast<std::size_t>(l)];
      if (v > best) {
        best = v;
        best_label = l;
      }
    }
    if (s.arc_score(k) + best > 0.0) {
      const Arc a = base.arc(k);
      arcs.push_back({a.head, a.mod, best_label});
    }
  }
  return SemGraph(base.length(), std::move(arcs));
}

double hamming(const DepTree& a, const DepTree& b, const ArcIndexer& indexer) {
  const auto va = encode_tree(a, indexer);
  const auto vb = encode_tree(b, indexer);
  double d = 0.0;
  for (std::size_t k = 0; k < va.size(); ++k) d += std::abs(va.values[k] - vb.values[k]);
  return d;
}

double hamming(const SemGraph& a, const SemGraph& b, const LabeledArcIndexer& indexer) {
  const auto va = encode_graph(a, indexer);
  const auto vb = encode_graph(b, indexer);
  double d = 0.0;
  for (std::size_t k = 0; k < va.size(); ++k) d += std::abs(va.values[k] - vb.values[k]);
  return d;
}

ArcScores cost_augment(const ArcScores& s, const DepTree& gold, double cost_weight) {
  const auto g = encode_tree(gold, s.indexer);
  std::vector<double> v = s.values;
  for (std::size_t k = 0; k < v.size(); ++k) v[k] += cost_weight * (1.0 - 2.0 * g.values[k]);
  return ArcScores(s.indexer, std::move(v));
}

SdpScores cost_augment(const SdpScores& s, const SemGraph& gold, double cost_weight) {
  const auto g = encode_graph(gold, s.indexer);
  const std::size_t d = s.unlabeled.size();
  std::vector<double> u = s.unlabeled;
  std::vector<double> l = s.labeled;
  for (std::size_t k = 0; k < d; ++k) u[k] += cost_weight * (1.0 - 2.0 * g.values[k]);
  for (std::size_t k = 0; k < l.size(); ++k) l[k] += cost_weight * (1.0 - 2.0 * g.values[d + k]);
  return SdpScores(s.indexer, std::move(u), std::move(l), s.head);
}

DepTree cost_augmented_decode(const ArcScores& s, const DepTree& gold, double cost_weight) {
  if (cost_weight == 0.0) return eisner_decode(s);
  return eisner_decode(cost_augment(s, gold, cost_weight));
}

SemGraph cost_augmented_decode(const SdpScores& s, const SemGraph& gold, double cost_weight) {
  if (cost_weight == 0.0) return sdp_decode(s);
  return sdp_decode(cost_augment(s, gold, cost_weight));
}

}  // namespace spigot
