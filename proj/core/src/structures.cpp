#include "spigot/structures.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace spigot {

ArcIndexer::ArcIndexer(int n, bool includes_root)
    : n_(n), includes_root_(includes_root), heads_per_mod_(includes_root ? n : n - 1) {
  if (n < 1) throw std::invalid_argument("ArcIndexer: sentence length must be >= 1");
}

bool ArcIndexer::contains(int head, int mod) const {
  return mod >= 1 && mod <= n_ && head >= first_head() && head <= n_ && head != mod;
}

std::size_t ArcIndexer::index(int head, int mod) const {
  if (!contains(head, mod)) {
    std::ostringstream msg;
    msg << "ArcIndexer: arc " << head << "->" << mod << " outside index space (n=" << n_
        << ", root=" << includes_root_ << ")";
    throw std::out_of_range(msg.str());
  }
  const int rank = head - first_head() - (head > mod ? 1 : 0);
  return block_begin(mod) + static_cast<std::size_t>(rank);
}

Arc ArcIndexer::arc(std::size_t k) const {
  if (k >= size()) throw std::out_of_range("ArcIndexer: coordinate out of range");
  const int mod = static_cast<int>(k / static_cast<std::size_t>(heads_per_mod_)) + 1;
  const int rank = static_cast<int>(k % static_cast<std::size_t>(heads_per_mod_));
  int head = rank + first_head();
  if (head >= mod) ++head;
  return {head, mod};
}

std::size_t ArcIndexer::block_begin(int mod) const {
  return static_cast<std::size_t>(mod - 1) * static_cast<std::size_t>(heads_per_mod_);
}

ArcIndexer build_arc_indexer(int n, bool includes_root) { return ArcIndexer(n, includes_root); }

LabeledArcIndexer::LabeledArcIndexer(ArcIndexer base, int label_count)
    : base_(base), label_count_(label_count) {
  if (label_count < 1) throw std::invalid_argument("LabeledArcIndexer: need at least one label");
}

std::size_t LabeledArcIndexer::index(int head, int mod, int label) const {
  if (label < 0 || label >= label_count_) {
    throw std::out_of_range("LabeledArcIndexer: label out of range");
  }
  return base_.index(head, mod) * static_cast<std::size_t>(label_count_) +
         static_cast<std::size_t>(label);
}

LabeledArc LabeledArcIndexer::arc(std::size_t k) const {
  const auto L = static_cast<std::size_t>(label_count_);
  const Arc a = base_.arc(k / L);
  return {a.head, a.mod, static_cast<int>(k % L)};
}

std::string tree_violation(std::span<const int> heads) {
  const int n = static_cast<int>(heads.size());
  if (n < 1) return "empty tree";
  for (int j = 1; j <= n; ++j) {
    const int h = heads[j - 1];
    if (h < 0 || h > n) return "head of word " + std::to_string(j) + " out of range";
    if (h == j) return "self-loop at word " + std::to_string(j);
  }
  // Every word must reach the root by following heads within n steps.
  for (int j = 1; j <= n; ++j) {
    int cur = j;
    int steps = 0;
    while (cur != 0 && steps <= n) {
      cur = heads[cur - 1];
      ++steps;
    }
    if (cur != 0) return "cycle through word " + std::to_string(j);
  }
  return {};
}

bool is_projective(std::span<const int> heads) {
  const int n = static_cast<int>(heads.size());
  for (int a = 1; a <= n; ++a) {
    const int l1 = std::min(a, heads[a - 1]);
    const int r1 = std::max(a, heads[a - 1]);
    for (int b = 1; b <= n; ++b) {
      const int l2 = std::min(b, heads[b - 1]);
      const int r2 = std::max(b, heads[b - 1]);
      if (l1 < l2 && l2 < r1 && r1 < r2) return false;
    }
  }
  return true;
}

DepTree::DepTree(std::vector<int> heads) : heads_(std::move(heads)) {
  if (auto why = tree_violation(heads_); !why.empty()) {
    throw std::invalid_argument("DepTree: " + why);
  }
}

bool DepTree::is_projective() const { return spigot::is_projective(heads_); }

SemGraph::SemGraph(int n, std::vector<LabeledArc> arcs) : n_(n), arcs_(std::move(arcs)) {
  if (n < 1) throw std::invalid_argument("SemGraph: length must be >= 1");
  for (const auto& a : arcs_) {
    if (a.mod < 1 || a.mod > n || a.head < 0 || a.head > n) {
      throw std::invalid_argument("SemGraph: node out of range");
    }
    if (a.head == a.mod) throw std::invalid_argument("SemGraph: self-loop");
    if (a.label < 0) throw std::invalid_argument("SemGraph: negative label");
  }
  std::sort(arcs_.begin(), arcs_.end());
  for (std::size_t k = 1; k < arcs_.size(); ++k) {
    if (arcs_[k].head == arcs_[k - 1].head && arcs_[k].mod == arcs_[k - 1].mod) {
      throw std::invalid_argument("SemGraph: more than one label for an arc");
    }
  }
}

std::vector<Arc> SemGraph::unlabeled() const {
  std::vector<Arc> out;
  out.reserve(arcs_.size());
  for (const auto& a : arcs_) out.push_back({a.head, a.mod});
  return out;
}

bool SemGraph::has_arc(int head, int mod) const { return label(head, mod).has_value(); }

std::optional<int> SemGraph::label(int head, int mod) const {
  for (const auto& a : arcs_) {
    if (a.head == head && a.mod == mod) return a.label;
  }
  return std::nullopt;
}

std::vector<int> SemGraph::heads_of(int mod) const {
  std::vector<int> out;
  for (const auto& a : arcs_) {
    if (a.mod == mod) out.push_back(a.head);
  }
  return out;
}

bool StructureVec::well_formed(double tol) const {
  for (double x : values) {
    if (!std::isfinite(x)) return false;
    if (kind == StructureKind::kVertex) {
      if (x != 0.0 && x != 1.0) return false;
    } else if (x < -tol || x > 1.0 + tol) {
      return false;
    }
  }
  return true;
}

void SentenceInstance::validate(int vocab_size) const {
  if (tokens.empty()) throw std::invalid_argument("SentenceInstance: empty sentence");
  for (int t : tokens) {
    if (t < 0 || t >= vocab_size) throw std::invalid_argument("SentenceInstance: token id out of vocabulary");
  }
  if (gold_tree && gold_tree->length() != length()) {
    throw std::invalid_argument("SentenceInstance: gold tree length mismatch");
  }
  if (gold_graph && gold_graph->length() != length()) {
    throw std::invalid_argument("SentenceInstance: gold graph length mismatch");
  }
}

StructureVec encode_tree(const DepTree& tree, const ArcIndexer& indexer) {
  if (tree.length() != indexer.length()) {
    throw std::invalid_argument("encode_tree: tree length does not match indexer");
  }
  StructureVec v{std::vector<double>(indexer.size(), 0.0), StructureKind::kVertex};
  for (int j = 1; j <= tree.length(); ++j) v.values[indexer.index(tree.head(j), j)] = 1.0;
  return v;
}

DepTree decode_tree(const StructureVec& v, const ArcIndexer& indexer) {
  if (v.size() != indexer.size()) throw std::invalid_argument("decode_tree: dimension mismatch");
  std::vector<int> heads(static_cast<std::size_t>(indexer.length()), -1);
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (v.values[k] == 0.0) continue;
    if (v.values[k] != 1.0) throw std::invalid_argument("decode_tree: not a vertex");
    const Arc a = indexer.arc(k);
    if (heads[a.mod - 1] != -1) throw std::invalid_argument("decode_tree: modifier with two heads");
    heads[a.mod - 1] = a.head;
  }
  return DepTree(std::move(heads));
}

StructureVec encode_graph(const SemGraph& graph, const LabeledArcIndexer& indexer) {
  const auto& base = indexer.base();
  if (graph.length() != base.length()) {
    throw std::invalid_argument("encode_graph: graph length does not match indexer");
  }
  StructureVec v{std::vector<double>(base.size() + indexer.size(), 0.0), StructureKind::kVertex};
  for (const auto& a : graph.arcs()) {
    v.values[base.index(a.head, a.mod)] = 1.0;
    v.values[base.size() + indexer.index(a.head, a.mod, a.label)] = 1.0;
  }
  return v;
}

SemGraph decode_graph(const StructureVec& v, const LabeledArcIndexer& indexer) {
  const auto& base = indexer.base();
  if (v.size() != base.size() + indexer.size()) {
    throw std::invalid_argument("decode_graph: dimension mismatch");
  }
  std::vector<LabeledArc> arcs;
  const int L = indexer.label_count();
  for (std::size_t k = 0; k < base.size(); ++k) {
    if (v.values[k] != 1.0) continue;
    const Arc a = base.arc(k);
    for (int l = 0; l < L; ++l) {
      if (v.values[base.size() + k * static_cast<std::size_t>(L) + static_cast<std::size_t>(l)] == 1.0) {
        arcs.push_back({a.head, a.mod, l});
        break;
      }
    }
  }
  return SemGraph(base.length(), std::move(arcs));
}

double ConstraintRow::dot(std::span<const double> v) const {
  double acc = 0.0;
  for (std::size_t k = 0; k < cols.size(); ++k) acc += coeffs[k] * v[cols[k]];
  return acc;
}

ConstraintSystem dep_polytope(const ArcIndexer& indexer) {
  ConstraintSystem cs;
  cs.dimension = indexer.size();
  for (int j = 1; j <= indexer.length(); ++j) {
    ConstraintRow row;
    const std::size_t begin = indexer.block_begin(j);
    for (int r = 0; r < indexer.heads_per_mod(); ++r) {
      row.cols.push_back(begin + static_cast<std::size_t>(r));
      row.coeffs.push_back(1.0);
    }
    row.rhs = 1.0;
    // n = 1 without a root has no candidate heads; leave the empty row out.
    if (!row.cols.empty()) cs.rows.push_back(std::move(row));
  }
  return cs;
}

ConstraintSystem sdp_polytope(const LabeledArcIndexer& indexer) {
  const auto& base = indexer.base();
  const auto L = static_cast<std::size_t>(indexer.label_count());
  ConstraintSystem cs;
  cs.dimension = base.size() + indexer.size();
  for (std::size_t k = 0; k < base.size(); ++k) {
    ConstraintRow row;
    row.cols.push_back(k);
    row.coeffs.push_back(-1.0);
    for (std::size_t l = 0; l < L; ++l) {
      row.cols.push_back(base.size() + k * L + l);
      row.coeffs.push_back(1.0);
    }
    cs.rows.push_back(std::move(row));
  }
  return cs;
}

ConstraintSystem simplex_polytope(std::size_t k, double mass) {
  ConstraintSystem cs;
  cs.dimension = k;
  ConstraintRow row;
  for (std::size_t i = 0; i < k; ++i) {
    row.cols.push_back(i);
    row.coeffs.push_back(1.0);
  }
  row.rhs = mass;
  cs.rows.push_back(std::move(row));
  return cs;
}

FeasibilityReport feasibility_check(std::span<const double> v, const ConstraintSystem& cs, double tol) {
  if (v.size() != cs.dimension) throw std::invalid_argument("feasibility_check: dimension mismatch");
  double worst = 0.0;
  for (const auto& row : cs.rows) {
    const double r = row.dot(v) - row.rhs;
    worst = std::max(worst, row.sense == RowSense::kEqual ? std::abs(r) : std::max(r, 0.0));
  }
  if (cs.box) {
    for (double x : v) worst = std::max({worst, -x, x - 1.0});
  }
  for (double x : v) {
    if (!std::isfinite(x)) worst = std::numeric_limits<double>::infinity();
  }
  return {worst <= tol, worst};
}

}  // namespace spigot
