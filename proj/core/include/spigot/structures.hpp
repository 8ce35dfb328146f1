#pragma once

// Index spaces, structure encodings and linear-constraint descriptors shared by
// the decoders, projections and proxies.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace spigot {

/// Default absolute tolerance for feasibility of relaxed points.
inline constexpr double kFeasibilityTol = 1e-8;

struct Arc {
  int head = 0;
  int mod = 0;
  friend bool operator==(const Arc&, const Arc&) = default;
};

struct LabeledArc {
  int head = 0;
  int mod = 0;
  int label = 0;
  friend bool operator==(const LabeledArc&, const LabeledArc&) = default;
  friend auto operator<=>(const LabeledArc&, const LabeledArc&) = default;
};

/// Bijection between candidate arcs (head -> modifier) and coordinates [0, d).
///
/// Words are numbered 1..n; node 0 is the root when `includes_root` is set.
/// Coordinates are grouped by modifier: the incoming arcs of modifier j occupy
/// the contiguous block [(j-1)*k, j*k), with k = n (root mode) or n-1, heads in
/// increasing order with j itself skipped.
class ArcIndexer {
 public:
  ArcIndexer(int n, bool includes_root);

  int length() const { return n_; }
  bool includes_root() const { return includes_root_; }
  /// Number of coordinates d: n*n with a root, n*(n-1) without.
  std::size_t size() const { return static_cast<std::size_t>(n_) * heads_per_mod_; }
  /// Candidate heads per modifier (the block width).
  int heads_per_mod() const { return heads_per_mod_; }
  int first_head() const { return includes_root_ ? 0 : 1; }

  bool contains(int head, int mod) const;
  /// Throws std::out_of_range for self-loops or nodes outside the index space.
  std::size_t index(int head, int mod) const;
  Arc arc(std::size_t k) const;

  /// First coordinate of modifier j's incoming block.
  std::size_t block_begin(int mod) const;

  friend bool operator==(const ArcIndexer&, const ArcIndexer&) = default;

 private:
  int n_;
  bool includes_root_;
  int heads_per_mod_;
};

ArcIndexer build_arc_indexer(int n, bool includes_root);

/// Labeled arcs (i, j, l) map to base.index(i, j) * L + l; labels are 0-based.
class LabeledArcIndexer {
 public:
  LabeledArcIndexer(ArcIndexer base, int label_count);

  const ArcIndexer& base() const { return base_; }
  int label_count() const { return label_count_; }
  std::size_t size() const { return base_.size() * static_cast<std::size_t>(label_count_); }
  std::size_t index(int head, int mod, int label) const;
  LabeledArc arc(std::size_t k) const;

  friend bool operator==(const LabeledArcIndexer&, const LabeledArcIndexer&) = default;

 private:
  ArcIndexer base_;
  int label_count_;
};

/// A dependency tree over words 1..n with root node 0.
class DepTree {
 public:
  DepTree() = default;
  /// heads[j-1] is the head of word j. Throws std::invalid_argument unless the
  /// heads form a single rooted, acyclic tree.
  explicit DepTree(std::vector<int> heads);

  int length() const { return static_cast<int>(heads_.size()); }
  int head(int mod) const { return heads_.at(static_cast<std::size_t>(mod - 1)); }
  const std::vector<int>& heads() const { return heads_; }
  bool is_projective() const;

  friend bool operator==(const DepTree&, const DepTree&) = default;

 private:
  std::vector<int> heads_;
};

/// Empty string when `heads` is a valid tree, otherwise the reason it is not.
std::string tree_violation(std::span<const int> heads);
bool is_projective(std::span<const int> heads);

/// A labeled bilexical graph. Heads may be the root (0) only if the graph is
/// meant for a root-including indexer; at most one label per (head, mod).
class SemGraph {
 public:
  SemGraph() = default;
  /// Throws std::invalid_argument on self-loops, out-of-range nodes or
  /// duplicate (head, mod) pairs. Arcs are stored sorted.
  SemGraph(int n, std::vector<LabeledArc> arcs);

  int length() const { return n_; }
  const std::vector<LabeledArc>& arcs() const { return arcs_; }
  std::vector<Arc> unlabeled() const;
  bool has_arc(int head, int mod) const;
  std::optional<int> label(int head, int mod) const;
  std::vector<int> heads_of(int mod) const;

  friend bool operator==(const SemGraph&, const SemGraph&) = default;

 private:
  int n_ = 0;
  std::vector<LabeledArc> arcs_;
};

enum class StructureKind { kVertex, kRelaxed };

/// A point in the part space: a binary structure or a relaxed (fractional) one.
struct StructureVec {
  std::vector<double> values;
  StructureKind kind = StructureKind::kVertex;

  std::size_t size() const { return values.size(); }
  /// Vertex: every coordinate is exactly 0 or 1. Relaxed: within [0, 1] +- tol.
  bool well_formed(double tol = kFeasibilityTol) const;
};

struct SentenceInstance {
  int id = 0;
  std::vector<int> tokens;
  std::optional<DepTree> gold_tree;
  std::optional<SemGraph> gold_graph;
  std::optional<int> end_label;

  int length() const { return static_cast<int>(tokens.size()); }
  /// Throws std::invalid_argument when the instance is inconsistent.
  void validate(int vocab_size) const;
};

StructureVec encode_tree(const DepTree& tree, const ArcIndexer& indexer);
/// Inverse of encode_tree; requires exactly one active coordinate per modifier.
DepTree decode_tree(const StructureVec& v, const ArcIndexer& indexer);

/// Graph parts laid out as [unlabeled arcs (d) ; labeled arcs (d * L)].
StructureVec encode_graph(const SemGraph& graph, const LabeledArcIndexer& indexer);
SemGraph decode_graph(const StructureVec& v, const LabeledArcIndexer& indexer);

enum class RowSense { kEqual, kLessEqual };

struct ConstraintRow {
  std::vector<std::size_t> cols;
  std::vector<double> coeffs;
  double rhs = 0.0;
  RowSense sense = RowSense::kEqual;

  double dot(std::span<const double> v) const;
};

/// {p : A p (= or <=) b, 0 <= p <= 1 (if box)}; rows are sparse.
struct ConstraintSystem {
  std::size_t dimension = 0;
  std::vector<ConstraintRow> rows;
  std::size_t auxiliary_count = 0;
  bool box = true;
};

/// Single-headedness relaxation: incoming arcs of every modifier sum to one.
ConstraintSystem dep_polytope(const ArcIndexer& indexer);
/// Labeled arcs of every (i, j) sum to the unlabeled arc; layout as encode_graph.
ConstraintSystem sdp_polytope(const LabeledArcIndexer& indexer);
/// A single {sum p = mass, 0 <= p <= upper} simplex, for cross-checks.
ConstraintSystem simplex_polytope(std::size_t k, double mass = 1.0);

struct FeasibilityReport {
  bool feasible = false;
  double max_violation = 0.0;
};

/// Max over rows of the constraint residual and over coordinates of the box
/// violation. Throws std::invalid_argument on dimension mismatch.
FeasibilityReport feasibility_check(std::span<const double> v, const ConstraintSystem& cs,
                                    double tol = kFeasibilityTol);

}  // namespace spigot
