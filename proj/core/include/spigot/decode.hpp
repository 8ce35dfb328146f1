#pragma once

// Exact maximizers over projective trees and first-order semantic graphs, and
// enumeration oracles used to check them.

#include <cstddef>
#include <vector>

#include "spigot/structures.hpp"

namespace spigot {

/// Arc-factored scores s, one per indexer coordinate.
struct ArcScores {
  ArcIndexer indexer;
  std::vector<double> values;

  ArcScores(ArcIndexer idx, std::vector<double> v);
  explicit ArcScores(ArcIndexer idx) : ArcScores(idx, std::vector<double>(idx.size(), 0.0)) {}

  double operator()(int head, int mod) const { return values[indexer.index(head, mod)]; }
};

/// Scores for heads, unlabeled arcs and labeled arcs of a first-order
/// semantic dependency parser. `head` holds one score per node 0..n (may be
/// empty, meaning zero).
struct SdpScores {
  LabeledArcIndexer indexer;
  std::vector<double> unlabeled;
  std::vector<double> labeled;
  std::vector<double> head;

  SdpScores(LabeledArcIndexer idx, std::vector<double> unlabeled_scores,
            std::vector<double> labeled_scores, std::vector<double> head_scores = {});
  explicit SdpScores(LabeledArcIndexer idx);

  /// Unlabeled score of arc k with the head part of its head folded in.
  double arc_score(std::size_t k) const;
};

/// Sum of s over the tree's arcs, accumulated in modifier order 1..n.
double tree_score(const ArcScores& s, const DepTree& tree);
/// z . s for a graph under the [unlabeled ; labeled] layout (head parts folded).
double graph_score(const SdpScores& s, const SemGraph& graph);

/// First-order Eisner decoding over projective trees rooted at node 0 (the
/// root may take several children).
///
/// Ties are resolved by the first candidate in iteration order: split points
/// are scanned left to right and a later candidate replaces the incumbent only
/// if strictly better. For n = 2 with all-zero scores this yields heads [0, 1].
/// Requires a root-including indexer.
DepTree eisner_decode(const ArcScores& s);

struct TreeArgmax {
  DepTree tree;
  double score = 0.0;
};

inline constexpr int kMaxBruteForceLength = 8;

/// All single-headed, acyclic, root-connected trees over n words (projective
/// ones only if requested), in lexicographic order of head vectors. Throws
/// std::invalid_argument if n > kMaxBruteForceLength.
const std::vector<DepTree>& enumerate_trees(int n, bool projective_only);

/// Exhaustive argmax; the first tree in enumeration order wins ties.
TreeArgmax brute_force_tree_argmax(const ArcScores& s, bool projective_only);

/// Exact argmax for first-order graphs: arc (i, j) is included with its best
/// label l* iff unlabeled(i, j) + labeled(i, j, l*) > 0. Lowest label wins
/// label ties.
SemGraph sdp_decode(const SdpScores& s);

/// Hamming distance between a structure and the gold one, over parts.
double hamming(const DepTree& a, const DepTree& b, const ArcIndexer& indexer);
double hamming(const SemGraph& a, const SemGraph& b, const LabeledArcIndexer& indexer);

/// argmax_z z.s + cost_weight * Hamming(z, gold). Implemented by shifting
/// every part score by +cost_weight (non-gold) or -cost_weight (gold).
DepTree cost_augmented_decode(const ArcScores& s, const DepTree& gold, double cost_weight = 1.0);
SemGraph cost_augmented_decode(const SdpScores& s, const SemGraph& gold, double cost_weight = 1.0);

/// Cost-shifted copies of the scores, exposed for oracles and losses.
ArcScores cost_augment(const ArcScores& s, const DepTree& gold, double cost_weight);
SdpScores cost_augment(const SdpScores& s, const SemGraph& gold, double cost_weight);

}  // namespace spigot
