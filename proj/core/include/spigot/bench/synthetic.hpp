#pragma once

// Synthetic two-stage tasks. A randomly initialized teacher network of the
// same family as the learned arc scorer defines the true structure of every
// sentence; the end label is a deterministic function of
// that structure; intermediate supervision is the true structure corrupted by
// random head rewiring at rate rho.

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "spigot/learn/model.hpp"
#include "spigot/learn/trainer.hpp"

namespace spigot {

/// What the end label counts in the true structure; the label is whether the
/// count reaches a threshold picked for balance.
///   same_class:    non-root arcs whose endpoints share a token class
///   root_children: arcs leaving the root
///   root_class:    root arcs whose modifier has token class 0
enum class EndRule { kSameClass, kRootChildren, kRootClass };

EndRule parse_end_rule(std::string_view name);
std::string_view to_string(EndRule r);

struct SyntheticTaskSpec {
  IntermediateKind kind = IntermediateKind::kTree;
  int vocab_size = 24;
  int min_length = 5;
  int max_length = 10;
  /// Token classes: class(w) = w mod token_classes.
  int token_classes = 3;
  EndRule end_rule = EndRule::kSameClass;
  int label_count = 2;  // semantic roles, graph mode only
  /// Width of the teacher's token embedding and arc MLP.
  int teacher_hidden = 8;
  /// Multiplies the teacher's arc scores; larger means crisper structures.
  double teacher_scale = 3.0;
  /// Weight of the -log(distance) prior added to unlabeled arc scores.
  double distance_weight = 1.0;
  std::uint64_t seed = 1;
  double noise = 0.3;
  int intermediate_size = 120;
  int end_size = 400;
  int eval_size = 300;

  /// Throws std::invalid_argument on out-of-range values.
  void validate() const;
};

/// Applies one "key = value" entry; returns false for unknown keys.
struct KeyValue;
bool apply_task_key(SyntheticTaskSpec& spec, const KeyValue& kv, const std::string& source);
SyntheticTaskSpec parse_task_spec(const std::string& text, const std::string& source = "<spec>");

struct SyntheticData {
  SyntheticTaskSpec spec;
  /// Noisy intermediate supervision (gold_tree / gold_graph are corrupted).
  Dataset intermediate;
  /// The uncorrupted structures of the intermediate split, same order.
  Dataset intermediate_truth;
  /// End-task instances: tokens and end label only.
  Dataset end;
  /// Evaluation: tokens, true structure and end label. In tree mode the gold
  /// graph is the true tree with label 1 on same-class arcs and 0 otherwise.
  Dataset eval;
  int label_threshold = 0;
  long corrupted_parts = 0;
  long total_parts = 0;
  double positive_rate = 0.0;
  /// Accuracy of the best predictor that sees only the token-class histogram
  /// (fit on the end split, measured on eval).
  double surface_baseline = 0.0;

  double corruption_rate() const {
    return total_parts == 0 ? 0.0 : static_cast<double>(corrupted_parts) / static_cast<double>(total_parts);
  }
};

SyntheticData generate_dataset(const SyntheticTaskSpec& spec);

/// Number of true-structure arcs (root arcs excluded) whose endpoints share a
/// token class.
int same_class_arcs(const SentenceInstance& inst, int token_classes);
/// Number of root arcs of the true structure, optionally only those whose
/// modifier has token class `cls`.
int root_children(const SentenceInstance& inst, int token_classes = 0, int cls = -1);
/// The quantity the end rule thresholds.
int end_rule_count(const SentenceInstance& inst, const SyntheticTaskSpec& spec);

/// Rewires each modifier with probability rho to a different head that keeps
/// the tree valid and projective; modifiers with no alternative pass their
/// turn to a later modifier. Returns the number of changed heads.
int corrupt_tree(std::vector<int>& heads, double rho, std::mt19937_64& rng, long& debt);

/// Model hyperparameters matching a task (vocabulary, labels, classes).
ModelSpec default_model_for(const SyntheticTaskSpec& spec);

}  // namespace spigot
