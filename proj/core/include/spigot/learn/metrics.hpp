#pragma once

#include <span>

#include "spigot/structures.hpp"

namespace spigot {

/// Running counts for attachment score, arc-set F1 and classification
/// accuracy. Empty denominators yield 0.
struct MetricCounts {
  long heads_correct = 0;
  long heads_total = 0;
  long arcs_predicted = 0;
  long arcs_gold = 0;
  long arcs_matched_unlabeled = 0;
  long arcs_matched_labeled = 0;
  long labels_correct = 0;
  long labels_total = 0;

  void add_tree(const DepTree& pred, const DepTree& gold);
  void add_graph(const SemGraph& pred, const SemGraph& gold);
  void add_label(int pred, int gold);
  MetricCounts& operator+=(const MetricCounts& other);

  double uas() const;
  double unlabeled_f1() const;
  double labeled_f1() const;
  double accuracy() const;
};

}  // namespace spigot
