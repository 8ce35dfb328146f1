#include "spigot/learn/metrics.hpp"

#include <stdexcept>

namespace spigot {

namespace {

double ratio(long a, long b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); }

double f1(long matched, long predicted, long gold) {
  const double p = ratio(matched, predicted);
  const double r = ratio(matched, gold);
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

}  // namespace

void MetricCounts::add_tree(const DepTree& pred, const DepTree& gold) {
  if (pred.length() != gold.length()) throw std::invalid_argument("add_tree: length mismatch");
  for (int j = 1; j <= gold.length(); ++j) heads_correct += pred.head(j) == gold.head(j) ? 1 : 0;
  heads_total += gold.length();
}

void MetricCounts::add_graph(const SemGraph& pred, const SemGraph& gold) {
  if (pred.length() != gold.length()) throw std::invalid_argument("add_graph: length mismatch");
  arcs_predicted += static_cast<long>(pred.arcs().size());
  arcs_gold += static_cast<long>(gold.arcs().size());
  for (const auto& a : pred.arcs()) {
    const auto g = gold.label(a.head, a.mod);
    if (!g) continue;
    ++arcs_matched_unlabeled;
    if (*g == a.label) ++arcs_matched_labeled;
  }
}

void MetricCounts::add_label(int pred, int gold) {
  labels_correct += pred == gold ? 1 : 0;
  ++labels_total;
}

MetricCounts& MetricCounts::operator+=(const MetricCounts& o) {
  heads_correct += o.heads_correct;
  heads_total += o.heads_total;
  arcs_predicted += o.arcs_predicted;
  arcs_gold += o.arcs_gold;
  arcs_matched_unlabeled += o.arcs_matched_unlabeled;
  arcs_matched_labeled += o.arcs_matched_labeled;
  labels_correct += o.labels_correct;
  labels_total += o.labels_total;
  return *this;
}

double MetricCounts::uas() const { return ratio(heads_correct, heads_total); }
double MetricCounts::unlabeled_f1() const { return f1(arcs_matched_unlabeled, arcs_predicted, arcs_gold); }
double MetricCounts::labeled_f1() const { return f1(arcs_matched_labeled, arcs_predicted, arcs_gold); }
double MetricCounts::accuracy() const { return ratio(labels_correct, labels_total); }

}  // namespace spigot
