#pragma once

// Comparison of two trained pipelines: partition evaluation sentences by
// whether their intermediate predictions agree, and classify how heads moved
// relative to a reference semantic graph.

#include <string>
#include <vector>

#include "spigot/learn/metrics.hpp"
#include "spigot/learn/model.hpp"
#include "spigot/learn/trainer.hpp"

namespace spigot {

/// For each modifier m whose head moved h -> h':
///   a: h' is a head of m in the semantic graph
///   b: h' is a modifier of m in the semantic graph
///   c: h is a modifier of m in the semantic graph
/// A change matching several cases is counted in each (`a`, `b`, `c`);
/// `exclusive_*` assigns it to the first match in a, b, c order, so the
/// exclusive fractions and `other` sum to one.
struct HeadChangeCounts {
  long changes = 0;
  long a = 0;
  long b = 0;
  long c = 0;
  long other = 0;
  long exclusive_a = 0;
  long exclusive_b = 0;
  long exclusive_c = 0;

  HeadChangeCounts& operator+=(const HeadChangeCounts& o);
  double fraction(long count) const {
    return changes == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(changes);
  }
};

inline constexpr const char* kOverlapConvention =
    "a change matching several categories is counted in each; exclusive counts use the first match in a, b, c order";

/// Throws std::invalid_argument if the trees differ in length.
HeadChangeCounts categorize_head_changes(const DepTree& before, const DepTree& after, const SemGraph& sem);

struct PartitionMetrics {
  long size = 0;
  MetricCounts a;
  MetricCounts b;
};

struct AgreementReport {
  PartitionMetrics same;
  PartitionMetrics diff;
  HeadChangeCounts categories;

  AgreementReport& operator+=(const AgreementReport& o);
};

/// Partition from precomputed predictions (one per evaluation instance).
AgreementReport partition_by_agreement(const std::vector<Prediction>& a, const std::vector<Prediction>& b,
                                       const Dataset& eval);
AgreementReport partition_by_agreement(const PipelineModel& a, ProxyVariant variant_a, const PipelineModel& b,
                                       ProxyVariant variant_b, const Dataset& eval);

std::vector<Prediction> predict_all(const PipelineModel& model, ProxyVariant variant, const Dataset& data);

/// JSON rendering used by the CLI and the experiment bundle.
std::string agreement_to_json(const AgreementReport& r, bool graph_mode, int indent = -1);

}  // namespace spigot
