#include "spigot/bench/analysis.hpp"

#include <stdexcept>

#include <json.hpp>

namespace spigot {

HeadChangeCounts& HeadChangeCounts::operator+=(const HeadChangeCounts& o) {
  changes += o.changes;
  a += o.a;
  b += o.b;
  c += o.c;
  other += o.other;
  exclusive_a += o.exclusive_a;
  exclusive_b += o.exclusive_b;
  exclusive_c += o.exclusive_c;
  return *this;
}

HeadChangeCounts categorize_head_changes(const DepTree& before, const DepTree& after, const SemGraph& sem) {
  if (before.length() != after.length()) throw std::invalid_argument("categorize_head_changes: length mismatch");
  if (sem.length() != before.length()) throw std::invalid_argument("categorize_head_changes: graph length mismatch");
  HeadChangeCounts out;
  for (int m = 1; m <= before.length(); ++m) {
    const int h = before.head(m);
    const int h2 = after.head(m);
    if (h == h2) continue;
    ++out.changes;
    const bool is_a = sem.has_arc(h2, m);
    const bool is_b = h2 != 0 && sem.has_arc(m, h2);
    const bool is_c = h != 0 && sem.has_arc(m, h);
    out.a += is_a;
    out.b += is_b;
    out.c += is_c;
    if (is_a) ++out.exclusive_a;
    else if (is_b) ++out.exclusive_b;
    else if (is_c) ++out.exclusive_c;
    else ++out.other;
  }
  return out;
}

AgreementReport& AgreementReport::operator+=(const AgreementReport& o) {
  same.size += o.same.size;
  same.a += o.same.a;
  same.b += o.same.b;
  diff.size += o.diff.size;
  diff.a += o.diff.a;
  diff.b += o.diff.b;
  categories += o.categories;
  return *this;
}

std::vector<Prediction> predict_all(const PipelineModel& model, ProxyVariant variant, const Dataset& data) {
  std::vector<Prediction> out;
  out.reserve(data.size());
  for (const auto& inst : data) out.push_back(model.predict(inst.tokens, variant));
  return out;
}

AgreementReport partition_by_agreement(const std::vector<Prediction>& a, const std::vector<Prediction>& b,
                                       const Dataset& eval) {
  if (a.size() != eval.size() || b.size() != eval.size()) {
    throw std::invalid_argument("partition_by_agreement: prediction count differs from the evaluation set");
  }
  AgreementReport r;
  for (std::size_t i = 0; i < eval.size(); ++i) {
    const auto& inst = eval[i];
    const bool same = a[i].tree == b[i].tree && a[i].graph == b[i].graph;
    PartitionMetrics& part = same ? r.same : r.diff;
    ++part.size;
    auto add = [&](MetricCounts& c, const Prediction& p) {
      if (p.tree && inst.gold_tree) c.add_tree(*p.tree, *inst.gold_tree);
      if (p.graph && inst.gold_graph) c.add_graph(*p.graph, *inst.gold_graph);
      if (inst.end_label) c.add_label(p.label, *inst.end_label);
    };
    add(part.a, a[i]);
    add(part.b, b[i]);
    if (!same && a[i].tree && b[i].tree && inst.gold_graph) {
      r.categories += categorize_head_changes(*a[i].tree, *b[i].tree, *inst.gold_graph);
    }
  }
  return r;
}

AgreementReport partition_by_agreement(const PipelineModel& a, ProxyVariant variant_a, const PipelineModel& b,
                                       ProxyVariant variant_b, const Dataset& eval) {
  return partition_by_agreement(predict_all(a, variant_a, eval), predict_all(b, variant_b, eval), eval);
}

std::string agreement_to_json(const AgreementReport& r, bool graph_mode, int indent) {
  using json = nlohmann::ordered_json;
  auto part = [&](const PartitionMetrics& p) {
    json j;
    j["size"] = p.size;
    const char* inter = graph_mode ? "lf1" : "uas";
    j[std::string(inter) + "_a"] = graph_mode ? p.a.labeled_f1() : p.a.uas();
    j[std::string(inter) + "_b"] = graph_mode ? p.b.labeled_f1() : p.b.uas();
    j["acc_a"] = p.a.accuracy();
    j["acc_b"] = p.b.accuracy();
    return j;
  };
  json j;
  j["same"] = part(r.same);
  j["diff"] = part(r.diff);
  const auto& c = r.categories;
  json cat;
  cat["changes"] = c.changes;
  cat["a"] = c.a;
  cat["b"] = c.b;
  cat["c"] = c.c;
  cat["other"] = c.other;
  cat["fraction_a"] = c.fraction(c.a);
  cat["fraction_b"] = c.fraction(c.b);
  cat["fraction_c"] = c.fraction(c.c);
  cat["exclusive"] = {{"a", c.exclusive_a}, {"b", c.exclusive_b}, {"c", c.exclusive_c}, {"other", c.other}};
  cat["overlap_convention"] = kOverlapConvention;
  j["head_changes"] = cat;
  return j.dump(indent);
}

}  // namespace spigot
