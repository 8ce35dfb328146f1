#include "spigot/learn/losses.hpp"

#include <algorithm>

#include "spigot/marginals.hpp"

namespace spigot {

LossGrad structured_hinge(const ArcScores& s, const DepTree& gold, double cost_weight) {
  const DepTree pred = cost_augmented_decode(s, gold, cost_weight);
  LossGrad out;
  out.loss = tree_score(s, pred) + cost_weight * hamming(pred, gold, s.indexer) - tree_score(s, gold);
  // Exact ties between the augmented argmax and gold can leave -0-ish noise.
  out.loss = std::max(out.loss, 0.0);
  const auto zp = encode_tree(pred, s.indexer);
  const auto zg = encode_tree(gold, s.indexer);
  out.grad.resize(zp.size());
  for (std::size_t k = 0; k < zp.size(); ++k) out.grad[k] = zp.values[k] - zg.values[k];
  return out;
}

LossGrad structured_hinge(const SdpScores& s, const SemGraph& gold, double cost_weight) {
  const SemGraph pred = cost_augmented_decode(s, gold, cost_weight);
  LossGrad out;
  out.loss = graph_score(s, pred) + cost_weight * hamming(pred, gold, s.indexer) - graph_score(s, gold);
  out.loss = std::max(out.loss, 0.0);
  const auto zp = encode_graph(pred, s.indexer);
  const auto zg = encode_graph(gold, s.indexer);
  out.grad.resize(zp.size());
  for (std::size_t k = 0; k < zp.size(); ++k) out.grad[k] = zp.values[k] - zg.values[k];
  return out;
}

LossGrad log_loss_tree(const ArcScores& s, const DepTree& gold) {
  const MarginalResult m = inside_outside(s);
  LossGrad out;
  out.loss = std::max(m.log_partition - tree_score(s, gold), 0.0);
  const auto zg = encode_tree(gold, s.indexer);
  out.grad.resize(zg.size());
  for (std::size_t k = 0; k < zg.size(); ++k) out.grad[k] = m.arc_marginals.values[k] - zg.values[k];
  return out;
}

}  // namespace spigot
