#pragma once

// Training objectives for the intermediate structured model. Each returns the
// loss value together with its (sub)gradient w.r.t. the part scores.

#include <vector>

#include "spigot/decode.hpp"

namespace spigot {

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// max_z [z.s + c * Hamming(z, gold)] - gold.s, with subgradient z_aug - gold.
LossGrad structured_hinge(const ArcScores& s, const DepTree& gold, double cost_weight = 1.0);
/// Graph version; the gradient is over the [unlabeled ; labeled] layout.
LossGrad structured_hinge(const SdpScores& s, const SemGraph& gold, double cost_weight = 1.0);

/// log Z(s) - gold.s over projective trees, with gradient marginals - gold.
LossGrad log_loss_tree(const ArcScores& s, const DepTree& gold);

}  // namespace spigot
