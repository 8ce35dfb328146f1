#pragma once

// Marginal inference over projective dependency trees.

#include <span>
#include <vector>

#include "spigot/decode.hpp"
#include "spigot/structures.hpp"

namespace spigot {

struct MarginalResult {
  StructureVec arc_marginals;  // relaxed kind, indexer layout
  double log_partition = 0.0;
};

/// Exact arc marginals and log-partition of p(z) ~ exp(z.s) over projective
/// trees (root may take several children). Log-space throughout. Requires a
/// root-including indexer.
MarginalResult inside_outside(const ArcScores& s);

/// Enumeration oracle for the same distribution; n <= kMaxBruteForceLength.
MarginalResult brute_force_marginals(const ArcScores& s);

/// Vector-Jacobian product of the marginal map: returns (d mu / d s)^T upstream.
/// The Jacobian is the Hessian of the log-partition (symmetric), so this equals
/// the directional derivative of the marginals along `upstream`, computed by
/// running the inside/outside recursions on dual numbers.
std::vector<double> marginal_backward(const ArcScores& s, std::span<const double> upstream);

}  // namespace spigot
