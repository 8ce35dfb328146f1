#pragma once

// Euclidean projections onto the relaxed polytopes used by the SPIGOT
// backward pass. Both polytopes decompose into independent singly constrained
// quadratic programs.

#include <cstddef>
#include <span>
#include <vector>

#include "spigot/structures.hpp"

namespace spigot {

/// Target of a box-constrained simplex projection {p : sum p = mass, 0 <= p <= upper}.
struct SimplexTarget {
  std::vector<double> v;
  double mass = 1.0;
  double upper = 1.0;
};

/// Unique Euclidean projection onto {p : sum p = mass, 0 <= p <= upper}.
///
/// Solves for the threshold tau with sum_i clip(v_i - tau, 0, upper) = mass by
/// sorting the 2k breakpoints and interpolating on the bracketing segment.
/// Throws std::invalid_argument when k * upper < mass, mass <= 0 or upper <= 0.
std::vector<double> project_simplex(const SimplexTarget& t);

/// Projection onto the single-headedness polytope: each modifier's incoming
/// block is projected onto the unit simplex independently.
StructureVec project_dep(std::span<const double> p_hat, const ArcIndexer& indexer);

/// Projection onto {sum_l p_(i,j,l) = p_(i,j), 0 <= p <= 1} for every arc,
/// under the [unlabeled ; labeled] layout. Each arc's QP is solved by bisection
/// on the multiplier of its coupling constraint, then polished exactly on the
/// identified active set.
StructureVec project_sdp(std::span<const double> p_hat, const LabeledArcIndexer& indexer);

/// One arc of project_sdp: returns [p_u, p_1..p_L].
std::vector<double> project_arc_labels(double unlabeled, std::span<const double> labeled);

struct QpOracleOptions {
  int max_sweeps = 20000;
  int max_active_set_iterations = 200;
  double kkt_tolerance = 1e-9;
  std::size_t max_dimension = 50;
};

struct QpOracleResult {
  std::vector<double> x;
  double kkt_residual = 0.0;
  int active_set_iterations = 0;
};

/// Generic projection onto a ConstraintSystem (with its [0, 1] box), for small
/// dimensions only. Dykstra's alternating projections provide a warm start;
/// a primal active-set loop then solves the KKT system exactly and certifies
/// the result. Throws std::runtime_error if the KKT residual cannot be brought
/// below the tolerance.
QpOracleResult generic_qp_oracle(std::span<const double> v, const ConstraintSystem& cs,
                                 const QpOracleOptions& options = {});

}  // namespace spigot
