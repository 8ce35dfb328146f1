#pragma once

// The structured argmax layer with pluggable backward rules.
//
// The forward pass always runs an exact decoder (or marginal inference for
// structured attention). The backward pass never forms the Jacobian of the
// argmax; each strategy substitutes its own gradient proxy:
//
//   PIPELINE  grad_s = 0
//   STE       grad_s = grad_z
//   SPIGOT    p_hat = z - eta * grad_z;  z_tilde = proj_P(p_hat);  grad_s = z - z_tilde
//   SA        grad_s = (d marginals / d s)^T grad_z

#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "spigot/decode.hpp"
#include "spigot/structures.hpp"

namespace spigot {

enum class ProxyVariant { kPipeline, kSte, kSpigot, kSa };

/// Step size used by the SPIGOT proxy on tree layers.
inline constexpr double kTreeEta = 1.0;
/// Step size used by the SPIGOT proxy on semantic-graph layers.
inline constexpr double kGraphEta = 5.0 / 32.0;

struct ProxyKind {
  ProxyVariant variant = ProxyVariant::kSpigot;
  double eta = kTreeEta;

  ProxyKind() = default;
  /// Throws std::invalid_argument unless eta is finite and positive.
  ProxyKind(ProxyVariant v, double step);
};

std::string_view to_string(ProxyVariant v);
/// Accepts "pipeline", "ste", "spigot", "sa"; throws std::invalid_argument.
ProxyVariant parse_proxy_variant(std::string_view name);

/// Everything the backward pass needs from a tree-layer forward call.
struct TreeTape {
  ArcScores scores;
  StructureVec z;  // vertex, or marginals for SA
  ProxyKind kind;
};

struct GraphTape {
  SdpScores scores;
  StructureVec z;  // [unlabeled ; labeled] vertex
  ProxyKind kind;
};

std::pair<StructureVec, TreeTape> forward(const ArcScores& s, const ProxyKind& kind);
/// SA is rejected for graph layers: no marginal inference is available there.
std::pair<StructureVec, GraphTape> forward(const SdpScores& s, const ProxyKind& kind);

/// Gradient proxy w.r.t. the arc scores. Throws std::invalid_argument on a
/// dimension mismatch or when grad_z contains NaN/Inf.
std::vector<double> backward(const TreeTape& tape, std::span<const double> grad_z);
/// Gradient proxy w.r.t. the flattened [unlabeled ; labeled] scores.
std::vector<double> backward(const GraphTape& tape, std::span<const double> grad_z);

/// The intermediate SPIGOT quantities, exposed for inspection and tests.
struct SpigotStep {
  std::vector<double> p_hat;
  std::vector<double> z_tilde;
  std::vector<double> grad_s;
};

SpigotStep spigot_step(const TreeTape& tape, std::span<const double> grad_z);
SpigotStep spigot_step(const GraphTape& tape, std::span<const double> grad_z);

}  // namespace spigot
