#include "spigot/proxy.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "spigot/marginals.hpp"
#include "spigot/project.hpp"

namespace spigot {

namespace {

void check_grad(std::span<const double> grad_z, std::size_t expected) {
  if (grad_z.size() != expected) throw std::invalid_argument("backward: gradient dimension mismatch");
  for (double g : grad_z) {
    if (!std::isfinite(g)) throw std::invalid_argument("backward: non-finite gradient w.r.t. z");
  }
}

template <typename Project>
SpigotStep make_spigot_step(const StructureVec& z, double eta, std::span<const double> grad_z, Project&& project) {
  SpigotStep step;
  step.p_hat.resize(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) step.p_hat[k] = z.values[k] - eta * grad_z[k];
  step.z_tilde = project(step.p_hat).values;
  step.grad_s.resize(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) step.grad_s[k] = z.values[k] - step.z_tilde[k];
  return step;
}

}  // namespace

ProxyKind::ProxyKind(ProxyVariant v, double step) : variant(v), eta(step) {
  if (!std::isfinite(step) || step <= 0.0) throw std::invalid_argument("ProxyKind: eta must be finite and positive");
}

std::string_view to_string(ProxyVariant v) {
  switch (v) {
    case ProxyVariant::kPipeline:
      return "pipeline";
    case ProxyVariant::kSte:
      return "ste";
    case ProxyVariant::kSpigot:
      return "spigot";
    case ProxyVariant::kSa:
      return "sa";
  }
  return "unknown";
}

ProxyVariant parse_proxy_variant(std::string_view name) {
  if (name == "pipeline") return ProxyVariant::kPipeline;
  if (name == "ste") return ProxyVariant::kSte;
  if (name == "spigot") return ProxyVariant::kSpigot;
  if (name == "sa") return ProxyVariant::kSa;
  throw std::invalid_argument("unknown proxy '" + std::string(name) + "' (expected pipeline|ste|spigot|sa)");
}

std::pair<StructureVec, TreeTape> forward(const ArcScores& s, const ProxyKind& kind) {
  StructureVec z;
  if (kind.variant == ProxyVariant::kSa) {
    z = inside_outside(s).arc_marginals;
  } else {
    z = encode_tree(eisner_decode(s), s.indexer);
  }
  TreeTape tape{s, z, kind};
  return {std::move(z), std::move(tape)};
}

std::pair<StructureVec, GraphTape> forward(const SdpScores& s, const ProxyKind& kind) {
  if (kind.variant == ProxyVariant::kSa) {
    throw std::invalid_argument("forward: structured attention is not available for semantic graphs");
  }
  StructureVec z = encode_graph(sdp_decode(s), s.indexer);
  GraphTape tape{s, z, kind};
  return {std::move(z), std::move(tape)};
}

SpigotStep spigot_step(const TreeTape& tape, std::span<const double> grad_z) {
  check_grad(grad_z, tape.z.size());
  return make_spigot_step(tape.z, tape.kind.eta, grad_z,
                          [&](std::span<const double> p) { return project_dep(p, tape.scores.indexer); });
}

SpigotStep spigot_step(const GraphTape& tape, std::span<const double> grad_z) {
  check_grad(grad_z, tape.z.size());
  return make_spigot_step(tape.z, tape.kind.eta, grad_z,
                          [&](std::span<const double> p) { return project_sdp(p, tape.scores.indexer); });
}

std::vector<double> backward(const TreeTape& tape, std::span<const double> grad_z) {
  check_grad(grad_z, tape.z.size());
  switch (tape.kind.variant) {
    case ProxyVariant::kPipeline:
      return std::vector<double>(grad_z.size(), 0.0);
    case ProxyVariant::kSte:
      return {grad_z.begin(), grad_z.end()};
    case ProxyVariant::kSpigot:
      return spigot_step(tape, grad_z).grad_s;
    case ProxyVariant::kSa:
      return marginal_backward(tape.scores, grad_z);
  }
  throw std::logic_error("backward: unknown proxy variant");
}

std::vector<double> backward(const GraphTape& tape, std::span<const double> grad_z) {
  check_grad(grad_z, tape.z.size());
  switch (tape.kind.variant) {
    case ProxyVariant::kPipeline:
      return std::vector<double>(grad_z.size(), 0.0);
    case ProxyVariant::kSte:
      return {grad_z.begin(), grad_z.end()};
    case ProxyVariant::kSpigot:
      return spigot_step(tape, grad_z).grad_s;
    case ProxyVariant::kSa:
      break;
  }
  throw std::invalid_argument("backward: structured attention is not available for semantic graphs");
}

}  // namespace spigot
