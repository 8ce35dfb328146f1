#pragma once

// Central finite-difference checks of every hand-written backward pass, on
// seeded random instances.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace spigot {

struct GradCheckResult {
  std::string block;
  int instances = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;

  bool passed() const { return max_rel_error <= tolerance; }
};

/// Module names accepted by run_gradient_checks.
std::vector<std::string> gradient_check_modules();

/// Runs the checks of one module ("all" for every module) on `instances`
/// random instances each. Throws std::invalid_argument for unknown modules.
std::vector<GradCheckResult> run_gradient_checks(std::string_view module, int instances = 20,
                                                 std::uint64_t seed = 7, double step = 1e-4);

}  // namespace spigot
