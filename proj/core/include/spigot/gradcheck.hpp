#pragma once

// Central finite differences and the relative-error metric used to validate
// every hand-written backward pass.

#include <functional>
#include <span>
#include <vector>

namespace spigot {

/// Numerical gradient of f at x by central differences with step h.
std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                       std::span<const double> x, double h = 1e-5);

/// ||a - b||_2 / max(||a||_2, ||b||_2, floor).
double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-12);

}  // namespace spigot
