#include "spigot/project.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace spigot {

namespace {

double clip(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

void require_finite(std::span<const double> v, const char* who) {
  for (double x : v) {
    if (!std::isfinite(x)) throw std::invalid_argument(std::string(who) + ": non-finite input");
  }
}

// Residual of the coupling constraint at multiplier lambda; nonincreasing.
double coupling_residual(double a, std::span<const double> b, double lambda) {
  double total = -clip(a + lambda, 0.0, 1.0);
  for (double x : b) total += clip(x - lambda, 0.0, 1.0);
  return total;
}

}  // namespace

std::vector<double> project_simplex(const SimplexTarget& t) {
  const std::size_t k = t.v.size();
  if (t.mass <= 0.0 || t.upper <= 0.0) throw std::invalid_argument("project_simplex: mass and upper must be positive");
  if (static_cast<double>(k) * t.upper < t.mass) throw std::invalid_argument("project_simplex: infeasible (k * upper < mass)");
  require_finite(t.v, "project_simplex");
  if (k == 1) return {t.mass};

  auto mass_at = [&](double tau) {
    double total = 0.0;
    for (double x : t.v) total += clip(x - tau, 0.0, t.upper);
    return total;
  };

  std::vector<double> breaks;
  breaks.reserve(2 * k);
  for (double x : t.v) {
    breaks.push_back(x);
    breaks.push_back(x - t.upper);
  }
  std::sort(breaks.begin(), breaks.end());

  // First breakpoint whose mass drops to the target or below.
  std::size_t lo = 0;
  std::size_t hi = breaks.size() - 1;  // mass_at(max v) == 0 < mass
  if (mass_at(breaks[0]) <= t.mass) return std::vector<double>(k, t.upper);
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (mass_at(breaks[mid]) <= t.mass) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  const double tau_lo = breaks[lo];
  const double tau_hi = breaks[hi];
  const double probe = 0.5 * (tau_lo + tau_hi);
  double free_sum = 0.0;
  std::size_t free_count = 0;
  std::size_t upper_count = 0;
  for (double x : t.v) {
    if (x - probe >= t.upper) {
      ++upper_count;
    } else if (x - probe > 0.0) {
      free_sum += x;
      ++free_count;
    }
  }
  double tau = tau_hi;
  if (free_count > 0) {
    tau = (free_sum + static_cast<double>(upper_count) * t.upper - t.mass) / static_cast<double>(free_count);
    tau = clip(tau, tau_lo, tau_hi);
  }
  std::vector<double> p(k);
  for (std::size_t i = 0; i < k; ++i) p[i] = clip(t.v[i] - tau, 0.0, t.upper);
  return p;
}

StructureVec project_dep(std::span<const double> p_hat, const ArcIndexer& indexer) {
  if (p_hat.size() != indexer.size()) throw std::invalid_argument("project_dep: dimension mismatch");
  StructureVec out{std::vector<double>(p_hat.size(), 0.0), StructureKind::kRelaxed};
  const auto width = static_cast<std::size_t>(indexer.heads_per_mod());
  if (width == 0) return out;
  for (int j = 1; j <= indexer.length(); ++j) {
    const std::size_t begin = indexer.block_begin(j);
    SimplexTarget target{std::vector<double>(p_hat.begin() + static_cast<std::ptrdiff_t>(begin),
                                             p_hat.begin() + static_cast<std::ptrdiff_t>(begin + width))};
    const auto block = project_simplex(target);
    std::copy(block.begin(), block.end(), out.values.begin() + static_cast<std::ptrdiff_t>(begin));
  }
  return out;
}

std::vector<double> project_arc_labels(double unlabeled, std::span<const double> labeled) {
  require_finite(labeled, "project_arc_labels");
  if (!std::isfinite(unlabeled)) throw std::invalid_argument("project_arc_labels: non-finite input");
  const double a = unlabeled;
  double lo = -a - 1.0;
  double hi = 1.0 - a;
  for (double b : labeled) {
    lo = std::min(lo, b - 1.0);
    hi = std::max(hi, b);
  }
  for (int it = 0; it < 200 && hi - lo > 1e-10; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (coupling_residual(a, labeled, mid) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  double lambda = 0.5 * (lo + hi);

  // Exact solve on the active set identified by bisection.
  double num = 0.0;
  double den = 0.0;
  for (double b : labeled) {
    const double x = b - lambda;
    if (x >= 1.0) {
      num += 1.0;
    } else if (x > 0.0) {
      num += b;
      den += 1.0;
    }
  }
  const double u = a + lambda;
  if (u >= 1.0) {
    num -= 1.0;
  } else if (u > 0.0) {
    num -= a;
    den += 1.0;
  }
  if (den > 0.0) {
    const double polished = num / den;
    if (std::abs(coupling_residual(a, labeled, polished)) <= std::abs(coupling_residual(a, labeled, lambda))) {
      lambda = polished;
    }
  }

  std::vector<double> out;
  out.reserve(labeled.size() + 1);
  out.push_back(clip(a + lambda, 0.0, 1.0));
  for (double b : labeled) out.push_back(clip(b - lambda, 0.0, 1.0));
  return out;
}

StructureVec project_sdp(std::span<const double> p_hat, const LabeledArcIndexer& indexer) {
  const std::size_t d = indexer.base().size();
  const auto L = static_cast<std::size_t>(indexer.label_count());
  if (p_hat.size() != d + indexer.size()) throw std::invalid_argument("project_sdp: dimension mismatch");
  StructureVec out{std::vector<double>(p_hat.size(), 0.0), StructureKind::kRelaxed};
  for (std::size_t k = 0; k < d; ++k) {
    const auto arc = project_arc_labels(p_hat[k], p_hat.subspan(d + k * L, L));
    out.values[k] = arc[0];
    std::copy(arc.begin() + 1, arc.end(), out.values.begin() + static_cast<std::ptrdiff_t>(d + k * L));
  }
  return out;
}

namespace {

struct ActiveSet {
  std::vector<int> bound;  // -1 free, 0 at lower, 1 at upper
  std::vector<bool> row_active;
};

// Equality-constrained least squares over the free coordinates; returns
// multipliers for active rows (indexed like cs.rows, zero when inactive).
std::vector<double> solve_on_active_set(std::span<const double> v, const ConstraintSystem& cs,
                                        const ActiveSet& as, std::vector<double>& x) {
  const std::size_t n = cs.dimension;
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < cs.rows.size(); ++r) {
    if (as.row_active[r]) rows.push_back(r);
  }
  for (std::size_t i = 0; i < n; ++i) x[i] = as.bound[i] < 0 ? v[i] : static_cast<double>(as.bound[i]);
  std::vector<double> lambda(cs.rows.size(), 0.0);
  if (rows.empty()) return lambda;

  const auto m = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd a_free = Eigen::MatrixXd::Zero(m, static_cast<Eigen::Index>(n));
  Eigen::VectorXd rhs(m);
  for (Eigen::Index q = 0; q < m; ++q) {
    const auto& row = cs.rows[rows[static_cast<std::size_t>(q)]];
    double fixed = 0.0;
    for (std::size_t c = 0; c < row.cols.size(); ++c) {
      const std::size_t i = row.cols[c];
      if (as.bound[i] < 0) {
        a_free(q, static_cast<Eigen::Index>(i)) += row.coeffs[c];
      } else {
        fixed += row.coeffs[c] * x[i];
      }
    }
    rhs(q) = row.rhs - fixed;
  }
  Eigen::VectorXd v_free = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (as.bound[i] < 0) v_free(static_cast<Eigen::Index>(i)) = v[i];
  }
  const Eigen::MatrixXd gram = a_free * a_free.transpose();
  const Eigen::VectorXd target = a_free * v_free - rhs;
  const Eigen::VectorXd mult = gram.completeOrthogonalDecomposition().solve(target);
  const Eigen::VectorXd shift = a_free.transpose() * mult;
  for (std::size_t i = 0; i < n; ++i) {
    if (as.bound[i] < 0) x[i] = v[i] - shift(static_cast<Eigen::Index>(i));
  }
  for (Eigen::Index q = 0; q < m; ++q) lambda[rows[static_cast<std::size_t>(q)]] = mult(q);
  return lambda;
}

std::vector<double> dykstra(std::span<const double> v, const ConstraintSystem& cs, int max_sweeps) {
  const std::size_t n = cs.dimension;
  const std::size_t sets = cs.rows.size() + 1;
  std::vector<double> x(v.begin(), v.end());
  std::vector<std::vector<double>> incr(sets, std::vector<double>(n, 0.0));
  std::vector<double> z(n);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double change = 0.0;
    for (std::size_t s = 0; s < sets; ++s) {
      for (std::size_t i = 0; i < n; ++i) z[i] = x[i] + incr[s][i];
      std::vector<double> proj = z;
      if (s < cs.rows.size()) {
        const auto& row = cs.rows[s];
        double norm2 = 0.0;
        for (double c : row.coeffs) norm2 += c * c;
        const double r = row.dot(z) - row.rhs;
        if (norm2 > 0.0 && (row.sense == RowSense::kEqual || r > 0.0)) {
          for (std::size_t c = 0; c < row.cols.size(); ++c) proj[row.cols[c]] -= r / norm2 * row.coeffs[c];
        }
      } else if (cs.box) {
        for (double& p : proj) p = clip(p, 0.0, 1.0);
      }
      for (std::size_t i = 0; i < n; ++i) {
        incr[s][i] = z[i] - proj[i];
        change = std::max(change, std::abs(proj[i] - x[i]));
        x[i] = proj[i];
      }
    }
    if (change < 1e-13) break;
  }
  return x;
}

}  // namespace

QpOracleResult generic_qp_oracle(std::span<const double> v, const ConstraintSystem& cs,
                                 const QpOracleOptions& options) {
  const std::size_t n = cs.dimension;
  if (v.size() != n) throw std::invalid_argument("generic_qp_oracle: dimension mismatch");
  if (n > options.max_dimension) throw std::invalid_argument("generic_qp_oracle: dimension too large");
  require_finite(v, "generic_qp_oracle");

  const std::vector<double> warm = dykstra(v, cs, options.max_sweeps);
  constexpr double kSnap = 1e-7;
  ActiveSet as;
  as.bound.assign(n, -1);
  as.row_active.assign(cs.rows.size(), false);
  for (std::size_t i = 0; i < n && cs.box; ++i) {
    if (warm[i] <= kSnap) as.bound[i] = 0;
    if (warm[i] >= 1.0 - kSnap) as.bound[i] = 1;
  }
  for (std::size_t r = 0; r < cs.rows.size(); ++r) {
    as.row_active[r] =
        cs.rows[r].sense == RowSense::kEqual || std::abs(cs.rows[r].dot(warm) - cs.rows[r].rhs) <= kSnap;
  }

  std::vector<double> x(n);
  double residual = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < options.max_active_set_iterations; ++iter) {
    const auto lambda = solve_on_active_set(v, cs, as, x);

    // Primal feasibility of the candidate.
    double primal = 0.0;
    std::size_t worst_coord = n;
    double worst_coord_val = 0.0;
    for (std::size_t i = 0; i < n && cs.box; ++i) {
      if (as.bound[i] >= 0) continue;
      const double viol = std::max(-x[i], x[i] - 1.0);
      if (viol > worst_coord_val) {
        worst_coord_val = viol;
        worst_coord = i;
      }
    }
    primal = std::max(primal, worst_coord_val);
    std::size_t worst_row = cs.rows.size();
    double worst_row_val = 0.0;
    for (std::size_t r = 0; r < cs.rows.size(); ++r) {
      const double res = cs.rows[r].dot(x) - cs.rows[r].rhs;
      const double viol = as.row_active[r] ? std::abs(res) : std::max(res, 0.0);
      if (!as.row_active[r] && viol > worst_row_val) {
        worst_row_val = viol;
        worst_row = r;
      }
      primal = std::max(primal, viol);
    }

    // Dual feasibility: bound multipliers and inequality multipliers.
    std::vector<double> at_lambda(n, 0.0);
    for (std::size_t r = 0; r < cs.rows.size(); ++r) {
      for (std::size_t c = 0; c < cs.rows[r].cols.size(); ++c) {
        at_lambda[cs.rows[r].cols[c]] += cs.rows[r].coeffs[c] * lambda[r];
      }
    }
    double dual = 0.0;
    double stationarity = 0.0;
    std::size_t release_coord = n;
    double release_coord_val = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double grad = x[i] - v[i] + at_lambda[i];
      if (as.bound[i] < 0) {
        stationarity = std::max(stationarity, std::abs(grad));
        continue;
      }
      const double viol = as.bound[i] == 0 ? -grad : grad;
      if (viol > release_coord_val) {
        release_coord_val = viol;
        release_coord = i;
      }
    }
    dual = std::max(dual, release_coord_val);
    std::size_t release_row = cs.rows.size();
    double release_row_val = 0.0;
    for (std::size_t r = 0; r < cs.rows.size(); ++r) {
      if (cs.rows[r].sense == RowSense::kLessEqual && as.row_active[r] && -lambda[r] > release_row_val) {
        release_row_val = -lambda[r];
        release_row = r;
      }
    }
    dual = std::max(dual, release_row_val);

    residual = std::max({primal, dual, stationarity});
    if (residual <= options.kkt_tolerance) {
      for (std::size_t i = 0; i < n && cs.box; ++i) x[i] = clip(x[i], 0.0, 1.0);
      return {x, residual, iter + 1};
    }

    if (worst_coord_val >= worst_row_val && worst_coord < n && worst_coord_val > options.kkt_tolerance) {
      as.bound[worst_coord] = x[worst_coord] < 0.0 ? 0 : 1;
    } else if (worst_row < cs.rows.size() && worst_row_val > options.kkt_tolerance) {
      as.row_active[worst_row] = true;
    } else if (release_coord_val >= release_row_val && release_coord < n) {
      as.bound[release_coord] = -1;
    } else if (release_row < cs.rows.size()) {
      as.row_active[release_row] = false;
    } else {
      break;
    }
  }
  throw std::runtime_error("generic_qp_oracle: active-set iterations did not certify KKT (residual " +
                           std::to_string(residual) + ")");
}

}  // namespace spigot
