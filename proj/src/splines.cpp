#include "kanids/splines.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

namespace kanids::spline {
namespace {

std::atomic<std::uint64_t> g_saturations{0};

std::size_t find_span(const KnotGrid& grid, double t) {
  const std::size_t p = static_cast<std::size_t>(grid.degree);
  const std::size_t last = grid.basis_count() - 1;
  const double offset = std::floor((t - grid.range_min) / grid.spacing());
  std::size_t span = p + static_cast<std::size_t>(std::max(0.0, offset));
  span = std::min(span, last);
  const auto& u = grid.knots;
  while (span > p && t < u[span]) --span;
  while (span < last && t >= u[span + 1]) ++span;
  return span;
}

// Cox-de Boor triangle for the nonzero window at `span`, raised to `degree`.
void raise_basis(const KnotGrid& grid, std::size_t span, double t, int degree,
                 std::vector<double>& values) {
  const auto& u = grid.knots;
  values.assign(static_cast<std::size_t>(degree) + 1, 0.0);
  thread_local std::vector<double> left, right;
  left.resize(values.size());
  right.resize(values.size());
  values[0] = 1.0;
  for (std::size_t j = 1; j <= static_cast<std::size_t>(degree); ++j) {
    left[j] = t - u[span + 1 - j];
    right[j] = u[span + j] - t;
    double saved = 0.0;
    for (std::size_t r = 0; r < j; ++r) {
      const double temp = values[r] / (right[r + 1] + left[j - r]);
      values[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    values[j] = saved;
  }
}

}  // namespace

KnotGrid make_grid(double range_min, double range_max, int num_intervals, int degree) {
  if (!(range_min < range_max)) {
    throw Error(ErrorCode::invalid_range, "grid range_min must be below range_max");
  }
  if (num_intervals < 1) throw Error(ErrorCode::invalid_argument, "num_intervals must be >= 1");
  if (degree < 0) throw Error(ErrorCode::invalid_argument, "degree must be >= 0");
  KnotGrid grid;
  grid.range_min = range_min;
  grid.range_max = range_max;
  grid.num_intervals = num_intervals;
  grid.degree = degree;
  const double h = (range_max - range_min) / num_intervals;
  const int count = num_intervals + 2 * degree + 1;
  grid.knots.resize(static_cast<std::size_t>(count));
  for (int j = 0; j < count; ++j) {
    grid.knots[static_cast<std::size_t>(j)] = range_min + (j - degree) * h;
  }
  // Pin the domain ends exactly.
  grid.knots[static_cast<std::size_t>(degree)] = range_min;
  grid.knots[static_cast<std::size_t>(degree + num_intervals)] = range_max;
  return grid;
}

void local_basis(const KnotGrid& grid, double t, LocalBasis& out, bool with_derivatives,
                 bool* saturated) {
  bool clamped = false;
  if (t < grid.range_min) {
    t = grid.range_min;
    clamped = true;
  } else if (t > grid.range_max) {
    t = grid.range_max;
    clamped = true;
  } else if (std::isnan(t)) {
    t = grid.range_min;
    clamped = true;
  }
  if (clamped) record_saturation();
  if (saturated) *saturated = clamped;

  const std::size_t p = static_cast<std::size_t>(grid.degree);
  const std::size_t span = find_span(grid, t);
  out.first = span - p;

  if (!with_derivatives || p == 0) {
    raise_basis(grid, span, t, grid.degree, out.values);
    if (with_derivatives) out.derivatives.assign(p + 1, 0.0);
    return;
  }

  thread_local std::vector<double> lower;
  raise_basis(grid, span, t, grid.degree - 1, lower);
  raise_basis(grid, span, t, grid.degree, out.values);
  out.derivatives.assign(p + 1, 0.0);
  if (clamped) return;
  const auto& u = grid.knots;
  const double deg = static_cast<double>(p);
  for (std::size_t j = 0; j <= p; ++j) {
    const std::size_t k = out.first + j;
    double d = 0.0;
    if (j >= 1) d += deg / (u[k + p] - u[k]) * lower[j - 1];
    if (j <= p - 1) d -= deg / (u[k + p + 1] - u[k + 1]) * lower[j];
    out.derivatives[j] = d;
  }
}

std::vector<double> basis_values(const KnotGrid& grid, double t) {
  LocalBasis local;
  local_basis(grid, t, local, false);
  std::vector<double> full(grid.basis_count(), 0.0);
  for (std::size_t j = 0; j < local.values.size(); ++j) full[local.first + j] = local.values[j];
  return full;
}

std::vector<double> basis_derivatives(const KnotGrid& grid, double t) {
  if (grid.degree < 1) {
    throw Error(ErrorCode::unsupported_degree, "basis derivatives need degree >= 1");
  }
  LocalBasis local;
  local_basis(grid, t, local, true);
  std::vector<double> full(grid.basis_count(), 0.0);
  for (std::size_t j = 0; j < local.derivatives.size(); ++j) {
    full[local.first + j] = local.derivatives[j];
  }
  return full;
}

double eval_curve(const SplineCurve& curve, double t) {
  LocalBasis local;
  local_basis(curve.grid, t, local, false);
  double sum = 0.0;
  for (std::size_t j = 0; j < local.values.size(); ++j) {
    sum += curve.coefficients[local.first + j] * local.values[j];
  }
  return sum;
}

double eval_curve_derivative(const SplineCurve& curve, double t) {
  if (curve.grid.degree < 1) {
    throw Error(ErrorCode::unsupported_degree, "curve derivative needs degree >= 1");
  }
  LocalBasis local;
  local_basis(curve.grid, t, local, true);
  double sum = 0.0;
  for (std::size_t j = 0; j < local.derivatives.size(); ++j) {
    sum += curve.coefficients[local.first + j] * local.derivatives[j];
  }
  return sum;
}

SplineCurve least_squares_fit(const KnotGrid& grid,
                              std::span<const std::pair<double, double>> samples, double ridge) {
  const std::size_t k = grid.basis_count();
  std::vector<double> locations;
  locations.reserve(samples.size());
  for (const auto& [t, y] : samples) {
    locations.push_back(std::clamp(t, grid.range_min, grid.range_max));
  }
  std::sort(locations.begin(), locations.end());
  const auto distinct = static_cast<std::size_t>(
      std::unique(locations.begin(), locations.end()) - locations.begin());
  if (distinct < k) {
    throw Error(ErrorCode::underdetermined,
                std::to_string(distinct) + " distinct sample locations for " + std::to_string(k) +
                    " basis functions");
  }

  Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k),
                                                 static_cast<Eigen::Index>(k));
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
  LocalBasis local;
  for (const auto& [t, y] : samples) {
    local_basis(grid, t, local, false);
    for (std::size_t a = 0; a < local.values.size(); ++a) {
      const auto ia = static_cast<Eigen::Index>(local.first + a);
      rhs(ia) += local.values[a] * y;
      for (std::size_t b = 0; b < local.values.size(); ++b) {
        normal(ia, static_cast<Eigen::Index>(local.first + b)) += local.values[a] * local.values[b];
      }
    }
  }
  normal.diagonal().array() += ridge;
  Eigen::VectorXd solution = normal.ldlt().solve(rhs);

  SplineCurve curve;
  curve.grid = grid;
  curve.coefficients.assign(solution.data(), solution.data() + solution.size());
  return curve;
}

SplineCurve extend_grid(const SplineCurve& curve, double new_min, double new_max) {
  const KnotGrid& old = curve.grid;
  if (new_min > old.range_min || new_max < old.range_max) {
    throw Error(ErrorCode::shrink_not_allowed, "extended range must contain the current range");
  }
  if (new_min == old.range_min && new_max == old.range_max) return curve;

  KnotGrid grid = make_grid(new_min, new_max, old.num_intervals, old.degree);

  // Outside the old domain the curve continues along its boundary tangent.
  const double lo_value = eval_curve(curve, old.range_min);
  const double hi_value = eval_curve(curve, old.range_max);
  const double lo_slope = old.degree > 0 ? eval_curve_derivative(curve, old.range_min) : 0.0;
  const double hi_slope = old.degree > 0 ? eval_curve_derivative(curve, old.range_max) : 0.0;

  const std::size_t count = 64 * grid.basis_count() + 1;
  std::vector<std::pair<double, double>> samples;
  samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double t = new_min + (new_max - new_min) * static_cast<double>(i) /
                                   static_cast<double>(count - 1);
    double y;
    if (t < old.range_min) {
      y = lo_value + lo_slope * (t - old.range_min);
    } else if (t > old.range_max) {
      y = hi_value + hi_slope * (t - old.range_max);
    } else {
      y = eval_curve(curve, t);
    }
    samples.emplace_back(t, y);
  }
  return least_squares_fit(grid, samples);
}

std::uint64_t saturation_count() { return g_saturations.load(std::memory_order_relaxed); }
void reset_saturation_count() { g_saturations.store(0, std::memory_order_relaxed); }
void record_saturation(std::uint64_t n) { g_saturations.fetch_add(n, std::memory_order_relaxed); }

}  // namespace kanids::spline
