#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "kanids/core.hpp"

namespace kanids::spline {

/// Uniform knot vector over [range_min, range_max] with `degree` extra knots
/// on each side. Holds num_intervals + 2*degree + 1 knots and
/// num_intervals + degree basis functions.
struct KnotGrid {
  double range_min = -4.0;
  double range_max = 4.0;
  int num_intervals = 5;
  int degree = 3;
  std::vector<double> knots;

  std::size_t basis_count() const noexcept {
    return static_cast<std::size_t>(num_intervals + degree);
  }
  double spacing() const noexcept { return (range_max - range_min) / num_intervals; }

  bool operator==(const KnotGrid&) const = default;
};

struct SplineCurve {
  KnotGrid grid;
  std::vector<double> coefficients;

  bool operator==(const SplineCurve&) const = default;
};

KnotGrid make_grid(double range_min, double range_max, int num_intervals, int degree);

/// Nonzero window of the basis at one point: values[j] belongs to basis
/// function `first + j`, for j in [0, degree].
struct LocalBasis {
  std::size_t first = 0;
  std::vector<double> values;
  std::vector<double> derivatives;  // empty unless requested
};

/// Evaluates the degree+1 basis functions that can be nonzero at t. t is
/// clamped into the grid range first; `saturated` reports whether that happened.
void local_basis(const KnotGrid& grid, double t, LocalBasis& out, bool with_derivatives,
                 bool* saturated = nullptr);

/// Full Cox-de Boor basis vector of length basis_count().
std::vector<double> basis_values(const KnotGrid& grid, double t);
/// d/dt of each basis function. Zero outside the grid range (inputs are clamped).
std::vector<double> basis_derivatives(const KnotGrid& grid, double t);

double eval_curve(const SplineCurve& curve, double t);
double eval_curve_derivative(const SplineCurve& curve, double t);

/// Ridge-damped normal-equation fit of the grid's basis to (t, y) samples.
SplineCurve least_squares_fit(const KnotGrid& grid,
                              std::span<const std::pair<double, double>> samples,
                              double ridge = 1e-8);

/// Refits the curve on a wider grid with the same interval count and degree.
SplineCurve extend_grid(const SplineCurve& curve, double new_min, double new_max);

/// Number of evaluations whose input was clamped into the grid range since
/// the last reset. Shared across threads.
std::uint64_t saturation_count();
void reset_saturation_count();
void record_saturation(std::uint64_t n = 1);

}  // namespace kanids::spline
