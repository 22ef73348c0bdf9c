#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kanids/core.hpp"
#include "kanids/kan.hpp"

namespace kanids::symbolic {

/// y = a * g(b * x + c) + d. Listed in tie-break order.
enum class Primitive { linear, sin, cos, square };
inline constexpr std::array<Primitive, 4> kPrimitives = {Primitive::linear, Primitive::sin, Primitive::cos,
                                                         Primitive::square};

std::string to_string(Primitive p);
Primitive parse_primitive(const std::string& name);

struct PrimitiveFit {
  Primitive primitive = Primitive::linear;
  double a = 0.0, b = 1.0, c = 0.0, d = 0.0;
  double r_squared = 0.0;

  double operator()(double x) const;
};

using Samples = std::vector<std::pair<double, double>>;

/// Grid search over (b, c) with closed-form (a, d), then coordinate-descent refinement.
/// Linear fits keep b = 1, c = 0. Periodic fits are reported with a >= 0 and c in [-pi, pi).
PrimitiveFit fit_primitive(std::span<const std::pair<double, double>> samples, Primitive primitive);

/// 1 - SS_res / SS_tot, or 1 when both sums are below 1e-12.
double r_squared(std::span<const std::pair<double, double>> samples, const PrimitiveFit& fit);

struct EdgeId {
  std::size_t layer = 0;
  std::size_t in = 0;
  std::size_t sub = 0;
};

/// (x, phi(x)) for one edge over the batch, sorted by x, with x values closer
/// than 1e-9 merged into the first occurrence.
Samples sample_edge(const kan::KanNetwork& network, const EdgeId& edge, const Matrix& batch);
Samples sample_edge(const kan::KanNetwork& network, const kan::ActivationCache& cache, const EdgeId& edge);

struct SymbolicEdge {
  PrimitiveFit fit;
  EdgeId source;
  std::size_t node = 0;
  bool low_fidelity = false;
  /// r^2 of every primitive that could be fitted, in library order.
  std::array<std::optional<double>, 4> candidate_r2{};
  /// Set when fitting failed and the edge was reduced to a constant or a plain linear fit.
  std::string error;
};

struct SymbolicLayer {
  kan::LayerSpec spec;
  std::size_t in_dim = 0;
  std::vector<SymbolicEdge> edges;  // in_dim x subnode_count, row-major

  const SymbolicEdge& edge(std::size_t in, std::size_t sub) const {
    return edges[in * spec.subnode_count() + sub];
  }
  std::size_t out_dim() const { return spec.node_count(); }
};

struct SymbolicNetwork {
  std::vector<SymbolicLayer> layers;
  double r2_threshold = 0.9;
  std::vector<std::string> input_names;
  std::vector<std::string> output_names;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in_dim; }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }
  Matrix evaluate(const Matrix& inputs) const;
};

struct SnapOptions {
  double r2_threshold = 0.9;
  /// 0 picks the hardware concurrency. Output does not depend on it.
  std::size_t threads = 0;
};

SymbolicNetwork snap_network(const kan::KanNetwork& network, const Matrix& batch, const SnapOptions& options = {});

/// Human-readable formula with coefficients rounded to `precision` decimals.
std::string emit_formula(const SymbolicNetwork& network, int precision = 4);

/// Prefix-notation expressions at full precision: `def NAME expr` lines for
/// shared terms, then one `class K expr` line per output.
std::string emit_prefix(const SymbolicNetwork& network);

/// Per-edge table: location, chosen primitive, coefficients, r^2 of every candidate.
std::string edge_table_csv(const SymbolicNetwork& network);

}  // namespace kanids::symbolic
