#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kanids/core.hpp"
#include "kanids/splines.hpp"

namespace kanids::kan {

double silu(double x);
double silu_derivative(double x);

/// One learnable edge: phi(x) = base_weight * silu(x) + spline_weight * spline(x).
struct EdgeFunction {
  spline::SplineCurve spline;
  double base_weight = 0.0;
  double spline_weight = 1.0;

  double operator()(double x) const;

  bool operator==(const EdgeFunction&) const = default;
};

/// Node layout of one layer. Addition nodes come first; each multiplication
/// node owns `mult_arity` consecutive subnodes after them.
struct LayerSpec {
  std::size_t n_add = 0;
  std::size_t n_mult = 0;
  std::size_t mult_arity = 2;

  std::size_t subnode_count() const noexcept { return n_add + mult_arity * n_mult; }
  std::size_t node_count() const noexcept { return n_add + n_mult; }
  /// Node that subnode `s` feeds.
  std::size_t node_of_subnode(std::size_t s) const noexcept {
    return s < n_add ? s : n_add + (s - n_add) / mult_arity;
  }

  bool operator==(const LayerSpec&) const = default;
};

/// One width-spec entry: a plain count is (count, 0).
struct WidthEntry {
  std::size_t n_add = 0;
  std::size_t n_mult = 0;

  bool operator==(const WidthEntry&) const = default;
};
using WidthSpec = std::vector<WidthEntry>;

/// Parses "10,16,8,2", "10,(16,8),2" or the same wrapped in brackets.
WidthSpec parse_width_spec(const std::string& text);
std::string format_width_spec(const WidthSpec& spec);

struct GridConfig {
  double range_min = -4.0;
  double range_max = 4.0;
  int num_intervals = 5;
  int degree = 3;

  bool operator==(const GridConfig&) const = default;
};

struct KanLayer {
  LayerSpec spec;
  std::size_t in_dim = 0;
  spline::KnotGrid grid;
  /// in_dim x subnode_count, row-major by input index.
  std::vector<EdgeFunction> edges;

  EdgeFunction& edge(std::size_t in, std::size_t sub) { return edges[in * spec.subnode_count() + sub]; }
  const EdgeFunction& edge(std::size_t in, std::size_t sub) const {
    return edges[in * spec.subnode_count() + sub];
  }
  std::size_t out_dim() const noexcept { return spec.node_count(); }

  bool operator==(const KanLayer&) const = default;
};

struct KanNetwork {
  WidthSpec width;
  GridConfig grid;
  std::vector<KanLayer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in_dim; }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }
  std::size_t parameter_count() const;

  bool operator==(const KanNetwork&) const = default;
};

/// Classifier network: the width spec must end with 2 output nodes.
KanNetwork build_network(const WidthSpec& width, const GridConfig& grid, std::uint64_t seed);
/// Same construction without the two-class output constraint.
KanNetwork build_regression_network(const WidthSpec& width, const GridConfig& grid,
                                    std::uint64_t seed);

/// Flat parameter layout: layers in order, edges row-major, and per edge
/// [base_weight, spline_weight, coefficients...].
std::vector<double> flatten_parameters(const KanNetwork& network);
void assign_parameters(KanNetwork& network, std::span<const double> params);
/// Offset of an edge's block inside the flat layout.
std::size_t parameter_offset(const KanNetwork& network, std::size_t layer, std::size_t in,
                             std::size_t sub);

/// Inputs and subnode sums of every layer, kept for the backward pass.
struct ActivationCache {
  std::vector<Matrix> inputs;
  std::vector<Matrix> subnode_sums;
};

struct ForwardPass {
  Matrix logits;
  ActivationCache cache;
};

ForwardPass forward(const KanNetwork& network, const Matrix& batch);
Matrix forward_logits(const KanNetwork& network, const Matrix& batch);

struct LossResult {
  double loss = 0.0;
  Matrix dlogits;
};

/// Mean softmax cross-entropy over rows and its gradient with respect to the logits.
LossResult loss_softmax_xent(const Matrix& logits, std::span<const int> labels);
/// Mean over rows of the summed squared error, and its gradient.
LossResult loss_mse(const Matrix& outputs, const Matrix& targets);

/// Reverse-mode gradients in the flat parameter layout.
std::vector<double> backward(const KanNetwork& network, const ActivationCache& cache,
                             const Matrix& dlogits);

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double learning_rate);

std::uint64_t iteration_count(std::uint64_t n_train, std::uint64_t batch_size,
                              std::uint64_t epochs);

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 128;
  std::size_t epochs = 20;
  std::uint64_t seed = 42;
  std::string device = "cpu";
  std::size_t log_interval = 100;
};

struct LossLogEntry {
  std::uint64_t iteration = 0;
  double mean_batch_loss = 0.0;
};

struct TrainHistory {
  std::vector<LossLogEntry> loss_log;
  std::vector<double> val_accuracy;  // one per epoch, empty without validation data
  std::uint64_t total_iterations = 0;
  double wall_seconds = 0.0;
};

struct LabeledSet {
  const Matrix& features;
  std::span<const int> labels;
};

/// Mini-batch Adam on softmax cross-entropy. Trailing partial batches are dropped.
TrainHistory train(KanNetwork& network, const LabeledSet& train_set, const LabeledSet* val_set,
                   const TrainConfig& config);
/// Mini-batch Adam on squared error against real-valued targets.
TrainHistory train_regression(KanNetwork& network, const Matrix& inputs, const Matrix& targets,
                              const TrainConfig& config);

struct Prediction {
  std::vector<int> labels;
  Matrix probabilities;
};

Prediction predict(const KanNetwork& network, const Matrix& features);
Matrix softmax_rows(const Matrix& logits);

/// Mean |phi(x)| per edge over the batch, scaled so each layer's maximum is 1.
/// Indexed [layer][in * subnode_count + sub].
using EdgeImportance = std::vector<std::vector<double>>;
EdgeImportance edge_importance(const KanNetwork& network, const Matrix& sample_batch);

/// Graphviz digraph of the network; penwidth follows edge importance.
std::string export_dot(const KanNetwork& network, const EdgeImportance& importances,
                       const std::vector<std::string>& feature_names = {});

}  // namespace kanids::kan
