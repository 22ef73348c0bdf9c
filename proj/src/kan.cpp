#include "kanids/kan.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace kanids::kan {
namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::size_t edge_block(const KanLayer& layer) { return layer.grid.basis_count() + 2; }

void validate_width(const WidthSpec& width) {
  if (width.size() < 2) throw Error(ErrorCode::invalid_spec, "width spec needs input and output entries");
  if (width.front().n_mult != 0 || width.front().n_add < 1) {
    throw Error(ErrorCode::invalid_spec, "input entry must be a positive plain count");
  }
  if (width.back().n_mult != 0) {
    throw Error(ErrorCode::invalid_spec, "output entry must be a plain count");
  }
  for (const auto& entry : width) {
    if (entry.n_add + entry.n_mult < 1) {
      throw Error(ErrorCode::invalid_spec, "every layer needs at least one node");
    }
  }
}

KanNetwork build_layers(const WidthSpec& width, const GridConfig& grid, std::uint64_t seed) {
  validate_width(width);
  KanNetwork network;
  network.width = width;
  network.grid = grid;
  const spline::KnotGrid knots =
      spline::make_grid(grid.range_min, grid.range_max, grid.num_intervals, grid.degree);
  const std::size_t k = knots.basis_count();
  Rng rng(seed);
  for (std::size_t l = 1; l < width.size(); ++l) {
    KanLayer layer;
    layer.spec = LayerSpec{width[l].n_add, width[l].n_mult, 2};
    layer.in_dim = width[l - 1].n_add + width[l - 1].n_mult;
    layer.grid = knots;
    const std::size_t count = layer.in_dim * layer.spec.subnode_count();
    layer.edges.reserve(count);
    const double coef_std = 0.1 / static_cast<double>(k);
    const double base_std = 1.0 / std::sqrt(static_cast<double>(layer.in_dim));
    for (std::size_t e = 0; e < count; ++e) {
      EdgeFunction edge;
      edge.spline.grid = knots;
      edge.spline.coefficients.resize(k);
      for (auto& c : edge.spline.coefficients) c = rng.normal(0.0, coef_std);
      edge.base_weight = rng.normal(0.0, base_std);
      edge.spline_weight = 1.0;
      layer.edges.push_back(std::move(edge));
    }
    network.layers.push_back(std::move(layer));
  }
  return network;
}

void check_batch(const KanNetwork& network, const Matrix& batch) {
  if (batch.cols() != network.input_dim()) {
    throw Error(ErrorCode::shape_mismatch, "batch has " + std::to_string(batch.cols()) +
                                               " columns, network expects " +
                                               std::to_string(network.input_dim()));
  }
}

// Runs one layer; writes subnode sums and node outputs.
void layer_forward(const KanLayer& layer, const Matrix& in, Matrix& sums, Matrix& out) {
  const std::size_t m = in.rows();
  const std::size_t subs = layer.spec.subnode_count();
  sums = Matrix(m, subs);
  out = Matrix(m, layer.out_dim());
  spline::LocalBasis basis;
  for (std::size_t r = 0; r < m; ++r) {
    auto srow = sums.row(r);
    for (std::size_t i = 0; i < layer.in_dim; ++i) {
      const double x = in(r, i);
      spline::local_basis(layer.grid, x, basis, false);
      const double base = silu(x);
      for (std::size_t s = 0; s < subs; ++s) {
        const EdgeFunction& e = layer.edges[i * subs + s];
        double spl = 0.0;
        for (std::size_t j = 0; j < basis.values.size(); ++j) {
          spl += e.spline.coefficients[basis.first + j] * basis.values[j];
        }
        srow[s] += e.base_weight * base + e.spline_weight * spl;
      }
    }
    for (std::size_t n = 0; n < layer.spec.n_add; ++n) out(r, n) = srow[n];
    for (std::size_t n = 0; n < layer.spec.n_mult; ++n) {
      const std::size_t first = layer.spec.n_add + n * layer.spec.mult_arity;
      double prod = 1.0;
      for (std::size_t a = 0; a < layer.spec.mult_arity; ++a) prod *= srow[first + a];
      out(r, layer.spec.n_add + n) = prod;
    }
  }
}

struct Objective {
  const Matrix& inputs;
  // Exactly one of these is set.
  std::span<const int> labels;
  const Matrix* targets = nullptr;

  LossResult evaluate(const Matrix& outputs, std::span<const std::size_t> rows) const {
    if (targets) return loss_mse(outputs, targets->take_rows(rows));
    std::vector<int> batch_labels(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) batch_labels[i] = labels[rows[i]];
    return loss_softmax_xent(outputs, batch_labels);
  }
};

double accuracy_of(const KanNetwork& network, const LabeledSet& set) {
  if (set.features.rows() == 0) return 0.0;
  const Prediction pred = predict(network, set.features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.labels.size(); ++i) correct += pred.labels[i] == set.labels[i];
  return static_cast<double>(correct) / static_cast<double>(pred.labels.size());
}

TrainHistory run_training(KanNetwork& network, const Objective& objective,
                          const LabeledSet* val_set, const TrainConfig& config) {
  if (!(config.learning_rate > 0.0)) throw Error(ErrorCode::invalid_argument, "learning_rate must be > 0");
  if (config.batch_size < 1) throw Error(ErrorCode::invalid_argument, "batch_size must be >= 1");
  if (config.epochs < 1) throw Error(ErrorCode::invalid_argument, "epochs must be >= 1");
  check_batch(network, objective.inputs);

  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = objective.inputs.rows();
  TrainHistory history;
  history.total_iterations = iteration_count(n, config.batch_size, config.epochs);
  const std::size_t per_epoch = n / config.batch_size;
  const std::size_t log_every = std::max<std::size_t>(1, config.log_interval);

  std::vector<double> params = flatten_parameters(network);
  AdamState adam;
  std::vector<std::size_t> order(n);
  std::vector<std::size_t> rows(config.batch_size);
  double interval_loss = 0.0;
  std::size_t interval_count = 0;
  std::uint64_t iteration = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(config.seed + epoch);
    rng.shuffle(order);
    for (std::size_t b = 0; b < per_epoch; ++b) {
      std::copy_n(order.begin() + static_cast<std::ptrdiff_t>(b * config.batch_size),
                  config.batch_size, rows.begin());
      const Matrix batch = objective.inputs.take_rows(rows);
      ForwardPass pass = forward(network, batch);
      LossResult loss = objective.evaluate(pass.logits, rows);
      if (!std::isfinite(loss.loss)) {
        throw Error(ErrorCode::non_finite_loss,
                    "loss became non-finite at iteration " + std::to_string(iteration + 1) +
                        " (epoch " + std::to_string(epoch + 1) + ")");
      }
      const std::vector<double> grads = backward(network, pass.cache, loss.dlogits);
      adam_step(params, grads, adam, config.learning_rate);
      assign_parameters(network, params);

      ++iteration;
      interval_loss += loss.loss;
      ++interval_count;
      if (iteration % log_every == 0) {
        history.loss_log.push_back({iteration, interval_loss / static_cast<double>(interval_count)});
        interval_loss = 0.0;
        interval_count = 0;
      }
    }
    if (val_set && val_set->features.rows() > 0) {
      history.val_accuracy.push_back(accuracy_of(network, *val_set));
    }
  }
  if (interval_count > 0) {
    history.loss_log.push_back({iteration, interval_loss / static_cast<double>(interval_count)});
  }
  history.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return history;
}

}  // namespace

double silu(double x) { return x * sigmoid(x); }

double silu_derivative(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

double EdgeFunction::operator()(double x) const {
  return base_weight * silu(x) + spline_weight * spline::eval_curve(spline, x);
}

WidthSpec parse_width_spec(const std::string& text) {
  std::string s;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(c);
  }
  if (s.size() >= 2 && s.front() == '[' && s.back() == ']') s = s.substr(1, s.size() - 2);
  if (s.empty()) throw Error(ErrorCode::invalid_spec, "empty width spec");

  WidthSpec spec;
  std::size_t pos = 0;
  auto read_count = [&](std::size_t& out) {
    const std::size_t begin = pos;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
    if (begin == pos) throw Error(ErrorCode::invalid_spec, "expected a count in width spec '" + text + "'");
    out = std::stoul(s.substr(begin, pos - begin));
  };
  while (pos < s.size()) {
    WidthEntry entry;
    if (s[pos] == '(' || s[pos] == '[') {
      const char close = s[pos] == '(' ? ')' : ']';
      ++pos;
      read_count(entry.n_add);
      if (pos >= s.size() || s[pos] != ',') throw Error(ErrorCode::invalid_spec, "expected ',' inside pair");
      ++pos;
      read_count(entry.n_mult);
      if (pos >= s.size() || s[pos] != close) throw Error(ErrorCode::invalid_spec, "unterminated pair");
      ++pos;
    } else {
      read_count(entry.n_add);
    }
    spec.push_back(entry);
    if (pos < s.size()) {
      if (s[pos] != ',') throw Error(ErrorCode::invalid_spec, "expected ',' in width spec '" + text + "'");
      ++pos;
      if (pos == s.size()) throw Error(ErrorCode::invalid_spec, "trailing ',' in width spec");
    }
  }
  return spec;
}

std::string format_width_spec(const WidthSpec& spec) {
  std::string out = "[";
  for (std::size_t i = 0; i < spec.size(); ++i) {
    if (i) out += ",";
    if (spec[i].n_mult == 0) {
      out += std::to_string(spec[i].n_add);
    } else {
      out += "(" + std::to_string(spec[i].n_add) + "," + std::to_string(spec[i].n_mult) + ")";
    }
  }
  return out + "]";
}

std::size_t KanNetwork::parameter_count() const {
  std::size_t total = 0;
  for (const auto& layer : layers) total += layer.edges.size() * edge_block(layer);
  return total;
}

KanNetwork build_network(const WidthSpec& width, const GridConfig& grid, std::uint64_t seed) {
  if (width.empty() || width.back() != WidthEntry{2, 0}) {
    throw Error(ErrorCode::invalid_spec, "classifier width spec must end with 2 output nodes");
  }
  return build_layers(width, grid, seed);
}

KanNetwork build_regression_network(const WidthSpec& width, const GridConfig& grid,
                                    std::uint64_t seed) {
  return build_layers(width, grid, seed);
}

std::vector<double> flatten_parameters(const KanNetwork& network) {
  std::vector<double> params;
  params.reserve(network.parameter_count());
  for (const auto& layer : network.layers) {
    for (const auto& e : layer.edges) {
      params.push_back(e.base_weight);
      params.push_back(e.spline_weight);
      params.insert(params.end(), e.spline.coefficients.begin(), e.spline.coefficients.end());
    }
  }
  return params;
}

void assign_parameters(KanNetwork& network, std::span<const double> params) {
  if (params.size() != network.parameter_count()) {
    throw Error(ErrorCode::shape_mismatch, "parameter vector length does not match network");
  }
  std::size_t pos = 0;
  for (auto& layer : network.layers) {
    for (auto& e : layer.edges) {
      e.base_weight = params[pos++];
      e.spline_weight = params[pos++];
      for (auto& c : e.spline.coefficients) c = params[pos++];
    }
  }
}

std::size_t parameter_offset(const KanNetwork& network, std::size_t layer, std::size_t in,
                             std::size_t sub) {
  if (layer >= network.layers.size()) throw Error(ErrorCode::unknown_edge, "layer out of range");
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layer; ++l) {
    offset += network.layers[l].edges.size() * edge_block(network.layers[l]);
  }
  const KanLayer& target = network.layers[layer];
  if (in >= target.in_dim || sub >= target.spec.subnode_count()) {
    throw Error(ErrorCode::unknown_edge, "edge index out of range");
  }
  return offset + (in * target.spec.subnode_count() + sub) * edge_block(target);
}

ForwardPass forward(const KanNetwork& network, const Matrix& batch) {
  check_batch(network, batch);
  ForwardPass pass;
  Matrix current = batch;
  for (const auto& layer : network.layers) {
    Matrix sums, out;
    layer_forward(layer, current, sums, out);
    pass.cache.inputs.push_back(std::move(current));
    pass.cache.subnode_sums.push_back(std::move(sums));
    current = std::move(out);
  }
  pass.logits = std::move(current);
  return pass;
}

Matrix forward_logits(const KanNetwork& network, const Matrix& batch) {
  check_batch(network, batch);
  Matrix current = batch;
  for (const auto& layer : network.layers) {
    Matrix sums, out;
    layer_forward(layer, current, sums, out);
    current = std::move(out);
  }
  return current;
}

LossResult loss_softmax_xent(const Matrix& logits, std::span<const int> labels) {
  if (logits.rows() != labels.size()) {
    throw Error(ErrorCode::shape_mismatch, "logit rows and label count differ");
  }
  if (logits.rows() == 0) throw Error(ErrorCode::empty_batch, "no rows");
  const std::size_t m = logits.rows();
  const std::size_t c = logits.cols();
  LossResult result;
  result.dlogits = Matrix(m, c);
  double total = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw Error(ErrorCode::invalid_label, "label " + std::to_string(y) + " at row " + std::to_string(r));
    }
    auto z = logits.row(r);
    const double peak = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (double v : z) denom += std::exp(v - peak);
    const double log_denom = std::log(denom);
    total += log_denom - (z[static_cast<std::size_t>(y)] - peak);
    for (std::size_t j = 0; j < c; ++j) {
      const double p = std::exp(z[j] - peak - log_denom);
      result.dlogits(r, j) = (p - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0)) / static_cast<double>(m);
    }
  }
  result.loss = total / static_cast<double>(m);
  return result;
}

LossResult loss_mse(const Matrix& outputs, const Matrix& targets) {
  if (outputs.rows() != targets.rows() || outputs.cols() != targets.cols()) {
    throw Error(ErrorCode::shape_mismatch, "outputs and targets differ in shape");
  }
  if (outputs.rows() == 0) throw Error(ErrorCode::empty_batch, "no rows");
  const double m = static_cast<double>(outputs.rows());
  LossResult result;
  result.dlogits = Matrix(outputs.rows(), outputs.cols());
  double total = 0.0;
  for (std::size_t r = 0; r < outputs.rows(); ++r) {
    for (std::size_t j = 0; j < outputs.cols(); ++j) {
      const double diff = outputs(r, j) - targets(r, j);
      total += diff * diff;
      result.dlogits(r, j) = 2.0 * diff / m;
    }
  }
  result.loss = total / m;
  return result;
}

std::vector<double> backward(const KanNetwork& network, const ActivationCache& cache,
                             const Matrix& dlogits) {
  const std::size_t depth = network.layers.size();
  if (cache.inputs.size() != depth || cache.subnode_sums.size() != depth) {
    throw Error(ErrorCode::stale_cache, "cache depth does not match network");
  }
  const std::size_t m = dlogits.rows();
  std::vector<std::size_t> layer_offset(depth, 0);
  for (std::size_t l = 1; l < depth; ++l) {
    layer_offset[l] = layer_offset[l - 1] +
                      network.layers[l - 1].edges.size() * edge_block(network.layers[l - 1]);
  }
  std::vector<double> grads(network.parameter_count(), 0.0);

  Matrix d_out = dlogits;
  spline::LocalBasis basis;
  std::vector<double> d_sub;
  for (std::size_t l = depth; l-- > 0;) {
    const KanLayer& layer = network.layers[l];
    const Matrix& in = cache.inputs[l];
    const Matrix& sums = cache.subnode_sums[l];
    const std::size_t subs = layer.spec.subnode_count();
    if (in.rows() != m || in.cols() != layer.in_dim || sums.rows() != m || sums.cols() != subs ||
        d_out.cols() != layer.out_dim() || d_out.rows() != m) {
      throw Error(ErrorCode::stale_cache, "cached activations disagree with layer " + std::to_string(l));
    }
    const std::size_t block = edge_block(layer);
    Matrix d_in(m, layer.in_dim);
    d_sub.assign(subs, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
      auto srow = sums.row(r);
      for (std::size_t n = 0; n < layer.spec.n_add; ++n) d_sub[n] = d_out(r, n);
      for (std::size_t n = 0; n < layer.spec.n_mult; ++n) {
        const std::size_t first = layer.spec.n_add + n * layer.spec.mult_arity;
        const double upstream = d_out(r, layer.spec.n_add + n);
        for (std::size_t a = 0; a < layer.spec.mult_arity; ++a) {
          double others = 1.0;
          for (std::size_t b = 0; b < layer.spec.mult_arity; ++b) {
            if (b != a) others *= srow[first + b];
          }
          d_sub[first + a] = upstream * others;
        }
      }
      for (std::size_t i = 0; i < layer.in_dim; ++i) {
        const double x = in(r, i);
        spline::local_basis(layer.grid, x, basis, layer.grid.degree >= 1);
        const double base = silu(x);
        const double dbase = silu_derivative(x);
        double dx = 0.0;
        for (std::size_t s = 0; s < subs; ++s) {
          const double g = d_sub[s];
          if (g == 0.0) continue;
          const EdgeFunction& e = layer.edges[i * subs + s];
          const std::size_t off = layer_offset[l] + (i * subs + s) * block;
          double spl = 0.0;
          double dspl = 0.0;
          for (std::size_t j = 0; j < basis.values.size(); ++j) {
            const double c = e.spline.coefficients[basis.first + j];
            spl += c * basis.values[j];
            if (!basis.derivatives.empty()) dspl += c * basis.derivatives[j];
            grads[off + 2 + basis.first + j] += g * e.spline_weight * basis.values[j];
          }
          grads[off] += g * base;
          grads[off + 1] += g * spl;
          dx += g * (e.base_weight * dbase + e.spline_weight * dspl);
        }
        d_in(r, i) = dx;
      }
    }
    d_out = std::move(d_in);
  }
  return grads;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double learning_rate) {
  if (params.size() != grads.size()) {
    throw Error(ErrorCode::shape_mismatch, "parameter and gradient lengths differ");
  }
  if (state.first_moment.empty() && state.second_moment.empty()) {
    state.first_moment.assign(params.size(), 0.0);
    state.second_moment.assign(params.size(), 0.0);
  }
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw Error(ErrorCode::shape_mismatch, "optimizer state does not match parameters");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.first_moment[i] = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g;
    state.second_moment[i] = state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.first_moment[i] / correction1;
    const double v_hat = state.second_moment[i] / correction2;
    params[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

std::uint64_t iteration_count(std::uint64_t n_train, std::uint64_t batch_size,
                              std::uint64_t epochs) {
  if (batch_size == 0) throw Error(ErrorCode::invalid_argument, "batch size must be >= 1");
  if (batch_size > n_train) {
    throw Error(ErrorCode::batch_too_large, "batch size " + std::to_string(batch_size) +
                                                " exceeds " + std::to_string(n_train) + " training rows");
  }
  return (n_train / batch_size) * epochs;
}

TrainHistory train(KanNetwork& network, const LabeledSet& train_set, const LabeledSet* val_set,
                   const TrainConfig& config) {
  if (train_set.features.rows() != train_set.labels.size()) {
    throw Error(ErrorCode::shape_mismatch, "feature rows and label count differ");
  }
  for (int y : train_set.labels) {
    if (y != 0 && y != 1) throw Error(ErrorCode::invalid_label, "labels must be 0 or 1");
  }
  if (val_set) {
    check_batch(network, val_set->features);
    if (val_set->features.rows() != val_set->labels.size()) {
      throw Error(ErrorCode::shape_mismatch, "validation rows and label count differ");
    }
  }
  Objective objective{train_set.features, train_set.labels, nullptr};
  return run_training(network, objective, val_set, config);
}

TrainHistory train_regression(KanNetwork& network, const Matrix& inputs, const Matrix& targets,
                              const TrainConfig& config) {
  if (inputs.rows() != targets.rows() || targets.cols() != network.output_dim()) {
    throw Error(ErrorCode::shape_mismatch, "targets do not match inputs or network outputs");
  }
  Objective objective{inputs, {}, &targets};
  return run_training(network, objective, nullptr, config);
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix probs(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto z = logits.row(r);
    const double peak = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (double v : z) denom += std::exp(v - peak);
    for (std::size_t j = 0; j < z.size(); ++j) probs(r, j) = std::exp(z[j] - peak) / denom;
  }
  return probs;
}

Prediction predict(const KanNetwork& network, const Matrix& features) {
  for (double v : features.values()) {
    if (!std::isfinite(v)) throw Error(ErrorCode::invalid_argument, "features must be finite");
  }
  Prediction pred;
  pred.probabilities = softmax_rows(forward_logits(network, features));
  pred.labels.resize(features.rows());
  for (std::size_t r = 0; r < features.rows(); ++r) {
    auto p = pred.probabilities.row(r);
    std::size_t best = 0;
    for (std::size_t j = 1; j < p.size(); ++j) {
      if (p[j] > p[best]) best = j;
    }
    pred.labels[r] = static_cast<int>(best);
  }
  return pred;
}

EdgeImportance edge_importance(const KanNetwork& network, const Matrix& sample_batch) {
  if (sample_batch.rows() == 0) throw Error(ErrorCode::empty_batch, "importance needs samples");
  const ForwardPass pass = forward(network, sample_batch);
  EdgeImportance scores;
  for (std::size_t l = 0; l < network.layers.size(); ++l) {
    const KanLayer& layer = network.layers[l];
    const Matrix& in = pass.cache.inputs[l];
    const std::size_t subs = layer.spec.subnode_count();
    std::vector<double> layer_scores(layer.edges.size(), 0.0);
    for (std::size_t i = 0; i < layer.in_dim; ++i) {
      for (std::size_t s = 0; s < subs; ++s) {
        const EdgeFunction& e = layer.edges[i * subs + s];
        double total = 0.0;
        for (std::size_t r = 0; r < in.rows(); ++r) total += std::abs(e(in(r, i)));
        layer_scores[i * subs + s] = total / static_cast<double>(in.rows());
      }
    }
    const double peak = *std::max_element(layer_scores.begin(), layer_scores.end());
    if (peak > 0.0) {
      for (auto& v : layer_scores) v /= peak;
    }
    scores.push_back(std::move(layer_scores));
  }
  return scores;
}

namespace {

std::string dot_quote(const std::string& text) {
  std::string out = "\"";
  for (char c : text) {
    if (c == '"' || c == '\\') out.push_back('\\');
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out.push_back(c);
  }
  return out + "\"";
}

std::string node_id(std::size_t depth, std::size_t layer_boundary, std::size_t node) {
  if (layer_boundary == 0) return "in_" + std::to_string(node);
  if (layer_boundary == depth) return "out_" + std::to_string(node);
  return "h" + std::to_string(layer_boundary) + "_" + std::to_string(node);
}

}  // namespace

std::string export_dot(const KanNetwork& network, const EdgeImportance& importances,
                       const std::vector<std::string>& feature_names) {
  const std::size_t depth = network.layers.size();
  if (importances.size() != depth) {
    throw Error(ErrorCode::mismatched_importances, "importance layers do not match network depth");
  }
  for (std::size_t l = 0; l < depth; ++l) {
    if (importances[l].size() != network.layers[l].edges.size()) {
      throw Error(ErrorCode::mismatched_importances, "importance count differs at layer " + std::to_string(l));
    }
  }
  if (!feature_names.empty() && feature_names.size() != network.input_dim()) {
    throw Error(ErrorCode::mismatched_importances, "feature name count differs from input dimension");
  }

  std::ostringstream dot;
  dot << "digraph kan {\n";
  dot << "  rankdir=LR;\n";
  dot << "  node [shape=circle, fontsize=10];\n";
  dot << "  {\n    rank=same;\n";
  for (std::size_t i = 0; i < network.input_dim(); ++i) {
    const std::string label = feature_names.empty() ? "x_" + std::to_string(i + 1) : feature_names[i];
    dot << "    " << node_id(depth, 0, i) << " [shape=box, label=" << dot_quote(label) << "];\n";
  }
  dot << "  }\n";
  for (std::size_t l = 0; l < depth; ++l) {
    const KanLayer& layer = network.layers[l];
    dot << "  {\n    rank=same;\n";
    for (std::size_t n = 0; n < layer.out_dim(); ++n) {
      std::string label;
      if (l + 1 == depth) {
        if (layer.out_dim() == 2) {
          label = n == 0 ? "malicious" : "benign";
        } else {
          label = "y_" + std::to_string(n + 1);
        }
      } else {
        label = n < layer.spec.n_add ? "+" : "\xC3\x97";
      }
      dot << "    " << node_id(depth, l + 1, n) << " [label=" << dot_quote(label) << "];\n";
    }
    dot << "  }\n";
  }
  for (std::size_t l = 0; l < depth; ++l) {
    const KanLayer& layer = network.layers[l];
    const std::size_t subs = layer.spec.subnode_count();
    for (std::size_t i = 0; i < layer.in_dim; ++i) {
      for (std::size_t s = 0; s < subs; ++s) {
        const double importance = importances[l][i * subs + s];
        const double width = std::max(0.1, 3.0 * importance);
        const double opacity = std::clamp(importance, 0.1, 1.0);
        char alpha[8];
        std::snprintf(alpha, sizeof alpha, "%02X", static_cast<unsigned>(std::lround(opacity * 255.0)));
        dot << "  " << node_id(depth, l, i) << " -> " << node_id(depth, l + 1, layer.spec.node_of_subnode(s))
            << " [penwidth=" << format_fixed(width, 4) << ", color=\"#000000" << alpha << "\"";
        if (s >= layer.spec.n_add) {
          dot << ", headlabel=\"" << ((s - layer.spec.n_add) % layer.spec.mult_arity + 1) << "\"";
        }
        dot << "];\n";
      }
    }
  }
  dot << "}\n";
  return dot.str();
}

}  // namespace kanids::kan
