#include "kanids/baselines.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <thread>

#include "kanids/kan.hpp"

namespace kanids::baselines {
namespace {

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_fit_data(const Matrix& x, std::span<const int> y, bool need_both_classes) {
  if (x.rows() == 0) throw Error(ErrorCode::empty_data, "no training rows");
  if (y.size() != x.rows()) throw Error(ErrorCode::dimension_mismatch, "label count differs from row count");
  std::array<std::size_t, 2> counts{0, 0};
  for (int v : y) {
    if (v != 0 && v != 1) throw Error(ErrorCode::invalid_label, "labels must be 0 or 1");
    ++counts[static_cast<std::size_t>(v)];
  }
  if (need_both_classes && (counts[0] == 0 || counts[1] == 0)) {
    throw Error(ErrorCode::single_class_data, "training labels contain a single class");
  }
}

LogisticModel fit_logistic(const LogisticConfig& cfg, const Matrix& x, std::span<const int> y) {
  const std::size_t m = x.rows();
  const std::size_t d = x.cols();
  LogisticModel model;
  model.weights.assign(d, 0.0);
  model.initial_loss = logistic_loss(model, x, y, cfg.l2);
  std::vector<double> grad_w(d);
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    std::fill(grad_w.begin(), grad_w.end(), 0.0);
    double grad_b = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      auto row = x.row(r);
      double z = model.bias;
      for (std::size_t j = 0; j < d; ++j) z += model.weights[j] * row[j];
      const double err = sigmoid(z) - static_cast<double>(y[r]);
      for (std::size_t j = 0; j < d; ++j) grad_w[j] += err * row[j];
      grad_b += err;
    }
    double norm2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      grad_w[j] = grad_w[j] / static_cast<double>(m) + cfg.l2 * model.weights[j];
      norm2 += grad_w[j] * grad_w[j];
    }
    grad_b /= static_cast<double>(m);
    norm2 += grad_b * grad_b;
    if (std::sqrt(norm2) < cfg.tol) {
      model.converged = true;
      break;
    }
    for (std::size_t j = 0; j < d; ++j) model.weights[j] -= cfg.learning_rate * grad_w[j];
    model.bias -= cfg.learning_rate * grad_b;
    model.iterations = it + 1;
  }
  model.final_loss = logistic_loss(model, x, y, cfg.l2);
  return model;
}

GaussianNbModel fit_gnb(const GaussianNbConfig& cfg, const Matrix& x, std::span<const int> y) {
  const std::size_t m = x.rows();
  const std::size_t d = x.cols();
  GaussianNbModel model;
  std::array<std::size_t, 2> counts{0, 0};
  for (int c = 0; c < 2; ++c) {
    model.means[c].assign(d, 0.0);
    model.variances[c].assign(d, 0.0);
  }
  for (std::size_t r = 0; r < m; ++r) {
    const auto c = static_cast<std::size_t>(y[r]);
    ++counts[c];
    for (std::size_t j = 0; j < d; ++j) model.means[c][j] += x(r, j);
  }
  for (int c = 0; c < 2; ++c) {
    for (auto& v : model.means[c]) v /= static_cast<double>(counts[c]);
  }
  for (std::size_t r = 0; r < m; ++r) {
    const auto c = static_cast<std::size_t>(y[r]);
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = x(r, j) - model.means[c][j];
      model.variances[c][j] += diff * diff;
    }
  }
  // Smoothing is relative to the widest overall feature variance.
  double widest = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t r = 0; r < m; ++r) mean += x(r, j);
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t r = 0; r < m; ++r) var += (x(r, j) - mean) * (x(r, j) - mean);
    widest = std::max(widest, var / static_cast<double>(m));
  }
  const double epsilon = cfg.var_smoothing * widest;
  for (int c = 0; c < 2; ++c) {
    for (auto& v : model.variances[c]) v = v / static_cast<double>(counts[c]) + epsilon;
    model.log_priors[c] = std::log(static_cast<double>(counts[c]) / static_cast<double>(m));
  }
  return model;
}

std::vector<int> predict_gnb(const GaussianNbModel& model, const Matrix& x) {
  std::vector<int> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::array<double, 2> score{};
    for (int c = 0; c < 2; ++c) {
      double s = model.log_priors[c];
      for (std::size_t j = 0; j < x.cols(); ++j) {
        const double var = model.variances[c][j];
        const double diff = x(r, j) - model.means[c][j];
        s -= 0.5 * std::log(2.0 * std::numbers::pi * var) + diff * diff / (2.0 * var);
      }
      score[c] = s;
    }
    out[r] = score[1] > score[0] ? 1 : 0;
  }
  return out;
}

int knn_vote(const KnnModel& model, std::span<const double> query,
             std::vector<std::pair<double, std::size_t>>& scratch) {
  const std::size_t m = model.train_x.rows();
  scratch.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    auto row = model.train_x.row(i);
    double dist = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double diff = row[j] - query[j];
      dist += diff * diff;
    }
    scratch[i] = {dist, i};
  }
  const std::size_t k = std::min(model.k, m);
  std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k - 1), scratch.end());
  std::array<std::size_t, 2> votes{0, 0};
  for (std::size_t i = 0; i < k; ++i) ++votes[static_cast<std::size_t>(model.train_y[scratch[i].second])];
  return votes[1] > votes[0] ? 1 : 0;
}

std::vector<int> predict_knn(const KnnModel& model, const Matrix& x) {
  std::vector<int> out(x.rows());
  std::size_t workers = model.threads ? model.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::max<std::size_t>(1, std::min(workers, x.rows() / 64 + 1));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    std::vector<std::pair<double, std::size_t>> scratch;
    for (std::size_t r = next++; r < x.rows(); r = next++) out[r] = knn_vote(model, x.row(r), scratch);
  };
  if (workers == 1) {
    work();
    return out;
  }
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  return out;
}

MlpModel fit_mlp(const MlpConfig& cfg, const Matrix& x, std::span<const int> y) {
  if (cfg.hidden < 1) throw Error(ErrorCode::invalid_argument, "hidden size must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw Error(ErrorCode::invalid_argument, "learning rate must be > 0");
  const std::size_t m = x.rows();
  kan::iteration_count(m, cfg.batch, cfg.epochs);
  MlpModel model = init_mlp(x.cols(), cfg.hidden, cfg.seed);
  kan::AdamState adam;
  std::vector<std::size_t> order(m);
  std::vector<std::size_t> rows(cfg.batch);
  std::vector<int> labels(cfg.batch);
  std::vector<double> grad;
  const std::size_t per_epoch = m / cfg.batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(cfg.seed + epoch);
    rng.shuffle(order);
    for (std::size_t b = 0; b < per_epoch; ++b) {
      for (std::size_t i = 0; i < cfg.batch; ++i) {
        rows[i] = order[b * cfg.batch + i];
        labels[i] = y[rows[i]];
      }
      const Matrix batch = x.take_rows(rows);
      const double loss = mlp_loss_and_gradient(model, batch, labels, &grad);
      if (!std::isfinite(loss)) throw Error(ErrorCode::non_finite_loss, "MLP loss became non-finite");
      kan::adam_step(model.params, grad, adam, cfg.learning_rate);
    }
  }
  return model;
}

}  // namespace

std::string to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::logistic_regression: return "lr";
    case BaselineKind::gaussian_nb: return "gnb";
    case BaselineKind::knn: return "knn";
    case BaselineKind::mlp: return "mlp";
  }
  return "unknown";
}

std::size_t FittedBaseline::n_features() const {
  return std::visit(
      [](const auto& s) -> std::size_t {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, LogisticModel>) return s.weights.size();
        else if constexpr (std::is_same_v<T, GaussianNbModel>) return s.means[0].size();
        else if constexpr (std::is_same_v<T, KnnModel>) return s.train_x.cols();
        else return s.inputs;
      },
      state);
}

double logistic_loss(const LogisticModel& model, const Matrix& x, std::span<const int> y, double l2) {
  double total = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double z = model.bias;
    for (std::size_t j = 0; j < x.cols(); ++j) z += model.weights[j] * x(r, j);
    total += softplus(z) - static_cast<double>(y[r]) * z;
  }
  double penalty = 0.0;
  for (double w : model.weights) penalty += w * w;
  return total / static_cast<double>(x.rows()) + 0.5 * l2 * penalty;
}

MlpModel init_mlp(std::size_t inputs, std::size_t hidden, std::uint64_t seed) {
  MlpModel model;
  model.inputs = inputs;
  model.hidden = hidden;
  model.params.assign(hidden * inputs + hidden + 2 * hidden + 2, 0.0);
  Rng rng(seed);
  const double s1 = std::sqrt(2.0 / static_cast<double>(inputs));
  const double s2 = std::sqrt(2.0 / static_cast<double>(hidden));
  for (std::size_t i = 0; i < hidden * inputs; ++i) model.params[i] = rng.normal(0.0, s1);
  const std::size_t w2 = hidden * inputs + hidden;
  for (std::size_t i = 0; i < 2 * hidden; ++i) model.params[w2 + i] = rng.normal(0.0, s2);
  return model;
}

Matrix MlpModel::logits(const Matrix& x) const {
  const std::size_t d = inputs, h = hidden;
  const double* w1 = params.data();
  const double* b1 = w1 + h * d;
  const double* w2 = b1 + h;
  const double* b2 = w2 + 2 * h;
  Matrix out(x.rows(), 2);
  std::vector<double> act(h);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t k = 0; k < h; ++k) {
      double z = b1[k];
      for (std::size_t j = 0; j < d; ++j) z += w1[k * d + j] * row[j];
      act[k] = z > 0.0 ? z : 0.0;
    }
    for (std::size_t c = 0; c < 2; ++c) {
      double z = b2[c];
      for (std::size_t k = 0; k < h; ++k) z += w2[c * h + k] * act[k];
      out(r, c) = z;
    }
  }
  return out;
}

double mlp_loss_and_gradient(const MlpModel& model, const Matrix& x, std::span<const int> y,
                             std::vector<double>* gradient) {
  const std::size_t d = model.inputs, h = model.hidden, m = x.rows();
  if (x.cols() != d) throw Error(ErrorCode::dimension_mismatch, "MLP input width mismatch");
  const double* w1 = model.params.data();
  const double* b1 = w1 + h * d;
  const double* w2 = b1 + h;
  const double* b2 = w2 + 2 * h;
  if (gradient) gradient->assign(model.params.size(), 0.0);

  std::vector<double> pre(h), act(h), dact(h);
  double total = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    auto row = x.row(r);
    for (std::size_t k = 0; k < h; ++k) {
      double z = b1[k];
      for (std::size_t j = 0; j < d; ++j) z += w1[k * d + j] * row[j];
      pre[k] = z;
      act[k] = z > 0.0 ? z : 0.0;
    }
    std::array<double, 2> z{};
    for (std::size_t c = 0; c < 2; ++c) {
      z[c] = b2[c];
      for (std::size_t k = 0; k < h; ++k) z[c] += w2[c * h + k] * act[k];
    }
    const double peak = std::max(z[0], z[1]);
    const double lse = peak + std::log(std::exp(z[0] - peak) + std::exp(z[1] - peak));
    const auto label = static_cast<std::size_t>(y[r]);
    total += lse - z[label];
    if (!gradient) continue;

    auto& g = *gradient;
    double* gw1 = g.data();
    double* gb1 = gw1 + h * d;
    double* gw2 = gb1 + h;
    double* gb2 = gw2 + 2 * h;
    std::fill(dact.begin(), dact.end(), 0.0);
    for (std::size_t c = 0; c < 2; ++c) {
      const double dz = (std::exp(z[c] - lse) - (c == label ? 1.0 : 0.0)) / static_cast<double>(m);
      gb2[c] += dz;
      for (std::size_t k = 0; k < h; ++k) {
        gw2[c * h + k] += dz * act[k];
        dact[k] += dz * w2[c * h + k];
      }
    }
    for (std::size_t k = 0; k < h; ++k) {
      if (pre[k] <= 0.0) continue;
      gb1[k] += dact[k];
      for (std::size_t j = 0; j < d; ++j) gw1[k * d + j] += dact[k] * row[j];
    }
  }
  return total / static_cast<double>(m);
}

FittedBaseline fit_baseline(BaselineKind kind, const BaselineConfig& config, const Matrix& x,
                            std::span<const int> y) {
  check_fit_data(x, y, kind != BaselineKind::knn);
  const auto start = std::chrono::steady_clock::now();
  FittedBaseline model;
  model.kind = kind;
  switch (kind) {
    case BaselineKind::logistic_regression:
      model.state = fit_logistic(config.lr, x, y);
      break;
    case BaselineKind::gaussian_nb:
      model.state = fit_gnb(config.gnb, x, y);
      break;
    case BaselineKind::knn: {
      if (config.knn.k < 1) throw Error(ErrorCode::invalid_argument, "k must be >= 1");
      KnnModel knn;
      knn.train_x = x;
      knn.train_y.assign(y.begin(), y.end());
      knn.k = config.knn.k;
      knn.threads = config.knn.threads;
      model.state = std::move(knn);
      break;
    }
    case BaselineKind::mlp:
      model.state = fit_mlp(config.mlp, x, y);
      break;
  }
  model.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return model;
}

std::vector<int> predict_baseline(const FittedBaseline& model, const Matrix& x) {
  if (x.cols() != model.n_features()) {
    throw Error(ErrorCode::dimension_mismatch, "model expects " + std::to_string(model.n_features()) +
                                                   " features, got " + std::to_string(x.cols()));
  }
  return std::visit(
      [&](const auto& s) -> std::vector<int> {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, LogisticModel>) {
          std::vector<int> out(x.rows());
          for (std::size_t r = 0; r < x.rows(); ++r) {
            double z = s.bias;
            for (std::size_t j = 0; j < x.cols(); ++j) z += s.weights[j] * x(r, j);
            out[r] = z > 0.0 ? 1 : 0;
          }
          return out;
        } else if constexpr (std::is_same_v<T, GaussianNbModel>) {
          return predict_gnb(s, x);
        } else if constexpr (std::is_same_v<T, KnnModel>) {
          return predict_knn(s, x);
        } else {
          const Matrix z = s.logits(x);
          std::vector<int> out(x.rows());
          for (std::size_t r = 0; r < x.rows(); ++r) out[r] = z(r, 1) > z(r, 0) ? 1 : 0;
          return out;
        }
      },
      model.state);
}

}  // namespace kanids::baselines
