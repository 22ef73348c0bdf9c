#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "kanids/core.hpp"

namespace kanids::baselines {

enum class BaselineKind { logistic_regression, gaussian_nb, knn, mlp };

std::string to_string(BaselineKind kind);

struct LogisticConfig {
  double learning_rate = 0.1;
  std::size_t max_iters = 1000;
  double tol = 1e-6;
  double l2 = 1e-4;
};

struct KnnConfig {
  std::size_t k = 5;
  /// 0 picks the hardware concurrency.
  std::size_t threads = 0;
};

struct MlpConfig {
  std::size_t hidden = 100;
  double learning_rate = 0.001;
  std::size_t batch = 128;
  std::size_t epochs = 20;
  std::uint64_t seed = 42;
};

struct GaussianNbConfig {
  double var_smoothing = 1e-9;
};

struct BaselineConfig {
  LogisticConfig lr;
  KnnConfig knn;
  MlpConfig mlp;
  GaussianNbConfig gnb;
};

struct LogisticModel {
  std::vector<double> weights;
  double bias = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

struct GaussianNbModel {
  std::array<std::vector<double>, 2> means;
  std::array<std::vector<double>, 2> variances;
  std::array<double, 2> log_priors{};
};

struct KnnModel {
  Matrix train_x;
  std::vector<int> train_y;
  std::size_t k = 5;
  std::size_t threads = 0;
};

/// One ReLU hidden layer with a two-logit softmax head.
/// Flat parameter layout: W1 (hidden x d, row-major), b1, W2 (2 x hidden), b2.
struct MlpModel {
  std::size_t inputs = 0;
  std::size_t hidden = 0;
  std::vector<double> params;

  Matrix logits(const Matrix& x) const;
};

struct FittedBaseline {
  BaselineKind kind = BaselineKind::logistic_regression;
  std::variant<LogisticModel, GaussianNbModel, KnnModel, MlpModel> state;
  double train_seconds = 0.0;

  std::size_t n_features() const;
};

FittedBaseline fit_baseline(BaselineKind kind, const BaselineConfig& config, const Matrix& x,
                            std::span<const int> y);
std::vector<int> predict_baseline(const FittedBaseline& model, const Matrix& x);

/// Mean regularized log-loss of a logistic model.
double logistic_loss(const LogisticModel& model, const Matrix& x, std::span<const int> y, double l2);

/// Mean softmax cross-entropy of the MLP and its gradient in the flat layout.
double mlp_loss_and_gradient(const MlpModel& model, const Matrix& x, std::span<const int> y,
                             std::vector<double>* gradient);
MlpModel init_mlp(std::size_t inputs, std::size_t hidden, std::uint64_t seed);

}  // namespace kanids::baselines
