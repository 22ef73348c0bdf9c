#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kanids {

/// Failure categories shared by every module. The CLI maps these onto exit codes.
enum class ErrorCode {
  invalid_argument,
  invalid_range,
  unsupported_degree,
  underdetermined,
  shrink_not_allowed,
  invalid_spec,
  shape_mismatch,
  invalid_label,
  stale_cache,
  batch_too_large,
  non_finite_loss,
  empty_batch,
  mismatched_importances,
  io_error,
  version_mismatch,
  corrupt_file,
  unknown_edge,
  insufficient_samples,
  degenerate_x,
  empty_data,
  empty_input,
  dimension_mismatch,
  unfit_model,
  invalid_n,
  single_class_data,
  missing_label_column,
  all_rows_dropped,
  too_few_rows,
  index_out_of_range,
  duplicate_index,
  length_mismatch,
  feature_mismatch,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  /// The message without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  /// Copies the listed rows, in order, into a new matrix.
  Matrix take_rows(std::span<const std::size_t> indices) const;
  /// Copies the listed columns, in order, into a new matrix.
  Matrix take_cols(std::span<const std::size_t> indices) const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Seeded generator with distributions written out explicitly, so sequences do
/// not depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  /// Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// splitmix64 finalizer, used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

/// Shortest decimal text that parses back to exactly the same double.
std::string format_exact(double value);
/// Fixed-point text with `decimals` digits after the point.
std::string format_fixed(double value, int decimals);

}  // namespace kanids
