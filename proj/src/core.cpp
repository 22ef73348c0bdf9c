#include "kanids/core.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <numbers>

namespace kanids {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-arg";
    case ErrorCode::invalid_range: return "invalid-range";
    case ErrorCode::unsupported_degree: return "unsupported-degree";
    case ErrorCode::underdetermined: return "underdetermined";
    case ErrorCode::shrink_not_allowed: return "shrink-not-allowed";
    case ErrorCode::invalid_spec: return "invalid-spec";
    case ErrorCode::shape_mismatch: return "shape-mismatch";
    case ErrorCode::invalid_label: return "invalid-label";
    case ErrorCode::stale_cache: return "stale-cache";
    case ErrorCode::batch_too_large: return "batch-too-large";
    case ErrorCode::non_finite_loss: return "non-finite-loss";
    case ErrorCode::empty_batch: return "empty-batch";
    case ErrorCode::mismatched_importances: return "mismatched-importances";
    case ErrorCode::io_error: return "io-error";
    case ErrorCode::version_mismatch: return "version-mismatch";
    case ErrorCode::corrupt_file: return "corrupt-file";
    case ErrorCode::unknown_edge: return "unknown-edge";
    case ErrorCode::insufficient_samples: return "insufficient-samples";
    case ErrorCode::degenerate_x: return "degenerate-x";
    case ErrorCode::empty_data: return "empty-data";
    case ErrorCode::empty_input: return "empty-input";
    case ErrorCode::dimension_mismatch: return "dimension-mismatch";
    case ErrorCode::unfit_model: return "unfit-model";
    case ErrorCode::invalid_n: return "invalid-n";
    case ErrorCode::single_class_data: return "single-class-data";
    case ErrorCode::missing_label_column: return "missing-label-column";
    case ErrorCode::all_rows_dropped: return "all-rows-dropped";
    case ErrorCode::too_few_rows: return "too-few-rows";
    case ErrorCode::index_out_of_range: return "index-out-of-range";
    case ErrorCode::duplicate_index: return "duplicate-index";
    case ErrorCode::length_mismatch: return "length-mismatch";
    case ErrorCode::feature_mismatch: return "feature-mismatch";
  }
  return "unknown";
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows * cols) {
    throw Error(ErrorCode::shape_mismatch, "matrix value count does not match rows*cols");
  }
}

Matrix Matrix::take_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Matrix Matrix::take_cols(std::span<const std::size_t> indices) const {
  Matrix out(rows_, indices.size());
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t j = 0; j < indices.size(); ++j) out(r, j) = (*this)(r, indices[j]);
  }
  return out;
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t Rng::index(std::size_t n) {
  if (n <= 1) return 0;
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t draw;
  do {
    draw = engine_();
  } while (draw >= limit);
  return static_cast<std::size_t>(draw % bound);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string format_exact(double value) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), end);
}

std::string format_fixed(double value, int decimals) {
  std::array<char, 512> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value,
                                 std::chars_format::fixed, decimals);
  std::string text(buf.data(), end);
  // "-0.0000" reads badly in reports.
  if (!text.empty() && text[0] == '-' && text.find_first_not_of("-0.") == std::string::npos) {
    text.erase(0, 1);
  }
  return text;
}

}  // namespace kanids
