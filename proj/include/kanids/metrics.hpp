#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <exception>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace kanids::metrics {

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  bool operator==(const Confusion&) const = default;
};

Confusion confusion(std::span<const int> y_true, std::span<const int> y_pred, int positive_class);

/// Per-class scores, index 0 = malicious, 1 = benign.
struct ClassMetrics {
  std::array<double, 2> precision{};
  std::array<double, 2> recall{};
  std::array<double, 2> f1{};
  std::array<std::size_t, 2> support{};
  double accuracy = 0.0;

  double macro_f1() const noexcept { return 0.5 * (f1[0] + f1[1]); }
  bool operator==(const ClassMetrics&) const = default;
};

/// Each class is scored as the positive class in turn; empty denominators give 0.
ClassMetrics per_class_metrics(std::span<const int> y_true, std::span<const int> y_pred);

struct FeatureMode {
  std::optional<std::size_t> top_n;

  static FeatureMode full() { return {}; }
  static FeatureMode top(std::size_t n) { return {n}; }
  /// "Full" or "T<n>".
  std::string label() const;
  bool operator==(const FeatureMode&) const = default;
};

struct ModelReport {
  std::string model_name;
  FeatureMode feature_mode;
  ClassMetrics metrics;
  /// Absent when timings are withheld from a report.
  std::optional<double> train_seconds;
  std::optional<double> predict_seconds;
};

enum class ReportFormat { markdown, csv };

/// Comparison table with per-class precision/recall/F1 (2 decimals) and
/// train/predict times (4 decimals). CSV output adds an accuracy column.
std::string render_report(const std::vector<ModelReport>& reports, ReportFormat format);

/// Model families this toolkit does not implement; listed in report footnotes.
const std::vector<std::string>& absent_models();

/// Thrown when a timed operation fails. The original exception is nested.
class TimedFailure : public std::runtime_error {
 public:
  explicit TimedFailure(double seconds)
      : std::runtime_error("operation failed after " + std::to_string(seconds) + " s"),
        seconds_(seconds) {}
  double seconds() const noexcept { return seconds_; }

 private:
  double seconds_;
};

/// Wall time of `op` on a monotonic clock, in seconds.
template <typename Op>
auto timed(Op&& op) {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - start).count(); };
  try {
    if constexpr (std::is_void_v<std::invoke_result_t<Op>>) {
      std::forward<Op>(op)();
      return elapsed();
    } else {
      auto result = std::forward<Op>(op)();
      const double seconds = elapsed();
      return std::pair<decltype(result), double>(std::move(result), seconds);
    }
  } catch (...) {
    std::throw_with_nested(TimedFailure(elapsed()));
  }
}

}  // namespace kanids::metrics
