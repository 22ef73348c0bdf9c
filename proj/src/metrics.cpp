#include "kanids/metrics.hpp"

#include <sstream>

#include "kanids/core.hpp"

namespace kanids::metrics {
namespace {

void check_labels(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.size() != y_pred.size()) {
    throw Error(ErrorCode::length_mismatch, std::to_string(y_true.size()) + " labels vs " +
                                                std::to_string(y_pred.size()) + " predictions");
  }
  if (y_true.empty()) throw Error(ErrorCode::length_mismatch, "no samples to score");
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if ((y_true[i] != 0 && y_true[i] != 1) || (y_pred[i] != 0 && y_pred[i] != 1)) {
      throw Error(ErrorCode::invalid_label, "labels must be 0 or 1 (index " + std::to_string(i) + ")");
    }
  }
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string time_cell(const std::optional<double>& seconds) {
  return seconds ? format_fixed(*seconds, 4) : std::string("-");
}

}  // namespace

Confusion confusion(std::span<const int> y_true, std::span<const int> y_pred, int positive_class) {
  check_labels(y_true, y_pred);
  if (positive_class != 0 && positive_class != 1) {
    throw Error(ErrorCode::invalid_label, "positive class must be 0 or 1");
  }
  Confusion c;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const bool actual = y_true[i] == positive_class;
    const bool predicted = y_pred[i] == positive_class;
    if (actual && predicted) ++c.tp;
    else if (!actual && predicted) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  }
  return c;
}

ClassMetrics per_class_metrics(std::span<const int> y_true, std::span<const int> y_pred) {
  ClassMetrics m;
  for (int cls = 0; cls < 2; ++cls) {
    const Confusion c = confusion(y_true, y_pred, cls);
    const double p = ratio(c.tp, c.tp + c.fp);
    const double r = ratio(c.tp, c.tp + c.fn);
    m.precision[cls] = p;
    m.recall[cls] = r;
    m.f1[cls] = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    m.support[cls] = c.tp + c.fn;
    if (cls == 1) m.accuracy = ratio(c.tp + c.tn, c.total());
  }
  return m;
}

std::string FeatureMode::label() const {
  return top_n ? "T" + std::to_string(*top_n) : std::string("Full");
}

const std::vector<std::string>& absent_models() {
  static const std::vector<std::string> names = {"Gradient Boosting", "XGBoost", "AdaBoost"};
  return names;
}

std::string render_report(const std::vector<ModelReport>& reports, ReportFormat format) {
  if (reports.empty()) throw Error(ErrorCode::empty_input, "no model reports to render");
  std::ostringstream out;
  if (format == ReportFormat::csv) {
    out << "Model,Features,Precision(0),Precision(1),Recall(0),Recall(1),F1(0),F1(1),"
           "Training Time (s),Prediction Time (s),Accuracy\n";
    for (const auto& r : reports) {
      const auto& m = r.metrics;
      out << r.model_name << ',' << r.feature_mode.label() << ',' << format_fixed(m.precision[0], 2) << ','
          << format_fixed(m.precision[1], 2) << ',' << format_fixed(m.recall[0], 2) << ','
          << format_fixed(m.recall[1], 2) << ',' << format_fixed(m.f1[0], 2) << ','
          << format_fixed(m.f1[1], 2) << ',' << time_cell(r.train_seconds) << ','
          << time_cell(r.predict_seconds) << ',' << format_fixed(m.accuracy, 2) << '\n';
    }
    return out.str();
  }

  out << "| Model | Features | Precision (0) | Precision (1) | Recall (0) | Recall (1) | F1 (0) | F1 (1) "
         "| Training Time (s) | Prediction Time (s) |\n";
  out << "|---|---|---:|---:|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& r : reports) {
    const auto& m = r.metrics;
    out << "| " << r.model_name << " | " << r.feature_mode.label() << " | " << format_fixed(m.precision[0], 2)
        << " | " << format_fixed(m.precision[1], 2) << " | " << format_fixed(m.recall[0], 2) << " | "
        << format_fixed(m.recall[1], 2) << " | " << format_fixed(m.f1[0], 2) << " | "
        << format_fixed(m.f1[1], 2) << " | " << time_cell(r.train_seconds) << " | "
        << time_cell(r.predict_seconds) << " |\n";
  }
  out << "\nClass 0 = malicious, class 1 = benign.\n";
  out << "Not evaluated (out of scope): ";
  const auto& absent = absent_models();
  for (std::size_t i = 0; i < absent.size(); ++i) out << (i ? ", " : "") << absent[i];
  out << ".\n";
  return out.str();
}

}  // namespace kanids::metrics
