#include "kanids/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

namespace kanids::data {
namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool parse_number(std::string_view text, double& out) {
  text = trim(text);
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size() && std::isfinite(out);
}

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\n") == std::string::npos) return value;
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

std::size_t holdout_count(double fraction, std::size_t m) {
  const double exact = fraction * static_cast<double>(m);
  const double nearest = std::round(exact);
  // Products such as 0.3 * 10 land a hair away from an integer.
  if (std::abs(exact - nearest) <= 1e-9 * std::max(1.0, exact)) {
    return static_cast<std::size_t>(nearest);
  }
  return static_cast<std::size_t>(std::ceil(exact));
}

}  // namespace

std::vector<int> binarize_labels(std::span<const std::string> raw, const LabelMap& map) {
  if (raw.empty()) throw Error(ErrorCode::empty_input, "no labels to binarize");
  if (map.benign_label.empty()) throw Error(ErrorCode::invalid_argument, "benign label must be non-empty");
  std::vector<int> out;
  out.reserve(raw.size());
  for (const auto& label : raw) out.push_back(label == map.benign_label ? kBenign : kMalicious);
  return out;
}

std::string LoadDiagnostics::to_text() const {
  std::ostringstream out;
  out << "rows_read: " << rows_read << "\n";
  out << "rows_dropped: " << rows_dropped << "\n";
  out << "rows_kept: " << (rows_read - rows_dropped) << "\n";
  out << "benign: " << benign << "\n";
  out << "malicious: " << malicious << "\n";
  return out.str();
}

LoadResult load_csv(const std::filesystem::path& path, const std::string& label_column,
                    const LabelMap& label_map) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::io_error, path.string() + " has no header row");
  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) h = std::string(trim(h));
  const auto label_it = std::find(header.begin(), header.end(), label_column);
  if (label_it == header.end()) {
    throw Error(ErrorCode::missing_label_column,
                "column '" + label_column + "' not found in " + path.string());
  }
  const std::size_t label_index = static_cast<std::size_t>(label_it - header.begin());

  LoadResult result;
  Dataset& ds = result.dataset;
  ds.provenance = path.string();
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j != label_index) ds.feature_names.push_back(header[j]);
  }
  const std::size_t d = ds.feature_names.size();

  std::vector<double> values;
  std::vector<std::string> raw_labels;
  std::vector<double> row(d);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++result.diagnostics.rows_read;
    const std::vector<std::string> fields = split_csv_line(line);
    bool ok = fields.size() == header.size();
    for (std::size_t j = 0, col = 0; ok && j < fields.size(); ++j) {
      if (j == label_index) continue;
      ok = parse_number(fields[j], row[col++]);
    }
    if (!ok) {
      ++result.diagnostics.rows_dropped;
      continue;
    }
    values.insert(values.end(), row.begin(), row.end());
    raw_labels.emplace_back(trim(fields[label_index]));
  }
  if (raw_labels.empty()) {
    throw Error(ErrorCode::all_rows_dropped, "no usable rows in " + path.string());
  }
  const std::size_t m = raw_labels.size();
  ds.features = Matrix(m, d, std::move(values));
  ds.labels = binarize_labels(raw_labels, label_map);
  for (int y : ds.labels) (y == kBenign ? result.diagnostics.benign : result.diagnostics.malicious)++;
  return result;
}

void write_csv(const Dataset& dataset, const std::filesystem::path& path,
               const std::string& label_column, const LabelMap& label_map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  for (const auto& name : dataset.feature_names) out << csv_field(name) << ',';
  out << csv_field(label_column) << '\n';
  for (std::size_t r = 0; r < dataset.rows(); ++r) {
    for (double v : dataset.features.row(r)) out << format_exact(v) << ',';
    out << (dataset.labels[r] == kBenign ? label_map.benign_label : std::string("MaliciousTraffic"))
        << '\n';
  }
  if (!out) throw Error(ErrorCode::io_error, "failed while writing " + path.string());
}

SplitIndices split_indices(std::size_t m, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0 && spec.val_fraction > 0 && spec.test_fraction > 0) ||
      std::abs(spec.train_fraction + spec.val_fraction + spec.test_fraction - 1.0) > 1e-12) {
    throw Error(ErrorCode::invalid_argument, "split fractions must be positive and sum to 1");
  }
  if (m < 3) throw Error(ErrorCode::too_few_rows, "split needs at least 3 rows, got " + std::to_string(m));

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng first(spec.seed);
  first.shuffle(order);
  const std::size_t held = holdout_count(spec.val_fraction + spec.test_fraction, m);

  SplitIndices out;
  std::vector<std::size_t> temp(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held));
  out.train.assign(order.begin() + static_cast<std::ptrdiff_t>(held), order.end());

  Rng second(mix_seed(spec.seed, 1));
  second.shuffle(temp);
  const double test_share = spec.test_fraction / (spec.val_fraction + spec.test_fraction);
  const std::size_t n_test = holdout_count(test_share, temp.size());
  out.test.assign(temp.begin(), temp.begin() + static_cast<std::ptrdiff_t>(n_test));
  out.val.assign(temp.begin() + static_cast<std::ptrdiff_t>(n_test), temp.end());
  return out;
}

namespace {

Dataset take(const Dataset& ds, const std::vector<std::size_t>& rows) {
  Dataset out;
  out.features = ds.features.take_rows(rows);
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) out.labels.push_back(ds.labels[r]);
  out.feature_names = ds.feature_names;
  out.provenance = ds.provenance;
  return out;
}

}  // namespace

Partitions split(const Dataset& dataset, const SplitSpec& spec) {
  const SplitIndices idx = split_indices(dataset.rows(), spec);
  return Partitions{TrainingSplit::assume_training(take(dataset, idx.train)), take(dataset, idx.val),
                    take(dataset, idx.test)};
}

ScalerParams fit_scaler(const TrainingSplit& train) {
  const Matrix& x = train.dataset().features;
  if (x.rows() == 0) throw Error(ErrorCode::empty_input, "cannot fit a scaler on zero rows");
  const std::size_t m = x.rows();
  const std::size_t d = x.cols();
  ScalerParams params;
  params.means.assign(d, 0.0);
  params.stds.assign(d, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < d; ++j) params.means[j] += x(r, j);
  }
  for (auto& mu : params.means) mu /= static_cast<double>(m);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = x(r, j) - params.means[j];
      params.stds[j] += diff * diff;
    }
  }
  for (auto& s : params.stds) s = std::sqrt(s / static_cast<double>(m));
  return params;
}

Matrix apply_scaler(const ScalerParams& params, const Matrix& features) {
  if (features.cols() != params.means.size() || params.stds.size() != params.means.size()) {
    throw Error(ErrorCode::dimension_mismatch, "scaler has " + std::to_string(params.means.size()) +
                                                   " features, data has " + std::to_string(features.cols()));
  }
  Matrix out(features.rows(), features.cols());
  for (std::size_t r = 0; r < features.rows(); ++r) {
    for (std::size_t j = 0; j < features.cols(); ++j) {
      out(r, j) = params.stds[j] < 1e-12 ? 0.0 : (features(r, j) - params.means[j]) / params.stds[j];
    }
  }
  return out;
}

Dataset apply_scaler(const ScalerParams& params, const Dataset& dataset) {
  Dataset out = dataset;
  out.features = apply_scaler(params, dataset.features);
  return out;
}

ScalerParams select_scaler(const ScalerParams& params, std::span<const std::size_t> indices) {
  ScalerParams out;
  for (std::size_t j : indices) {
    if (j >= params.means.size()) throw Error(ErrorCode::index_out_of_range, "scaler index out of range");
    out.means.push_back(params.means[j]);
    out.stds.push_back(params.stds[j]);
  }
  return out;
}

Dataset project_features(const Dataset& dataset, std::span<const std::size_t> selected) {
  std::set<std::size_t> seen;
  for (std::size_t j : selected) {
    if (j >= dataset.cols()) {
      throw Error(ErrorCode::index_out_of_range,
                  "feature index " + std::to_string(j) + " with " + std::to_string(dataset.cols()) + " columns");
    }
    if (!seen.insert(j).second) {
      throw Error(ErrorCode::duplicate_index, "feature index " + std::to_string(j) + " selected twice");
    }
  }
  Dataset out;
  out.features = dataset.features.take_cols(selected);
  out.labels = dataset.labels;
  out.provenance = dataset.provenance;
  for (std::size_t j : selected) out.feature_names.push_back(dataset.feature_names[j]);
  return out;
}

std::vector<std::size_t> resolve_features(const Dataset& dataset,
                                          std::span<const std::string> names) {
  std::unordered_map<std::string, std::size_t> lookup;
  for (std::size_t j = 0; j < dataset.feature_names.size(); ++j) lookup.emplace(dataset.feature_names[j], j);
  std::vector<std::size_t> out;
  for (const auto& name : names) {
    auto it = lookup.find(name);
    if (it == lookup.end()) throw Error(ErrorCode::feature_mismatch, "feature '" + name + "' is absent from the data");
    out.push_back(it->second);
  }
  return out;
}

std::vector<std::size_t> SynthRule::informative_features() const {
  std::vector<std::size_t> out = linear_features;
  out.push_back(periodic_feature);
  std::sort(out.begin(), out.end());
  return out;
}

double SynthRule::score(std::span<const double> row) const {
  double s = amplitude * std::sin(frequency * row[periodic_feature]);
  for (std::size_t j = 0; j < linear_features.size(); ++j) s += linear_weights[j] * row[linear_features[j]];
  return s - threshold;
}

std::string SynthRule::describe(const std::vector<std::string>& names) const {
  auto name = [&](std::size_t j) { return j < names.size() ? names[j] : "x" + std::to_string(j); };
  std::ostringstream out;
  out << "benign iff";
  for (std::size_t j = 0; j < linear_features.size(); ++j) {
    out << (j ? " + " : " ") << format_exact(linear_weights[j]) << "*" << name(linear_features[j]);
  }
  out << " + " << format_exact(amplitude) << "*sin(" << format_exact(frequency) << "*"
      << name(periodic_feature) << ") + noise > " << format_exact(threshold) << "\n";
  out << "flag features";
  for (std::size_t j : linear_features) out << " " << name(j);
  out << " ~ Bernoulli(0.5)\n";
  out << "periodic feature " << name(periodic_feature) << " ~ Normal(" << format_exact(periodic_center)
      << ", " << format_exact(periodic_spread) << ")\n";
  out << "noise stddev " << format_exact(noise) << "\n";
  return out.str();
}

SynthResult synth_generate(const SynthSpec& spec) {
  if (spec.n_rows < 10) throw Error(ErrorCode::invalid_spec, "rows must be >= 10");
  if (spec.n_features < 5) throw Error(ErrorCode::invalid_spec, "features must be >= 5");
  if (!(spec.benign_fraction > 0.0 && spec.benign_fraction < 1.0)) {
    throw Error(ErrorCode::invalid_spec, "benign fraction must lie strictly between 0 and 1");
  }
  if (!(spec.noise >= 0.0) || !std::isfinite(spec.noise)) {
    throw Error(ErrorCode::invalid_spec, "noise must be a finite non-negative value");
  }

  Rng rng(spec.seed);
  const std::size_t d = spec.n_features;
  std::vector<std::size_t> perm(d);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(perm);

  SynthRule rule;
  rule.linear_features.assign(perm.begin(), perm.begin() + 4);
  rule.linear_weights = {1.2, -1.0, 0.9, -0.7};
  rule.periodic_feature = perm[4];
  rule.amplitude = 1.5;
  rule.frequency = 2.0;
  rule.periodic_center = std::numbers::pi / 4.0;
  rule.periodic_spread = 0.8;
  rule.noise = spec.noise;

  // Per-column location and scale for the uninformative columns.
  std::vector<double> centers(d, 0.0), scales(d, 1.0);
  for (std::size_t j = 0; j < d; ++j) {
    centers[j] = rng.uniform(-5.0, 5.0);
    scales[j] = rng.uniform(0.5, 3.0);
  }
  centers[rule.periodic_feature] = rule.periodic_center;
  scales[rule.periodic_feature] = rule.periodic_spread;

  std::vector<char> is_flag(d, 0);
  for (std::size_t j : rule.linear_features) is_flag[j] = 1;
  auto draw_row = [&](std::vector<double>& row) {
    for (std::size_t j = 0; j < d; ++j) {
      row[j] = is_flag[j] ? (rng.uniform() < 0.5 ? 1.0 : 0.0) : rng.normal(centers[j], scales[j]);
    }
  };

  std::vector<double> row(d);
  // Threshold at the matching quantile of a pilot sample keeps rejection cheap.
  {
    std::vector<double> pilot(4001);
    for (auto& s : pilot) {
      draw_row(row);
      s = rule.score(row) + spec.noise * rng.normal();
    }
    std::sort(pilot.begin(), pilot.end());
    const auto q = static_cast<std::size_t>((1.0 - spec.benign_fraction) * static_cast<double>(pilot.size() - 1));
    rule.threshold = pilot[q];
  }

  const auto want_benign = static_cast<std::size_t>(std::llround(spec.benign_fraction * static_cast<double>(spec.n_rows)));
  const std::size_t want_malicious = spec.n_rows - want_benign;
  std::size_t have_benign = 0, have_malicious = 0;

  SynthResult result;
  Dataset& ds = result.dataset;
  std::vector<double> values;
  values.reserve(spec.n_rows * d);
  while (have_benign + have_malicious < spec.n_rows) {
    draw_row(row);
    const double noisy = rule.score(row) + spec.noise * rng.normal();
    const int label = noisy > 0.0 ? kBenign : kMalicious;
    if (label == kBenign) {
      if (have_benign == want_benign) continue;
      ++have_benign;
    } else {
      if (have_malicious == want_malicious) continue;
      ++have_malicious;
    }
    values.insert(values.end(), row.begin(), row.end());
    ds.labels.push_back(label);
  }
  ds.features = Matrix(spec.n_rows, d, std::move(values));
  for (std::size_t j = 0; j < d; ++j) {
    ds.feature_names.push_back((j < 10 ? "f0" : "f") + std::to_string(j));
  }
  std::ostringstream prov;
  prov << "synth(rows=" << spec.n_rows << ",features=" << d << ",benign_fraction="
       << format_exact(spec.benign_fraction) << ",seed=" << spec.seed << ",noise=" << format_exact(spec.noise) << ")";
  ds.provenance = prov.str();
  result.rule = rule;
  return result;
}

}  // namespace kanids::data
