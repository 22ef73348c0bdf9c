#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kanids/core.hpp"

namespace kanids::data {

/// Class encoding used throughout: attack traffic is 0, benign traffic is 1.
inline constexpr int kMalicious = 0;
inline constexpr int kBenign = 1;

struct Dataset {
  Matrix features;
  std::vector<int> labels;
  std::vector<std::string> feature_names;
  std::string provenance;

  std::size_t rows() const noexcept { return features.rows(); }
  std::size_t cols() const noexcept { return features.cols(); }
};

struct LabelMap {
  std::string benign_label = "BenignTraffic";
};

std::vector<int> binarize_labels(std::span<const std::string> raw, const LabelMap& map);

struct LoadDiagnostics {
  std::size_t rows_read = 0;
  std::size_t rows_dropped = 0;
  std::size_t benign = 0;
  std::size_t malicious = 0;

  std::string to_text() const;
};

struct LoadResult {
  Dataset dataset;
  LoadDiagnostics diagnostics;
};

/// Reads a header-first CSV. Every column except `label_column` must be numeric;
/// rows with an empty or non-numeric feature cell are dropped and counted.
LoadResult load_csv(const std::filesystem::path& path, const std::string& label_column,
                    const LabelMap& label_map);
void write_csv(const Dataset& dataset, const std::filesystem::path& path,
               const std::string& label_column, const LabelMap& label_map);

struct SplitSpec {
  double train_fraction = 0.70;
  double val_fraction = 0.15;
  double test_fraction = 0.15;
  std::uint64_t seed = 42;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Two-stage shuffle split of row indices 0..m-1. Stage one holds out
/// ceil((val+test)*m) rows; stage two takes ceil of the test share of those as test.
SplitIndices split_indices(std::size_t m, const SplitSpec& spec);

/// Rows reserved for fitting. Only produced by `split`, or explicitly via
/// `assume_training` when the caller already holds a training partition.
class TrainingSplit {
 public:
  static TrainingSplit assume_training(Dataset dataset) { return TrainingSplit(std::move(dataset)); }

  const Dataset& dataset() const noexcept { return dataset_; }
  Dataset& dataset() noexcept { return dataset_; }

 private:
  explicit TrainingSplit(Dataset dataset) : dataset_(std::move(dataset)) {}
  Dataset dataset_;
};

struct Partitions {
  TrainingSplit train;
  Dataset val;
  Dataset test;
};

Partitions split(const Dataset& dataset, const SplitSpec& spec);

struct ScalerParams {
  std::vector<double> means;
  std::vector<double> stds;  // population convention
};

ScalerParams fit_scaler(const TrainingSplit& train);
/// (x - mean) / std per column; columns with std below 1e-12 become 0.
Matrix apply_scaler(const ScalerParams& params, const Matrix& features);
Dataset apply_scaler(const ScalerParams& params, const Dataset& dataset);
ScalerParams select_scaler(const ScalerParams& params, std::span<const std::size_t> indices);

Dataset project_features(const Dataset& dataset, std::span<const std::size_t> selected);
/// Column indices for `names` inside `dataset`; throws feature-mismatch for absent names.
std::vector<std::size_t> resolve_features(const Dataset& dataset,
                                          std::span<const std::string> names);

struct SynthSpec {
  std::size_t n_rows = 20000;
  std::size_t n_features = 46;
  double benign_fraction = 0.5;
  std::uint64_t seed = 7;
  double noise = 0.05;
};

/// Ground truth of a synthetic set. A row is benign when
///   sum_j linear_weights[j] * x[linear_features[j]]
///     + amplitude * sin(frequency * x[periodic_feature]) + noise * N(0, 1) > threshold.
/// The linear features are 0/1 flags, like the TCP flag columns of flow data.
/// The periodic feature is normal around periodic_center, so the sinusoid is
/// even about the mean and carries no linear signal. Remaining features are
/// shifted and scaled normal noise.
struct SynthRule {
  std::vector<std::size_t> linear_features;
  std::vector<double> linear_weights;
  std::size_t periodic_feature = 0;
  double amplitude = 0.0;
  double frequency = 2.0;
  double periodic_center = 0.0;
  double periodic_spread = 0.0;
  double threshold = 0.0;
  double noise = 0.0;

  std::vector<std::size_t> informative_features() const;
  /// Noise-free decision score; positive means benign.
  double score(std::span<const double> row) const;
  std::string describe(const std::vector<std::string>& feature_names) const;
};

struct SynthResult {
  Dataset dataset;
  SynthRule rule;
};

SynthResult synth_generate(const SynthSpec& spec);

}  // namespace kanids::data
