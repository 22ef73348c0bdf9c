#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "kanids/baselines.hpp"
#include "kanids/data.hpp"
#include "kanids/kan.hpp"
#include "kanids/trees.hpp"

namespace kanids::io {

inline constexpr int kFormatVersion = 1;

enum class ModelKind { kan, rf, dt, lr, gnb, knn, mlp };

std::string to_string(ModelKind kind);
/// Throws invalid-arg listing the valid names.
ModelKind parse_model_kind(const std::string& name);
const std::vector<std::string>& model_kind_names();
/// Row label used in reports, e.g. "Random Forest".
std::string display_name(ModelKind kind);

/// Everything needed to turn a raw CSV into the model's input matrix.
struct Preprocessing {
  /// Input columns in model order.
  std::vector<std::string> feature_names;
  /// Statistics for exactly those columns.
  data::ScalerParams scaler;
  data::LabelMap label_map;
  std::string label_column = "label";
  std::optional<std::size_t> top_n;
  data::SplitSpec split;
};

using ModelState = std::variant<kan::KanNetwork, trees::RandomForest, trees::DecisionTree, baselines::FittedBaseline>;

struct ModelFile {
  ModelKind kind = ModelKind::kan;
  Preprocessing preprocessing;
  ModelState model;
};

std::string serialize(const ModelFile& file);
/// Throws version-mismatch for other format versions and corrupt-file for anything malformed.
ModelFile deserialize(const std::string& text);

void save_model(const ModelFile& file, const std::filesystem::path& path);
ModelFile load_model(const std::filesystem::path& path);

void save_model(const kan::KanNetwork& network, const data::ScalerParams& scaler,
                const std::vector<std::string>& feature_names, const std::filesystem::path& path);

}  // namespace kanids::io
