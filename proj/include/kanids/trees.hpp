#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "kanids/core.hpp"

namespace kanids::trees {

/// Flat-array tree node. Leaves have feature == -1 and no children.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double impurity_decrease = 0.0;
  std::size_t n_samples = 0;
  std::array<std::size_t, 2> class_counts{};

  bool is_leaf() const noexcept { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::size_t n_features = 0;
  std::size_t n_train = 0;

  std::size_t depth() const;
  bool operator==(const DecisionTree&) const = default;
};

struct MaxFeatures {
  enum class Rule { sqrt, all, count } rule = Rule::sqrt;
  std::size_t count = 0;

  std::size_t resolve(std::size_t d) const;
};

struct ForestConfig {
  std::size_t n_trees = 100;
  std::optional<std::size_t> max_depth;
  std::size_t min_samples_split = 2;
  MaxFeatures max_features;
  bool bootstrap = true;
  std::uint64_t seed = 42;
  /// 0 picks the hardware concurrency. Results do not depend on it.
  std::size_t threads = 0;
};

struct TreeConfig {
  std::optional<std::size_t> max_depth;
  std::size_t min_samples_split = 2;
};

/// Greedy CART on Gini impurity using every feature at every split.
DecisionTree fit_tree(const Matrix& x, std::span<const int> y, const TreeConfig& config = {});
std::vector<int> predict_tree(const DecisionTree& tree, const Matrix& x);

struct RandomForest {
  std::vector<DecisionTree> trees;
  std::size_t n_features = 0;

  bool operator==(const RandomForest&) const = default;
};

RandomForest fit_forest(const Matrix& x, std::span<const int> y, const ForestConfig& config);
std::vector<int> predict_forest(const RandomForest& forest, const Matrix& x);
/// Per row: number of trees voting for class 0 and class 1.
std::vector<std::array<std::size_t, 2>> forest_votes(const RandomForest& forest, const Matrix& x);

/// Mean decrease in impurity, normalized per tree, averaged, renormalized.
std::vector<double> feature_importances(const RandomForest& forest);
std::vector<double> tree_importances(const DecisionTree& tree);

/// Indices of the n largest importances, descending; ties go to the lower index.
std::vector<std::size_t> select_top_n(std::span<const double> importances, std::size_t n);

}  // namespace kanids::trees
