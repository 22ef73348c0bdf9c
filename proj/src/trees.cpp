#include "kanids/trees.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

namespace kanids::trees {
namespace {

double gini(double c0, double c1) {
  const double n = c0 + c1;
  if (n <= 0.0) return 0.0;
  const double p0 = c0 / n;
  const double p1 = c1 / n;
  return 1.0 - p0 * p0 - p1 * p1;
}

void check_training_data(const Matrix& x, std::span<const int> y) {
  if (x.rows() == 0) throw Error(ErrorCode::empty_data, "no training rows");
  if (y.size() != x.rows()) {
    throw Error(ErrorCode::dimension_mismatch, "label count differs from row count");
  }
  for (int v : y) {
    if (v != 0 && v != 1) throw Error(ErrorCode::invalid_label, "labels must be 0 or 1");
  }
}

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double decrease = -1.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, std::span<const int> y, std::optional<std::size_t> max_depth,
              std::size_t min_samples_split, std::optional<std::size_t> features_per_split,
              std::uint64_t seed)
      : x_(x), y_(y), max_depth_(max_depth), min_split_(min_samples_split),
        features_per_split_(features_per_split), seed_(seed) {}

  DecisionTree build(std::vector<std::size_t> rows) {
    DecisionTree tree;
    tree.n_features = x_.cols();
    tree.n_train = rows.size();
    rows_ = std::move(rows);

    struct Work {
      int node;
      std::size_t begin, end, depth;
    };
    tree.nodes.emplace_back();
    std::vector<Work> stack{{0, 0, rows_.size(), 0}};
    std::uint64_t visited = 0;
    while (!stack.empty()) {
      const Work w = stack.back();
      stack.pop_back();
      TreeNode node;
      node.n_samples = w.end - w.begin;
      for (std::size_t i = w.begin; i < w.end; ++i) ++node.class_counts[static_cast<std::size_t>(y_[rows_[i]])];

      const bool pure = node.class_counts[0] == 0 || node.class_counts[1] == 0;
      const bool depth_capped = max_depth_ && w.depth >= *max_depth_;
      SplitChoice choice;
      if (!pure && !depth_capped && node.n_samples >= min_split_) {
        choice = best_split(w.begin, w.end, node.class_counts, visited);
      }
      ++visited;

      if (choice.feature < 0) {
        tree.nodes[static_cast<std::size_t>(w.node)] = node;
        continue;
      }
      auto first = rows_.begin() + static_cast<std::ptrdiff_t>(w.begin);
      auto last = rows_.begin() + static_cast<std::ptrdiff_t>(w.end);
      auto mid = std::stable_partition(first, last, [&](std::size_t r) {
        return x_(r, static_cast<std::size_t>(choice.feature)) <= choice.threshold;
      });
      const std::size_t split_at = static_cast<std::size_t>(mid - rows_.begin());

      node.feature = choice.feature;
      node.threshold = choice.threshold;
      node.impurity_decrease = std::max(0.0, choice.decrease);
      node.left = static_cast<int>(tree.nodes.size());
      node.right = node.left + 1;
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      tree.nodes[static_cast<std::size_t>(w.node)] = node;
      // Right pushed first so the left subtree is expanded first.
      stack.push_back({node.right, split_at, w.end, w.depth + 1});
      stack.push_back({node.left, w.begin, split_at, w.depth + 1});
    }
    return tree;
  }

 private:
  // Best split over the node's candidate features. Returns feature -1 if no
  // feature separates any two rows.
  SplitChoice best_split(std::size_t begin, std::size_t end, const std::array<std::size_t, 2>& counts,
                         std::uint64_t node_serial) {
    const std::size_t d = x_.cols();
    const double n = static_cast<double>(end - begin);
    const double parent = gini(static_cast<double>(counts[0]), static_cast<double>(counts[1]));

    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t budget = d;
    std::optional<Rng> rng;
    if (features_per_split_ && *features_per_split_ < d) {
      budget = *features_per_split_;
      rng.emplace(mix_seed(seed_, node_serial));
    }

    SplitChoice best;
    std::size_t informative = 0;
    values_.resize(end - begin);
    for (std::size_t drawn = 0; drawn < d && informative < budget; ++drawn) {
      if (rng) {
        // Lazy Fisher-Yates draw without replacement.
        const std::size_t pick = drawn + rng->index(d - drawn);
        std::swap(order[drawn], order[pick]);
      }
      const std::size_t f = order[drawn];
      for (std::size_t i = begin; i < end; ++i) {
        values_[i - begin] = {x_(rows_[i], f), y_[rows_[i]]};
      }
      std::sort(values_.begin(), values_.end());
      if (values_.front().first == values_.back().first) continue;
      ++informative;

      double left0 = 0.0, left1 = 0.0;
      for (std::size_t i = 0; i + 1 < values_.size(); ++i) {
        (values_[i].second == 0 ? left0 : left1) += 1.0;
        const double here = values_[i].first;
        const double next = values_[i + 1].first;
        if (here == next) continue;
        double threshold = here + (next - here) / 2.0;
        if (threshold >= next) threshold = here;
        const double right0 = static_cast<double>(counts[0]) - left0;
        const double right1 = static_cast<double>(counts[1]) - left1;
        const double n_left = left0 + left1;
        const double n_right = right0 + right1;
        const double decrease =
            parent - (n_left / n) * gini(left0, left1) - (n_right / n) * gini(right0, right1);
        const int fi = static_cast<int>(f);
        const bool better =
            decrease > best.decrease ||
            (decrease == best.decrease &&
             (fi < best.feature || (fi == best.feature && threshold < best.threshold)));
        if (best.feature < 0 || better) best = {fi, threshold, decrease};
      }
    }
    return best;
  }

  const Matrix& x_;
  std::span<const int> y_;
  std::optional<std::size_t> max_depth_;
  std::size_t min_split_;
  std::optional<std::size_t> features_per_split_;
  std::uint64_t seed_;
  std::vector<std::size_t> rows_;
  std::vector<std::pair<double, int>> values_;
};

int leaf_vote(const TreeNode& leaf) { return leaf.class_counts[1] > leaf.class_counts[0] ? 1 : 0; }

int route(const DecisionTree& tree, std::span<const double> row) {
  std::size_t at = 0;
  while (!tree.nodes[at].is_leaf()) {
    const TreeNode& node = tree.nodes[at];
    at = static_cast<std::size_t>(row[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left
                                                                                               : node.right);
  }
  return leaf_vote(tree.nodes[at]);
}

void check_predict_dims(std::size_t expected, const Matrix& x) {
  if (x.cols() != expected) {
    throw Error(ErrorCode::dimension_mismatch, "model expects " + std::to_string(expected) +
                                                   " features, got " + std::to_string(x.cols()));
  }
}

}  // namespace

std::size_t DecisionTree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
  std::size_t deepest = 0;
  while (!stack.empty()) {
    auto [at, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    if (!nodes[at].is_leaf()) {
      stack.emplace_back(static_cast<std::size_t>(nodes[at].left), d + 1);
      stack.emplace_back(static_cast<std::size_t>(nodes[at].right), d + 1);
    }
  }
  return deepest;
}

std::size_t MaxFeatures::resolve(std::size_t d) const {
  switch (rule) {
    case Rule::sqrt: return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(d)))));
    case Rule::all: return d;
    case Rule::count: return std::clamp<std::size_t>(count, 1, d);
  }
  return d;
}

DecisionTree fit_tree(const Matrix& x, std::span<const int> y, const TreeConfig& config) {
  check_training_data(x, y);
  if (config.min_samples_split < 2) throw Error(ErrorCode::invalid_argument, "min_samples_split must be >= 2");
  std::vector<std::size_t> rows(x.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  TreeBuilder builder(x, y, config.max_depth, config.min_samples_split, std::nullopt, 0);
  return builder.build(std::move(rows));
}

std::vector<int> predict_tree(const DecisionTree& tree, const Matrix& x) {
  if (tree.nodes.empty()) throw Error(ErrorCode::unfit_model, "tree has no nodes");
  check_predict_dims(tree.n_features, x);
  std::vector<int> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out[r] = route(tree, x.row(r));
  return out;
}

RandomForest fit_forest(const Matrix& x, std::span<const int> y, const ForestConfig& config) {
  check_training_data(x, y);
  if (config.n_trees < 1) throw Error(ErrorCode::invalid_argument, "n_trees must be >= 1");
  if (config.min_samples_split < 2) throw Error(ErrorCode::invalid_argument, "min_samples_split must be >= 2");

  RandomForest forest;
  forest.n_features = x.cols();
  forest.trees.resize(config.n_trees);
  const std::size_t per_split = config.max_features.resolve(x.cols());
  const std::size_t m = x.rows();

  auto grow = [&](std::size_t t) {
    const std::uint64_t tree_seed = config.seed + t;
    std::vector<std::size_t> rows(m);
    if (config.bootstrap) {
      Rng rng(tree_seed);
      for (auto& r : rows) r = rng.index(m);
    } else {
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    }
    TreeBuilder builder(x, y, config.max_depth, config.min_samples_split, per_split, tree_seed);
    forest.trees[t] = builder.build(std::move(rows));
  };

  std::size_t workers = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, config.n_trees);
  if (workers <= 1) {
    for (std::size_t t = 0; t < config.n_trees; ++t) grow(t);
    return forest;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t t = next++; t < config.n_trees; t = next++) grow(t);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return forest;
}

std::vector<std::array<std::size_t, 2>> forest_votes(const RandomForest& forest, const Matrix& x) {
  if (forest.trees.empty()) throw Error(ErrorCode::unfit_model, "forest has no trees");
  check_predict_dims(forest.n_features, x);
  std::vector<std::array<std::size_t, 2>> votes(x.rows(), {0, 0});
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (const auto& tree : forest.trees) ++votes[r][static_cast<std::size_t>(route(tree, x.row(r)))];
  }
  return votes;
}

std::vector<int> predict_forest(const RandomForest& forest, const Matrix& x) {
  const auto votes = forest_votes(forest, x);
  std::vector<int> out(votes.size());
  for (std::size_t r = 0; r < votes.size(); ++r) out[r] = votes[r][1] > votes[r][0] ? 1 : 0;
  return out;
}

std::vector<double> tree_importances(const DecisionTree& tree) {
  std::vector<double> imp(tree.n_features, 0.0);
  if (tree.nodes.empty() || tree.nodes.front().n_samples == 0) return imp;
  const double total = static_cast<double>(tree.nodes.front().n_samples);
  for (const auto& node : tree.nodes) {
    if (node.is_leaf()) continue;
    imp[static_cast<std::size_t>(node.feature)] +=
        static_cast<double>(node.n_samples) / total * node.impurity_decrease;
  }
  const double sum = std::accumulate(imp.begin(), imp.end(), 0.0);
  if (sum > 0.0) {
    for (auto& v : imp) v /= sum;
  }
  return imp;
}

std::vector<double> feature_importances(const RandomForest& forest) {
  if (forest.trees.empty()) throw Error(ErrorCode::unfit_model, "forest has no trees");
  std::vector<double> imp(forest.n_features, 0.0);
  for (const auto& tree : forest.trees) {
    const auto t = tree_importances(tree);
    for (std::size_t j = 0; j < imp.size(); ++j) imp[j] += t[j];
  }
  const double sum = std::accumulate(imp.begin(), imp.end(), 0.0);
  if (sum > 0.0) {
    for (auto& v : imp) v /= sum;
  }
  return imp;
}

std::vector<std::size_t> select_top_n(std::span<const double> importances, std::size_t n) {
  if (n < 1 || n > importances.size()) {
    throw Error(ErrorCode::invalid_n, "n=" + std::to_string(n) + " with " +
                                          std::to_string(importances.size()) + " features");
  }
  std::vector<std::size_t> order(importances.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return importances[a] > importances[b]; });
  order.resize(n);
  return order;
}

}  // namespace kanids::trees
