#include "kanids/trees.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "support.hpp"

using namespace kanids;

namespace {

struct Data {
  Matrix x;
  std::vector<int> y;
};

Data separable_1d(std::size_t m, std::uint64_t seed) {
  Rng rng(seed);
  Data d{Matrix(m, 1), {}};
  for (std::size_t i = 0; i < m; ++i) {
    d.x(i, 0) = rng.uniform(-1, 1);
    d.y.push_back(d.x(i, 0) >= 0 ? 1 : 0);
  }
  return d;
}

Data noisy(std::size_t m, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Data out{Matrix(m, d), {}};
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < d; ++j) out.x(i, j) = rng.normal();
    out.y.push_back(out.x(i, 0) + 0.5 * out.x(i, 1) * out.x(i, 2) + 0.3 * rng.normal() > 0 ? 1 : 0);
  }
  return out;
}

double gini(double n0, double n1) {
  const double n = n0 + n1;
  if (n == 0) return 0.0;
  return 1.0 - (n0 / n) * (n0 / n) - (n1 / n) * (n1 / n);
}

// Best (threshold, weighted impurity decrease) over all midpoints of one column.
std::pair<double, double> best_split_1d(const Matrix& x, std::span<const int> y) {
  std::vector<std::pair<double, int>> v;
  for (std::size_t i = 0; i < x.rows(); ++i) v.emplace_back(x(i, 0), y[i]);
  std::sort(v.begin(), v.end());
  double t0 = 0, t1 = 0;
  for (auto [xv, yv] : v) (yv ? t1 : t0) += 1;
  const double parent = gini(t0, t1);
  double best = -1, best_t = 0;
  double l0 = 0, l1 = 0;
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    (v[i].second ? l1 : l0) += 1;
    if (v[i].first == v[i + 1].first) continue;
    const double n = static_cast<double>(v.size());
    const double nl = l0 + l1, nr = n - nl;
    const double dec = parent - nl / n * gini(l0, l1) - nr / n * gini(t0 - l0, t1 - l1);
    if (dec > best + 1e-15) {
      best = dec;
      best_t = 0.5 * (v[i].first + v[i + 1].first);
    }
  }
  return {best_t, best};
}

double accuracy(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ok += a[i] == b[i];
  return static_cast<double>(ok) / static_cast<double>(a.size());
}

}  // namespace

TEST_CASE("constant labels give one leaf") {
  Matrix x(5, 2, 1.0);
  std::vector<int> y(5, 1);
  auto t = trees::fit_tree(x, y);
  CHECK(t.nodes.size() == 1);
  CHECK(t.nodes[0].is_leaf());
  CHECK(trees::predict_tree(t, x) == y);
}

TEST_CASE("one-dimensional threshold") {
  auto d = separable_1d(200, 3);
  auto t = trees::fit_tree(d.x, d.y);
  REQUIRE(t.nodes.size() == 3);
  CHECK(t.nodes[0].feature == 0);
  auto [thr, dec] = best_split_1d(d.x, d.y);
  CHECK(t.nodes[0].threshold == thr);
  CHECK(t.nodes[0].impurity_decrease == doctest::Approx(dec).epsilon(1e-12));
  CHECK(accuracy(trees::predict_tree(t, d.x), d.y) == 1.0);
}

TEST_CASE("AND on a boolean grid") {
  Matrix x(4, 2, std::vector<double>{0, 0, 0, 1, 1, 0, 1, 1});
  std::vector<int> y{0, 0, 0, 1};
  auto t = trees::fit_tree(x, y);
  CHECK(t.depth() == 2);
  CHECK(trees::predict_tree(t, x) == y);
  // Both features give the same first-split decrease; the lower index wins.
  CHECK(t.nodes[0].feature == 0);
  CHECK(t.nodes[0].threshold == 0.5);
}

TEST_CASE("threshold equality routes left") {
  Matrix x(4, 1, std::vector<double>{0, 1, 2, 3});
  std::vector<int> y{0, 0, 1, 1};
  auto t = trees::fit_tree(x, y);
  REQUIRE(t.nodes[0].threshold == 1.5);
  Matrix q(1, 1, 1.5);
  CHECK(trees::predict_tree(t, q)[0] == 0);
  Matrix q2(1, 1, std::nextafter(1.5, 2.0));
  CHECK(trees::predict_tree(t, q2)[0] == 1);
}

TEST_CASE("tree limits and errors") {
  auto d = noisy(300, 4, 5);
  trees::TreeConfig shallow;
  shallow.max_depth = 2;
  CHECK(trees::fit_tree(d.x, d.y, shallow).depth() <= 2);
  trees::TreeConfig big_split;
  big_split.min_samples_split = 1000;
  CHECK(trees::fit_tree(d.x, d.y, big_split).nodes.size() == 1);

  CHECK_CODE(trees::fit_tree(Matrix(0, 2), std::vector<int>{}), ErrorCode::empty_data);
  CHECK_CODE(trees::fit_tree(Matrix(3, 2), std::vector<int>{0, 1}), ErrorCode::dimension_mismatch);
  auto t = trees::fit_tree(d.x, d.y);
  CHECK_CODE(trees::predict_tree(t, Matrix(2, 3)), ErrorCode::dimension_mismatch);
}

TEST_CASE("unlimited trees memorize distinct rows") {
  auto d = noisy(400, 5, 8);
  auto t = trees::fit_tree(d.x, d.y);
  CHECK(trees::predict_tree(t, d.x) == d.y);
  for (const auto& n : t.nodes) {
    if (n.is_leaf()) CHECK((n.class_counts[0] == 0 || n.class_counts[1] == 0));
  }
}

TEST_CASE("conflicting duplicates end in a majority leaf") {
  Matrix x(5, 1, 2.0);
  std::vector<int> y{1, 0, 1, 0, 1};
  auto t = trees::fit_tree(x, y);
  CHECK(t.nodes.size() == 1);
  CHECK(trees::predict_tree(t, x)[0] == 1);
  std::vector<int> tie{1, 0, 1, 0};
  auto t2 = trees::fit_tree(Matrix(4, 1, 2.0), tie);
  CHECK(trees::predict_tree(t2, Matrix(1, 1, 2.0))[0] == 0);
}

TEST_CASE("forest degenerates to a tree") {
  auto d = noisy(300, 4, 11);
  trees::ForestConfig cfg;
  cfg.n_trees = 1;
  cfg.bootstrap = false;
  cfg.max_features.rule = trees::MaxFeatures::Rule::all;
  auto f = trees::fit_forest(d.x, d.y, cfg);
  auto t = trees::fit_tree(d.x, d.y);
  CHECK(f.trees[0] == t);
  CHECK(trees::predict_forest(f, d.x) == trees::predict_tree(t, d.x));
}

TEST_CASE("forest determinism") {
  auto d = noisy(500, 6, 12);
  trees::ForestConfig cfg;
  cfg.n_trees = 20;
  cfg.threads = 1;
  auto a = trees::fit_forest(d.x, d.y, cfg);
  cfg.threads = 7;
  auto b = trees::fit_forest(d.x, d.y, cfg);
  CHECK(a == b);
  CHECK(trees::predict_forest(a, d.x) == trees::predict_forest(b, d.x));
  cfg.seed = 43;
  CHECK_FALSE(trees::fit_forest(d.x, d.y, cfg) == a);
}

TEST_CASE("forest holdout on a separable task") {
  auto train = separable_1d(400, 21);
  auto test = separable_1d(200, 22);
  trees::ForestConfig cfg;
  cfg.n_trees = 25;
  auto f = trees::fit_forest(train.x, train.y, cfg);
  CHECK(accuracy(trees::predict_forest(f, test.x), test.y) >= 0.95);
}

TEST_CASE("forest votes") {
  auto d = noisy(200, 4, 31);
  trees::ForestConfig cfg;
  cfg.n_trees = 9;
  auto f = trees::fit_forest(d.x, d.y, cfg);
  auto votes = trees::forest_votes(f, d.x);
  auto pred = trees::predict_forest(f, d.x);
  for (std::size_t i = 0; i < votes.size(); ++i) {
    CHECK(votes[i][0] + votes[i][1] == 9);
    CHECK(pred[i] == (votes[i][1] > votes[i][0] ? 1 : 0));
  }

  // Two stumps that disagree on every row: the tie goes to class 0.
  Matrix x(2, 1, std::vector<double>{0, 1});
  auto up = trees::fit_tree(x, std::vector<int>{0, 1});
  auto down = trees::fit_tree(x, std::vector<int>{1, 0});
  trees::RandomForest split{{up, down}, 1};
  CHECK(trees::predict_forest(split, x) == std::vector<int>{0, 0});

  trees::RandomForest same{{up, up, up}, 1};
  CHECK(trees::predict_forest(same, x) == trees::predict_tree(up, x));
  CHECK_CODE(trees::predict_forest(same, Matrix(1, 2)), ErrorCode::dimension_mismatch);
}

TEST_CASE("feature importances") {
  Rng rng(41);
  const std::size_t m = 600;
  Matrix x(m, 4);
  std::vector<int> y;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < 4; ++j) x(i, j) = rng.normal();
    y.push_back(x(i, 2) > 0.1 ? 1 : 0);
  }
  trees::ForestConfig cfg;
  cfg.n_trees = 25;
  auto f = trees::fit_forest(x, y, cfg);
  auto imp = trees::feature_importances(f);
  CHECK(imp[2] >= 0.8);
  CHECK(std::accumulate(imp.begin(), imp.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(trees::select_top_n(imp, 1) == std::vector<std::size_t>{2});

  SUBCASE("hand computed tree importance") {
    // Root splits 4 rows perfectly on feature 1: decrease 0.5, the only split.
    Matrix g(4, 2, std::vector<double>{5, 0, 1, 0, 5, 1, 1, 1});
    auto t = trees::fit_tree(g, std::vector<int>{0, 0, 1, 1});
    CHECK(t.nodes[0].impurity_decrease == doctest::Approx(0.5));
    CHECK(trees::tree_importances(t) == std::vector<double>{0.0, 1.0});
  }

  SUBCASE("no splits give zeros") {
    trees::ForestConfig c3;
    c3.n_trees = 3;
    auto flat = trees::fit_forest(x, std::vector<int>(m, 1), c3);
    for (double v : trees::feature_importances(flat)) CHECK(v == 0.0);
  }

  CHECK_CODE(trees::feature_importances(trees::RandomForest{}), ErrorCode::unfit_model);
}

TEST_CASE("importances follow a column permutation") {
  auto d = noisy(300, 5, 51);
  trees::ForestConfig cfg;
  cfg.n_trees = 1;
  cfg.bootstrap = false;
  cfg.max_features.rule = trees::MaxFeatures::Rule::all;
  // Small deep nodes tie across features and the tie rule prefers lower
  // indices, so the comparison is made on trees whose splits are all strict.
  cfg.max_depth = 4;
  auto base = trees::feature_importances(trees::fit_forest(d.x, d.y, cfg));
  std::vector<std::size_t> perm{3, 0, 4, 2, 1};
  auto px = d.x.take_cols(perm);
  auto permuted = trees::feature_importances(trees::fit_forest(px, d.y, cfg));
  for (std::size_t j = 0; j < perm.size(); ++j) {
    CHECK(permuted[j] == doctest::Approx(base[perm[j]]).epsilon(1e-12));
  }
}

TEST_CASE("top n selection") {
  CHECK(trees::select_top_n(std::vector<double>{0.5, 0.3, 0.2}, 2) == std::vector<std::size_t>{0, 1});
  CHECK(trees::select_top_n(std::vector<double>{0.4, 0.4, 0.2}, 1) == std::vector<std::size_t>{0});
  CHECK(trees::select_top_n(std::vector<double>{0.1, 0.4, 0.4, 0.1}, 4) == std::vector<std::size_t>{1, 2, 0, 3});
  CHECK_CODE(trees::select_top_n(std::vector<double>{0.5, 0.3, 0.2}, 4), ErrorCode::invalid_n);
  CHECK_CODE(trees::select_top_n(std::vector<double>{0.5, 0.3, 0.2}, 0), ErrorCode::invalid_n);
}

TEST_CASE("max features rule") {
  CHECK(trees::MaxFeatures{}.resolve(46) == 6);
  CHECK(trees::MaxFeatures{}.resolve(10) == 3);
  CHECK(trees::MaxFeatures{trees::MaxFeatures::Rule::all, 0}.resolve(10) == 10);
  CHECK(trees::MaxFeatures{trees::MaxFeatures::Rule::count, 4}.resolve(10) == 4);
}
