// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <iostream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "kanids/baselines.hpp"
#include "kanids/cli.hpp"
#include "kanids/data.hpp"
#include "kanids/kan.hpp"
#include "kanids/metrics.hpp"
#include "kanids/model_io.hpp"
#include "kanids/splines.hpp"
#include "kanids/symbolic.hpp"
#include "kanids/trees.hpp"
#include "oracles.hpp"
#include "support.hpp"

#ifndef KANIDS_SOURCE_DIR
#define KANIDS_SOURCE_DIR "."
#endif

using namespace kanids;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

Outcome verdict(bool pass, std::string detail) { return {pass, std::move(detail)}; }

std::string num(double v, int digits = 4) { return format_fixed(v, digits); }

int run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) std::cerr << "kanids " << args.front() << " ... exited " << code << ": " << err.str();
  return code;
}

// ---------------------------------------------------------------- 1, 2

Outcome iteration_count() {
  const auto n = kan::iteration_count(734002, 128, 20);
  return verdict(n == 114680, "iteration_count(734002, 128, 20) = " + std::to_string(n));
}

Outcome split_counts() {
  const auto s = data::split_indices(1048575, {});
  const bool ok = s.train.size() == 734002 && s.val.size() == 157286 && s.test.size() == 157287;
  return verdict(ok, std::to_string(s.train.size()) + " / " + std::to_string(s.val.size()) + " / " +
                         std::to_string(s.test.size()));
}

// ---------------------------------------------------------------- 3

Outcome gradients() {
  Rng rng(22);
  auto net = kan::build_network(kan::parse_width_spec("3,(2,1),2"), {}, 21);
  auto params = kan::flatten_parameters(net);
  for (auto& v : params) v = rng.normal(0.0, 0.5);
  kan::assign_parameters(net, params);
  Matrix x(10, 3);
  for (auto& v : x.values()) v = rng.normal(0.0, 1.5);
  const std::vector<int> y{0, 1, 1, 0, 1, 0, 0, 1, 1, 1};

  auto pass = kan::forward(net, x);
  auto grad = kan::backward(net, pass.cache, kan::loss_softmax_xent(pass.logits, y).dlogits);
  std::size_t kan_bad = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto f = [&](double v) {
      auto probe = net;
      auto p = params;
      p[i] = v;
      kan::assign_parameters(probe, p);
      return kan::loss_softmax_xent(kan::forward_logits(probe, x), y).loss;
    };
    if (!oracle::close_relative(grad[i], oracle::central_difference(f, params[i], 1e-5), 1e-4, 1e-7)) ++kan_bad;
  }

  auto mlp = baselines::init_mlp(3, 6, 5);
  for (auto& v : mlp.params) v += rng.normal(0.0, 0.2);
  std::vector<double> mgrad;
  baselines::mlp_loss_and_gradient(mlp, x, y, &mgrad);
  std::size_t mlp_bad = 0;
  for (std::size_t i = 0; i < mlp.params.size(); ++i) {
    auto f = [&](double v) {
      auto probe = mlp;
      probe.params[i] = v;
      return baselines::mlp_loss_and_gradient(probe, x, y, nullptr);
    };
    if (!oracle::close_relative(mgrad[i], oracle::central_difference(f, mlp.params[i], 1e-5), 1e-4, 1e-7)) ++mlp_bad;
  }
  return verdict(kan_bad == 0 && mlp_bad == 0,
                 "KAN " + std::to_string(params.size() - kan_bad) + "/" + std::to_string(params.size()) +
                     " parameters, MLP " + std::to_string(mlp.params.size() - mlp_bad) + "/" +
                     std::to_string(mlp.params.size()));
}

// ---------------------------------------------------------------- 4

Outcome spline_invariants() {
  const auto g = spline::make_grid(-4, 4, 5, 3);
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(-4, 4);
  double worst_sum = 0.0;
  std::size_t deriv_bad = 0;
  for (int k = 0; k < 1000; ++k) {
    const double t = u(gen);
    const auto b = spline::basis_values(g, t);
    double s = 0.0;
    for (double v : b) s += v;
    worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    if (std::abs(t) < 3.9) {
      const auto d = spline::basis_derivatives(g, t);
      for (std::size_t i = 0; i < d.size(); ++i) {
        auto f = [&](double x) { return oracle::basis(-4, 4, 5, 3, x)[i]; };
        if (!oracle::close_relative(d[i], oracle::central_difference(f, t, 1e-6), 1e-5, 1e-8)) ++deriv_bad;
      }
    }
  }
  std::vector<std::pair<double, double>> samples;
  for (int i = 0; i <= 400; ++i) {
    const double t = -4 + 8.0 * i / 400;
    samples.emplace_back(t, t);
  }
  const auto curve = spline::least_squares_fit(g, samples);
  double worst_fit = 0.0;
  for (int i = 1; i < 400; ++i) {
    const double t = -4 + 8.0 * i / 400 + 0.003;
    worst_fit = std::max(worst_fit, std::abs(spline::eval_curve(curve, t) - t));
  }
  const bool ok = worst_sum <= 1e-12 && deriv_bad == 0 && worst_fit <= 1e-6;
  std::ostringstream d;
  d << "partition error " << worst_sum << ", derivative mismatches " << deriv_bad << ", identity fit error "
    << worst_fit;
  return verdict(ok, d.str());
}

// ---------------------------------------------------------------- 5

Outcome metrics_oracle() {
  std::mt19937_64 gen(2024);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + gen() % 200;
    std::bernoulli_distribution coin(std::uniform_real_distribution<double>(0, 1)(gen));
    std::vector<int> y(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = coin(gen);
      p[i] = coin(gen);
    }
    const auto m = metrics::per_class_metrics(y, p);
    const auto r = oracle::recount(y, p);
    for (int c = 0; c < 2; ++c) {
      mismatches += m.precision[c] != r.precision[c] || m.recall[c] != r.recall[c] || m.f1[c] != r.f1[c] ||
                    m.support[c] != r.support[c];
    }
    mismatches += m.accuracy != r.accuracy;
  }
  const auto h = metrics::per_class_metrics(std::vector<int>{0, 0, 1, 1}, std::vector<int>{0, 1, 1, 1});
  const bool hand = std::abs(h.precision[1] - 2.0 / 3.0) < 1e-15 && h.recall[1] == 1.0 && std::abs(h.f1[1] - 0.8) < 1e-15;
  return verdict(mismatches == 0 && hand, std::to_string(mismatches) + " mismatches over 1000 cases; hand example p=" +
                                              num(h.precision[1]) + " r=" + num(h.recall[1]) + " f1=" + num(h.f1[1]));
}

// ---------------------------------------------------------------- 6

Outcome function_approximation() {
  auto sample = [](Rng& rng, std::size_t n) {
    std::pair<Matrix, Matrix> xy{Matrix(n, 2), Matrix(n, 1)};
    for (std::size_t i = 0; i < n; ++i) {
      const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
      xy.first(i, 0) = a;
      xy.first(i, 1) = b;
      xy.second(i, 0) = std::sin(2 * a) + 0.5 * b;
    }
    return xy;
  };
  Rng rng(11);
  auto [x, y] = sample(rng, 2048);
  auto [xt, yt] = sample(rng, 1000);
  auto net = kan::build_regression_network(kan::parse_width_spec("2,(3,1),1"), {-4, 4, 5, 3}, 42);
  kan::TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.batch_size = 128;
  cfg.epochs = 200;
  kan::train_regression(net, x, y, cfg);
  const Matrix pred = kan::forward_logits(net, xt);
  double se = 0.0;
  for (std::size_t i = 0; i < xt.rows(); ++i) se += (pred(i, 0) - yt(i, 0)) * (pred(i, 0) - yt(i, 0));
  const double rmse = std::sqrt(se / static_cast<double>(xt.rows()));
  return verdict(rmse <= 1e-2, "held-out RMSE " + num(rmse, 5) + " after 200 epochs");
}

// ---------------------------------------------------------------- 7

std::vector<std::vector<std::string>> read_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream l(line);
    while (std::getline(l, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

Outcome symbolic_recovery(const fs::path& work) {
  const std::string dir = (work / "symbolic").string();
  if (run_cli({"--out", dir, "synth", "--noise", "0"}) != 0) return verdict(false, "synth failed");
  const std::string csv = dir + "/synth.csv";
  if (run_cli({"--out", dir, "train", "--data", csv, "--model", "kan", "--width", "none", "--grid-size", "10", "--lr",
               "0.01"}) != 0) {
    return verdict(false, "train failed");
  }
  const std::string model = dir + "/kan.model.json";
  if (run_cli({"--out", dir, "extract-formula", "--data", csv, "--model", model, "--precision", "17"}) != 0) {
    return verdict(false, "extract-formula failed");
  }

  const auto rule = nlohmann::json::parse(testing::read_file(fs::path(dir) / "synth_rule.json"));
  const std::string periodic = rule["periodic"]["feature"];
  const auto file = io::load_model(model);
  const auto& names = file.preprocessing.feature_names;
  const auto in = static_cast<std::size_t>(std::find(names.begin(), names.end(), periodic) - names.begin());

  const auto table = read_csv(testing::read_file(fs::path(dir) / "formula_edges.csv"));
  const auto& header = table.front();
  auto col = [&](const std::string& name) {
    return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
  };
  double best_sin = -1.0;
  for (std::size_t r = 1; r < table.size(); ++r) {
    const auto& row = table[r];
    if (row[col("layer")] == "0" && row[col("in")] == std::to_string(in) && row[col("primitive")] == "sin") {
      best_sin = std::max(best_sin, std::stod(row[col("r_squared")]));
    }
  }

  // Rebuild the sampling batch the command used and re-snap.
  auto raw = data::load_csv(csv, "label", file.preprocessing.label_map).dataset;
  auto parts = data::split(raw, file.preprocessing.split);
  const auto cols = data::resolve_features(parts.train.dataset(), names);
  const auto projected = data::project_features(parts.train.dataset(), cols);
  Matrix inputs = data::apply_scaler(file.preprocessing.scaler, projected.features);
  std::vector<std::size_t> head(std::min<std::size_t>(1000, inputs.rows()));
  std::iota(head.begin(), head.end(), std::size_t{0});
  const Matrix batch = inputs.take_rows(head);
  auto sn = symbolic::snap_network(std::get<kan::KanNetwork>(file.model), batch);
  sn.input_names = names;

  const std::string prefix = testing::read_file(fs::path(dir) / "formula.prefix");
  const std::string formula = testing::read_file(fs::path(dir) / "formula.txt");
  const bool same_snap = symbolic::emit_prefix(sn) == prefix;
  const Matrix reference = sn.evaluate(batch);
  double worst = 0.0;
  for (std::size_t r = 0; r < batch.rows(); r += 5) {
    std::vector<double> row(batch.row(r).begin(), batch.row(r).end());
    const auto from_prefix = oracle::eval_prefix_text(prefix, row);
    const auto from_text = oracle::eval_formula_text(formula, row);
    for (std::size_t k = 0; k < reference.cols(); ++k) {
      worst = std::max(worst, std::abs(from_prefix[k] - reference(r, k)));
      worst = std::max(worst, std::abs(from_text[k] - reference(r, k)));
    }
  }
  std::ostringstream d;
  d << "sin on " << periodic << " edge r^2 " << num(best_sin) << ", formula vs snapped network max diff " << worst;
  return verdict(best_sin >= 0.99 && same_snap && worst <= 1e-8, d.str());
}

// ---------------------------------------------------------------- 8, 9

struct Prepared {
  data::Dataset train, val, test;
  std::vector<std::size_t> informative;
};

Prepared prepare_synthetic() {
  data::SynthSpec spec;
  spec.n_rows = 20000;
  spec.seed = 7;
  auto synth = data::synth_generate(spec);
  auto parts = data::split(synth.dataset, {});
  const auto scaler = data::fit_scaler(parts.train);
  return {data::apply_scaler(scaler, parts.train.dataset()), data::apply_scaler(scaler, parts.val),
          data::apply_scaler(scaler, parts.test), synth.rule.informative_features()};
}

struct KanRun {
  double macro_f1 = 0.0;
  double seconds = 0.0;
};

KanRun train_kan(const Prepared& p, const std::vector<std::size_t>& features) {
  const auto tr = data::project_features(p.train, features);
  const auto va = data::project_features(p.val, features);
  const auto te = data::project_features(p.test, features);
  auto net = kan::build_network(kan::parse_width_spec(std::to_string(features.size()) + ",16,8,2"), {}, 42);
  kan::TrainConfig cfg;
  const kan::LabeledSet ts{tr.features, tr.labels};
  const kan::LabeledSet vs{va.features, va.labels};
  const auto h = kan::train(net, ts, &vs, cfg);
  const auto pred = kan::predict(net, te.features).labels;
  return {metrics::per_class_metrics(te.labels, pred).macro_f1(), h.wall_seconds};
}

std::vector<std::size_t> all_features(std::size_t d) {
  std::vector<std::size_t> v(d);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

Outcome comparative(const Prepared& p, const KanRun& kan_full) {
  const auto& tr = p.train;
  const auto lr = baselines::fit_baseline(baselines::BaselineKind::logistic_regression, {}, tr.features, tr.labels);
  const double lr_f1 =
      metrics::per_class_metrics(p.test.labels, baselines::predict_baseline(lr, p.test.features)).macro_f1();
  trees::ForestConfig fc;
  const auto rf = trees::fit_forest(tr.features, tr.labels, fc);
  const double rf_f1 = metrics::per_class_metrics(p.test.labels, trees::predict_forest(rf, p.test.features)).macro_f1();
  const bool ok = kan_full.macro_f1 >= 0.95 && lr_f1 <= kan_full.macro_f1 - 0.10 && rf_f1 >= 0.95;
  return verdict(ok, "macro-F1 KAN " + num(kan_full.macro_f1) + ", logistic regression " + num(lr_f1) +
                         ", random forest " + num(rf_f1));
}

Outcome feature_selection(const Prepared& p, const KanRun& kan_full) {
  trees::ForestConfig fc;
  const auto rf = trees::fit_forest(p.train.features, p.train.labels, fc);
  const auto top = trees::select_top_n(trees::feature_importances(rf), 10);
  const std::set<std::size_t> chosen(top.begin(), top.end());
  const bool contains = std::all_of(p.informative.begin(), p.informative.end(),
                                    [&](std::size_t j) { return chosen.count(j) == 1; });
  const auto t10 = train_kan(p, top);
  const bool ok = contains && t10.macro_f1 >= kan_full.macro_f1 - 0.05 && t10.seconds < kan_full.seconds;
  std::ostringstream d;
  d << "top-10 " << (contains ? "contains" : "misses") << " the " << p.informative.size()
    << " informative features; T10 KAN macro-F1 " << num(t10.macro_f1) << " in " << num(t10.seconds, 2)
    << " s vs full " << num(kan_full.macro_f1) << " in " << num(kan_full.seconds, 2) << " s";
  return verdict(ok, d.str());
}

// ---------------------------------------------------------------- 10

Outcome determinism(const fs::path& work) {
  std::vector<std::string> artifacts{"kan.model.json", "rf.model.json", "report.md", "report.csv"};
  std::vector<std::string> runs[2];
  for (int k = 0; k < 2; ++k) {
    const std::string dir = (work / ("run" + std::to_string(k))).string();
    const std::string csv = dir + "/synth.csv";
    const bool ok = run_cli({"--out", dir, "synth", "--rows", "4000"}) == 0 &&
                    run_cli({"--out", dir, "train", "--data", csv, "--model", "kan", "--epochs", "3"}) == 0 &&
                    run_cli({"--out", dir, "train", "--data", csv, "--model", "rf", "--trees", "30"}) == 0 &&
                    run_cli({"--out", dir, "evaluate", "--data", csv, "--timings", "omit", dir + "/kan.model.json",
                             dir + "/rf.model.json"}) == 0;
    if (!ok) return verdict(false, "pipeline run " + std::to_string(k + 1) + " failed");
    for (const auto& a : artifacts) runs[k].push_back(testing::read_file(fs::path(dir) / a));
  }
  std::size_t same = 0;
  for (std::size_t i = 0; i < artifacts.size(); ++i) same += runs[0][i] == runs[1][i];
  return verdict(same == artifacts.size(), std::to_string(same) + "/" + std::to_string(artifacts.size()) +
                                                " artifacts byte-identical across two runs");
}

// ---------------------------------------------------------------- 11

Outcome readme_statement() {
  const fs::path readme = fs::path(KANIDS_SOURCE_DIR) / "README.md";
  if (!fs::exists(readme)) return verdict(false, "README.md not found");
  const std::string text = testing::read_file(readme);
  const std::vector<std::string> needles{"26,720 s",        "0.94",       "1,048,575", "CIC IoT 2023",
                                         "not reproducible", "~7 h",       "Full-scale protocol", "--data"};
  std::vector<std::string> missing;
  for (const auto& n : needles) {
    if (text.find(n) == std::string::npos) missing.push_back(n);
  }
  std::string detail = "README states the scale limits and the full-scale protocol";
  if (!missing.empty()) {
    detail = "README lacks:";
    for (const auto& m : missing) detail += " '" + m + "'";
  }
  return verdict(missing.empty(), detail);
}

}  // namespace

int main() {
  testing::TempDir work("acceptance");
  bool all = true;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& check) {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      o = check();
    } catch (const std::exception& e) {
      o = verdict(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    all = all && o.pass;
    std::cout << "criterion " << id << " [" << (o.pass ? "PASS" : "FAIL") << "] " << name << ": " << o.detail << " ("
              << format_fixed(secs, 1) << " s)" << std::endl;
  };

  report(1, "iteration count", iteration_count);
  report(2, "split counts", split_counts);
  report(3, "gradient correctness", gradients);
  report(4, "spline invariants", spline_invariants);
  report(5, "metrics oracle", metrics_oracle);
  report(6, "function approximation", function_approximation);
  report(7, "symbolic recovery", [&] { return symbolic_recovery(work.path()); });

  std::optional<Prepared> prepared;
  KanRun full;
  auto shared = [&]() -> const Prepared& {
    if (!prepared) {
      prepared = prepare_synthetic();
      full = train_kan(*prepared, all_features(prepared->train.cols()));
    }
    return *prepared;
  };
  report(8, "comparative behavior", [&] { return comparative(shared(), full); });
  report(9, "feature selection", [&] { return feature_selection(shared(), full); });
  report(10, "determinism", [&] { return determinism(work.path()); });
  report(11, "non-reproducibility statement", readme_statement);

  std::cout << (all ? "all criteria passed" : "some criteria failed") << std::endl;
  return all ? 0 : 1;
}
