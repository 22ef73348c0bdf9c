#include "kanids/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "kanids/baselines.hpp"
#include "kanids/data.hpp"
#include "kanids/kan.hpp"
#include "kanids/metrics.hpp"
#include "kanids/model_io.hpp"
#include "kanids/symbolic.hpp"
#include "kanids/trees.hpp"

namespace kanids::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

constexpr const char* kToolVersion = "0.1.0";

/// Bad flag combinations found after parsing. Exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::string label_column = "label";
  std::string config;

  std::uint64_t seed_or(std::uint64_t fallback) const { return seed.value_or(fallback); }
};

struct DataOptions {
  std::string path;
  std::size_t synth_rows = 0;
  std::uint64_t synth_seed = 7;
  double synth_noise = 0.05;
  std::string benign_label = "BenignTraffic";
};

void add_data_options(CLI::App* sub, DataOptions& d) {
  sub->add_option("--data", d.path, "CSV file with a header row and a label column");
  sub->add_option("--synth-rows", d.synth_rows, "Use a generated dataset with this many rows instead of --data");
  sub->add_option("--synth-seed", d.synth_seed, "Seed of the generated dataset")->capture_default_str();
  sub->add_option("--synth-noise", d.synth_noise, "Score noise of the generated dataset")->capture_default_str();
  sub->add_option("--benign-label", d.benign_label, "Label string mapped to class 1")->capture_default_str();
}

struct LoadedData {
  data::Dataset dataset;
  json source;
};

std::uint64_t fingerprint(const data::Dataset& ds) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& name : ds.feature_names) mix(name.data(), name.size() + 1);
  const auto& v = ds.features.values();
  mix(v.data(), v.size() * sizeof(double));
  mix(ds.labels.data(), ds.labels.size() * sizeof(int));
  return h;
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex;
  s.width(16);
  s.fill('0');
  s << v;
  return s.str();
}

LoadedData load_data(const DataOptions& d, const GlobalOptions& g, std::ostream& err) {
  const bool has_path = !d.path.empty();
  const bool has_synth = d.synth_rows > 0;
  if (has_path == has_synth) throw UsageError("give exactly one data source: --data PATH or --synth-rows N");
  LoadedData out;
  if (has_path) {
    auto loaded = data::load_csv(d.path, g.label_column, data::LabelMap{d.benign_label});
    err << loaded.diagnostics.to_text();
    out.dataset = std::move(loaded.dataset);
    out.source = {{"kind", "csv"}, {"path", d.path}};
  } else {
    data::SynthSpec spec;
    spec.n_rows = d.synth_rows;
    spec.seed = d.synth_seed;
    spec.noise = d.synth_noise;
    out.dataset = data::synth_generate(spec).dataset;
    out.source = {{"kind", "synthetic"}, {"rows", d.synth_rows}, {"seed", d.synth_seed}, {"noise", d.synth_noise}};
  }
  out.source["rows"] = out.dataset.rows();
  out.source["columns"] = out.dataset.cols();
  out.source["content_hash"] = hex(fingerprint(out.dataset));
  return out;
}

/// Split, then standardize every partition with training statistics.
struct Prepared {
  data::Dataset train, val, test;
  data::ScalerParams scaler;
  data::SplitSpec split;
};

Prepared prepare(const data::Dataset& ds, std::uint64_t split_seed) {
  Prepared p;
  p.split.seed = split_seed;
  auto parts = data::split(ds, p.split);
  p.scaler = data::fit_scaler(parts.train);
  p.train = data::apply_scaler(p.scaler, parts.train.dataset());
  p.val = data::apply_scaler(p.scaler, parts.val);
  p.test = data::apply_scaler(p.scaler, parts.test);
  return p;
}

trees::RandomForest fit_selector(const data::Dataset& train, std::uint64_t seed, std::size_t n_trees) {
  trees::ForestConfig fc;
  fc.seed = seed;
  fc.n_trees = n_trees;
  return trees::fit_forest(train.features, train.labels, fc);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorCode::io_error, "cannot create output directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  f << text;
  if (!f) throw Error(ErrorCode::io_error, "failed writing " + path.string());
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::io_error, "cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty() && line.front() != '#') lines.push_back(line);
  }
  return lines;
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::io_error, "cannot read " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::corrupt_file, path.string() + ": " + e.what());
  }
}

std::string model_stem(const fs::path& model_path) {
  std::string name = model_path.filename().string();
  const std::string suffix = ".model.json";
  if (name.size() > suffix.size() && name.ends_with(suffix)) return name.substr(0, name.size() - suffix.size());
  return model_path.stem().string();
}

fs::path timing_path_for(const fs::path& model_path) {
  return model_path.parent_path() / (model_stem(model_path) + ".timing.json");
}

/// Scaled model inputs for `ds` according to a model's stored preprocessing.
Matrix model_inputs(const io::Preprocessing& p, const data::Dataset& raw) {
  const auto idx = data::resolve_features(raw, p.feature_names);
  return data::apply_scaler(p.scaler, raw.features.take_cols(idx));
}

std::vector<int> predict_any(const io::ModelState& model, const Matrix& x) {
  return std::visit(
      [&](const auto& m) -> std::vector<int> {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, kan::KanNetwork>) return kan::predict(m, x).labels;
        else if constexpr (std::is_same_v<T, trees::RandomForest>) return trees::predict_forest(m, x);
        else if constexpr (std::is_same_v<T, trees::DecisionTree>) return trees::predict_tree(m, x);
        else return baselines::predict_baseline(m, x);
      },
      model);
}

/// Leading rows of a matrix, at most `n`.
Matrix head_rows(const Matrix& m, std::size_t n) {
  std::vector<std::size_t> idx(std::min(n, m.rows()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return m.take_rows(idx);
}

const io::ModelFile& require_kan(const io::ModelFile& file, const std::string& path) {
  if (file.kind != io::ModelKind::kan) {
    throw UsageError(path + " holds a '" + io::to_string(file.kind) + "' model; this command needs a KAN model");
  }
  return file;
}

/// Training rows of the dataset a KAN model was fit on, in model input space.
Matrix kan_sample_batch(const io::ModelFile& file, const data::Dataset& raw, std::size_t rows) {
  auto parts = data::split(raw, file.preprocessing.split);
  return head_rows(model_inputs(file.preprocessing, parts.train.dataset()), rows);
}

// ---------------------------------------------------------------- commands

struct SynthOptions {
  std::size_t rows = 20000;
  std::size_t features = 46;
  double benign_fraction = 0.5;
  double noise = 0.05;
};

int cmd_synth(const GlobalOptions& g, const SynthOptions& o, std::ostream& out) {
  data::SynthSpec spec;
  spec.n_rows = o.rows;
  spec.n_features = o.features;
  spec.benign_fraction = o.benign_fraction;
  spec.noise = o.noise;
  spec.seed = g.seed_or(7);
  auto result = data::synth_generate(spec);
  const fs::path dir(g.out);
  ensure_dir(dir);
  data::write_csv(result.dataset, dir / "synth.csv", g.label_column, data::LabelMap{});

  const auto& r = result.rule;
  const auto& names = result.dataset.feature_names;
  json rule;
  rule["description"] = r.describe(names);
  json lin = json::array();
  for (std::size_t j = 0; j < r.linear_features.size(); ++j) {
    lin.push_back({{"feature", names[r.linear_features[j]]}, {"weight", r.linear_weights[j]}});
  }
  rule["linear"] = lin;
  rule["periodic"] = {{"feature", names[r.periodic_feature]},
                      {"amplitude", r.amplitude},
                      {"frequency", r.frequency},
                      {"center", r.periodic_center},
                      {"spread", r.periodic_spread}};
  rule["threshold"] = r.threshold;
  rule["noise"] = r.noise;
  json informative = json::array();
  for (std::size_t j : r.informative_features()) informative.push_back(names[j]);
  rule["informative_features"] = informative;
  rule["spec"] = {{"rows", spec.n_rows},
                  {"features", spec.n_features},
                  {"benign_fraction", spec.benign_fraction},
                  {"seed", spec.seed},
                  {"noise", spec.noise}};
  write_text(dir / "synth_rule.json", rule.dump(2) + "\n");
  out << "wrote " << (dir / "synth.csv").string() << " and " << (dir / "synth_rule.json").string() << "\n";
  return kExitOk;
}

struct SelectOptions {
  DataOptions data;
  std::size_t top = 10;
  std::size_t trees = 100;
};

int cmd_select(const GlobalOptions& g, const SelectOptions& o, std::ostream& out, std::ostream& err) {
  if (o.top == 0) throw UsageError("--top must be >= 1");
  auto loaded = load_data(o.data, g, err);
  const auto& ds = loaded.dataset;
  if (o.top > ds.cols()) {
    throw UsageError("--top " + std::to_string(o.top) + " exceeds the " + std::to_string(ds.cols()) + " features");
  }
  const std::uint64_t seed = g.seed_or(42);
  const Prepared p = prepare(ds, seed);
  const auto forest = fit_selector(p.train, seed, o.trees);
  const auto imp = trees::feature_importances(forest);
  const auto ranked = trees::select_top_n(imp, ds.cols());

  const fs::path dir(g.out);
  ensure_dir(dir);
  std::ostringstream csv;
  csv << "rank,feature,importance\n";
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    csv << r + 1 << ',' << ds.feature_names[ranked[r]] << ',' << format_exact(imp[ranked[r]]) << '\n';
  }
  write_text(dir / "importances.csv", csv.str());
  std::ostringstream sel;
  for (std::size_t r = 0; r < o.top; ++r) sel << ds.feature_names[ranked[r]] << '\n';
  write_text(dir / "selected_features.txt", sel.str());
  out << "top " << o.top << " features:";
  for (std::size_t r = 0; r < o.top; ++r) out << ' ' << ds.feature_names[ranked[r]];
  out << "\n";
  return kExitOk;
}

struct TrainOptions {
  DataOptions data;
  std::string model = "kan";
  std::string name;
  std::string width = "16,8";
  bool multikan = false;
  int grid_size = 5;
  double grid_range = 4.0;
  int degree = 3;
  std::size_t epochs = 20;
  std::size_t batch = 128;
  double lr = 0.001;
  std::string features = "full";
  std::size_t top = 0;
  std::string selected;
  std::size_t trees = 100;
  std::optional<std::size_t> max_depth;
  std::size_t k = 5;
  std::size_t hidden = 100;
};

std::string resolve_width(const TrainOptions& o, std::size_t inputs) {
  if (o.width == "none") return std::to_string(inputs) + ",2";
  std::string hidden = o.width;
  if (o.multikan && hidden.find_first_of("([") == std::string::npos) hidden = "(" + hidden + ")";
  return std::to_string(inputs) + "," + hidden + ",2";
}

int cmd_train(const GlobalOptions& g, const TrainOptions& o, std::ostream& out, std::ostream& err) {
  const io::ModelKind kind = [&] {
    try {
      return io::parse_model_kind(o.model);
    } catch (const Error& e) {
      throw UsageError(e.message());
    }
  }();
  if (o.features != "full" && o.features.rfind("top", 0) != 0) {
    throw UsageError("--features must be 'full' or 'topN' (e.g. top10)");
  }
  std::size_t top = o.top;
  if (o.features.rfind("top", 0) == 0 && o.features.size() > 3) {
    try {
      top = std::stoul(o.features.substr(3));
    } catch (const std::exception&) {
      throw UsageError("cannot read a count from --features " + o.features);
    }
  }
  if (o.features.rfind("top", 0) == 0 && top == 0 && o.selected.empty()) {
    throw UsageError("--features " + o.features + " needs --top N or --selected FILE");
  }
  if (kind == io::ModelKind::kan && o.width != "none") kan::parse_width_spec("1," + o.width + ",2");

  const std::uint64_t seed = g.seed_or(42);
  auto loaded = load_data(o.data, g, err);
  const auto& ds = loaded.dataset;
  Prepared p = prepare(ds, seed);

  // Feature selection happens after scaling, on the training split only.
  std::vector<std::size_t> selected;
  std::optional<std::size_t> top_n;
  if (!o.selected.empty()) {
    auto names = read_lines(o.selected);
    if (top > 0 && top < names.size()) names.resize(top);
    selected = data::resolve_features(ds, names);
    top_n = selected.size();
  } else if (top > 0) {
    if (top > ds.cols()) {
      throw UsageError("--top " + std::to_string(top) + " exceeds the " + std::to_string(ds.cols()) + " features");
    }
    selected = trees::select_top_n(trees::feature_importances(fit_selector(p.train, seed, o.trees)), top);
    top_n = top;
  } else {
    selected.resize(ds.cols());
    for (std::size_t j = 0; j < ds.cols(); ++j) selected[j] = j;
  }
  data::Dataset train = data::project_features(p.train, selected);
  data::Dataset val = data::project_features(p.val, selected);

  io::ModelFile file;
  file.kind = kind;
  file.preprocessing.feature_names = train.feature_names;
  file.preprocessing.scaler = data::select_scaler(p.scaler, selected);
  file.preprocessing.label_map.benign_label = o.data.benign_label;
  file.preprocessing.label_column = g.label_column;
  file.preprocessing.top_n = top_n;
  file.preprocessing.split = p.split;

  const std::string name = !o.name.empty() ? o.name
                                           : io::to_string(kind) + (top_n ? "_top" + std::to_string(*top_n) : "");
  const fs::path dir(g.out);
  ensure_dir(dir);
  const fs::path model_path = dir / (name + ".model.json");
  const fs::path manifest_path = dir / (name + ".manifest.json");
  const fs::path history_path = dir / (name + ".history.csv");
  const fs::path timing_path = dir / (name + ".timing.json");

  json config = {{"command", "train"},
                 {"model", io::to_string(kind)},
                 {"seed", seed},
                 {"label_column", g.label_column},
                 {"benign_label", o.data.benign_label},
                 {"feature_mode", top_n ? "top" + std::to_string(*top_n) : std::string("full")},
                 {"output_dir", g.out}};
  kan::GridConfig grid{-o.grid_range, o.grid_range, o.grid_size, o.degree};
  std::string width_text;
  baselines::BaselineConfig bcfg;
  bcfg.knn.k = o.k;
  bcfg.mlp.hidden = o.hidden;
  bcfg.mlp.learning_rate = o.lr;
  bcfg.mlp.batch = o.batch;
  bcfg.mlp.epochs = o.epochs;
  bcfg.mlp.seed = seed;
  trees::ForestConfig fcfg;
  fcfg.seed = seed;
  fcfg.n_trees = o.trees;
  fcfg.max_depth = o.max_depth;
  switch (kind) {
    case io::ModelKind::kan:
      width_text = resolve_width(o, train.cols());
      config["width"] = kan::format_width_spec(kan::parse_width_spec(width_text));
      config["grid"] = {{"range_min", grid.range_min},
                        {"range_max", grid.range_max},
                        {"num_intervals", grid.num_intervals},
                        {"degree", grid.degree}};
      config["epochs"] = o.epochs;
      config["batch"] = o.batch;
      config["lr"] = o.lr;
      config["log_interval"] = 100;
      config["iterations"] = kan::iteration_count(train.rows(), o.batch, o.epochs);
      break;
    case io::ModelKind::rf:
      config["trees"] = fcfg.n_trees;
      config["max_depth"] = o.max_depth ? json(*o.max_depth) : json(nullptr);
      config["max_features"] = "sqrt";
      config["bootstrap"] = fcfg.bootstrap;
      break;
    case io::ModelKind::dt:
      config["max_depth"] = o.max_depth ? json(*o.max_depth) : json(nullptr);
      break;
    case io::ModelKind::lr:
      config["learning_rate"] = bcfg.lr.learning_rate;
      config["max_iters"] = bcfg.lr.max_iters;
      config["tol"] = bcfg.lr.tol;
      config["l2"] = bcfg.lr.l2;
      break;
    case io::ModelKind::gnb:
      config["var_smoothing"] = bcfg.gnb.var_smoothing;
      break;
    case io::ModelKind::knn:
      config["k"] = bcfg.knn.k;
      break;
    case io::ModelKind::mlp:
      config["hidden"] = bcfg.mlp.hidden;
      config["epochs"] = bcfg.mlp.epochs;
      config["batch"] = bcfg.mlp.batch;
      config["lr"] = bcfg.mlp.learning_rate;
      config["iterations"] = kan::iteration_count(train.rows(), o.batch, o.epochs);
      break;
  }

  json artifacts = json::array({model_path.filename().string(), manifest_path.filename().string(),
                                timing_path.filename().string()});
  if (kind == io::ModelKind::kan) artifacts.push_back(history_path.filename().string());
  json selected_names = train.feature_names;
  json manifest = {{"tool", "kanids"},
                   {"tool_version", kToolVersion},
                   {"config", config},
                   {"dataset", loaded.source},
                   {"split",
                    {{"seed", p.split.seed},
                     {"fractions", {p.split.train_fraction, p.split.val_fraction, p.split.test_fraction}},
                     {"train", p.train.rows()},
                     {"val", p.val.rows()},
                     {"test", p.test.rows()}}},
                   {"selected_features", selected_names},
                   {"artifacts", artifacts}};
  write_text(manifest_path, manifest.dump(2) + "\n");

  double train_seconds = 0.0;
  std::string history;
  switch (kind) {
    case io::ModelKind::kan: {
      auto net = kan::build_network(kan::parse_width_spec(width_text), grid, seed);
      kan::TrainConfig tc;
      tc.learning_rate = o.lr;
      tc.batch_size = o.batch;
      tc.epochs = o.epochs;
      tc.seed = seed;
      const kan::LabeledSet ts{train.features, train.labels};
      const kan::LabeledSet vs{val.features, val.labels};
      const auto h = kan::train(net, ts, val.rows() ? &vs : nullptr, tc);
      train_seconds = h.wall_seconds;
      std::ostringstream hs;
      hs << "metric,step,value\n";
      for (const auto& e : h.loss_log) hs << "loss," << e.iteration << ',' << format_exact(e.mean_batch_loss) << '\n';
      for (std::size_t e = 0; e < h.val_accuracy.size(); ++e) {
        hs << "val_accuracy," << e + 1 << ',' << format_exact(h.val_accuracy[e]) << '\n';
      }
      hs << "total_iterations," << h.total_iterations << ',' << h.total_iterations << '\n';
      history = hs.str();
      file.model = std::move(net);
      break;
    }
    case io::ModelKind::rf: {
      auto [forest, secs] = metrics::timed([&] { return trees::fit_forest(train.features, train.labels, fcfg); });
      train_seconds = secs;
      file.model = std::move(forest);
      break;
    }
    case io::ModelKind::dt: {
      trees::TreeConfig tcfg;
      tcfg.max_depth = o.max_depth;
      auto [tree, secs] = metrics::timed([&] { return trees::fit_tree(train.features, train.labels, tcfg); });
      train_seconds = secs;
      file.model = std::move(tree);
      break;
    }
    default: {
      static const std::map<io::ModelKind, baselines::BaselineKind> kinds = {
          {io::ModelKind::lr, baselines::BaselineKind::logistic_regression},
          {io::ModelKind::gnb, baselines::BaselineKind::gaussian_nb},
          {io::ModelKind::knn, baselines::BaselineKind::knn},
          {io::ModelKind::mlp, baselines::BaselineKind::mlp}};
      auto fitted = baselines::fit_baseline(kinds.at(kind), bcfg, train.features, train.labels);
      train_seconds = fitted.train_seconds;
      file.model = std::move(fitted);
    }
  }

  io::save_model(file, model_path);
  if (!history.empty()) write_text(history_path, history);
  write_text(timing_path, json{{"train_seconds", train_seconds}}.dump(2) + "\n");

  const auto pred = predict_any(file.model, val.features);
  const auto m = metrics::per_class_metrics(val.labels, pred);
  out << io::display_name(kind) << " (" << metrics::FeatureMode{top_n}.label() << ") validation: macro-F1 "
      << format_fixed(m.macro_f1(), 4) << ", accuracy " << format_fixed(m.accuracy, 4) << ", train "
      << format_fixed(train_seconds, 2) << " s\n";
  out << "wrote " << model_path.string() << "\n";
  return kExitOk;
}

struct EvaluateOptions {
  DataOptions data;
  std::vector<std::string> models;
  std::string timings = "measured";
  std::string report = "report";
};

int cmd_evaluate(const GlobalOptions& g, const EvaluateOptions& o, std::ostream& out, std::ostream& err) {
  if (o.timings != "measured" && o.timings != "omit") throw UsageError("--timings must be 'measured' or 'omit'");
  std::vector<io::ModelFile> files;
  for (const auto& path : o.models) files.push_back(io::load_model(path));
  auto loaded = load_data(o.data, g, err);
  const auto& ds = loaded.dataset;

  // One shared test split for every model.
  data::SplitSpec spec = files.front().preprocessing.split;
  if (g.seed) spec.seed = *g.seed;
  for (std::size_t i = 1; i < files.size(); ++i) {
    if (!g.seed && files[i].preprocessing.split.seed != spec.seed) {
      err << "warning: " << o.models[i] << " was trained with split seed " << files[i].preprocessing.split.seed
          << "; evaluating every model on split seed " << spec.seed << "\n";
    }
  }
  const auto idx = data::split_indices(ds.rows(), spec);
  data::Dataset test;
  test.features = ds.features.take_rows(idx.test);
  test.feature_names = ds.feature_names;
  for (std::size_t r : idx.test) test.labels.push_back(ds.labels[r]);

  std::vector<metrics::ModelReport> reports;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const auto& f = files[i];
    const Matrix x = model_inputs(f.preprocessing, test);
    auto [pred, predict_seconds] = metrics::timed([&] { return predict_any(f.model, x); });
    metrics::ModelReport r;
    r.model_name = io::display_name(f.kind);
    r.feature_mode = metrics::FeatureMode{f.preprocessing.top_n};
    r.metrics = metrics::per_class_metrics(test.labels, pred);
    if (o.timings == "measured") {
      r.predict_seconds = predict_seconds;
      const fs::path tp = timing_path_for(o.models[i]);
      if (fs::exists(tp)) r.train_seconds = read_json(tp).at("train_seconds").get<double>();
    }
    reports.push_back(r);
  }
  const fs::path dir(g.out);
  ensure_dir(dir);
  write_text(dir / (o.report + ".md"), metrics::render_report(reports, metrics::ReportFormat::markdown));
  write_text(dir / (o.report + ".csv"), metrics::render_report(reports, metrics::ReportFormat::csv));
  out << metrics::render_report(reports, metrics::ReportFormat::markdown);
  return kExitOk;
}

struct FormulaOptions {
  DataOptions data;
  std::string model;
  double r2_threshold = 0.9;
  int precision = 4;
  std::size_t sample_rows = 1000;
  std::string name = "formula";
};

int cmd_extract_formula(const GlobalOptions& g, const FormulaOptions& o, std::ostream& out, std::ostream& err) {
  if (o.precision < 0 || o.precision > 17) throw UsageError("--precision must lie in [0, 17]");
  const auto file = io::load_model(o.model);
  require_kan(file, o.model);
  auto loaded = load_data(o.data, g, err);
  const Matrix batch = kan_sample_batch(file, loaded.dataset, o.sample_rows);
  const auto& net = std::get<kan::KanNetwork>(file.model);
  symbolic::SnapOptions so;
  so.r2_threshold = o.r2_threshold;
  auto sn = symbolic::snap_network(net, batch, so);
  sn.input_names = file.preprocessing.feature_names;
  const std::string formula = symbolic::emit_formula(sn, o.precision);
  const fs::path dir(g.out);
  ensure_dir(dir);
  write_text(dir / (o.name + ".txt"), formula);
  write_text(dir / (o.name + ".prefix"), symbolic::emit_prefix(sn));
  write_text(dir / (o.name + "_edges.csv"), symbolic::edge_table_csv(sn));
  out << formula;
  return kExitOk;
}

struct DotOptions {
  DataOptions data;
  std::string model;
  std::size_t sample_rows = 1000;
  std::string name = "network";
};

int cmd_export_dot(const GlobalOptions& g, const DotOptions& o, std::ostream& out, std::ostream& err) {
  const auto file = io::load_model(o.model);
  require_kan(file, o.model);
  auto loaded = load_data(o.data, g, err);
  const Matrix batch = kan_sample_batch(file, loaded.dataset, o.sample_rows);
  const auto& net = std::get<kan::KanNetwork>(file.model);
  const auto imp = kan::edge_importance(net, batch);
  const fs::path dir(g.out);
  ensure_dir(dir);
  const fs::path path = dir / (o.name + ".dot");
  write_text(path, kan::export_dot(net, imp, file.preprocessing.feature_names));
  out << "wrote " << path.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- config file

bool has_flag(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(),
                     [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

/// Appends `--key value` for every config entry not already given on the command line.
std::vector<std::string> merge_config(CLI::App& app, std::vector<std::string> args) {
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
  }
  if (config_path.empty()) return args;
  std::ifstream in(config_path);
  if (!in) throw Error(ErrorCode::io_error, "cannot read config file " + config_path);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(in);
  } catch (const CLI::Error& e) {
    throw UsageError(config_path + ": " + e.what());
  }
  CLI::App* sub = nullptr;
  for (const auto& a : args) {
    if (a.empty() || a.front() == '-') continue;
    for (CLI::App* s : app.get_subcommands([](CLI::App*) { return true; })) {
      if (s->get_name() == a) sub = s;
    }
    if (sub) break;
  }
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    if (!item.parents.empty()) throw UsageError(config_path + ": sections are not supported (key " + item.name + ")");
    const std::string flag = "--" + item.name;
    if (item.name == "config") throw UsageError(config_path + ": config files cannot include other config files");
    const CLI::Option* opt = sub ? sub->get_option_no_throw(flag) : nullptr;
    if (!opt) opt = app.get_option_no_throw(flag);
    if (!opt) throw UsageError(config_path + ": unknown key '" + item.name + "'");
    if (has_flag(args, flag)) continue;
    if (opt->get_expected_min() == 0) {
      const std::string v = item.inputs.empty() ? "true" : item.inputs.front();
      if (v == "true" || v == "1" || v == "on" || v == "yes") args.push_back(flag);
      continue;
    }
    args.push_back(flag);
    for (const auto& v : item.inputs) args.push_back(v);
  }
  return args;
}

/// Finds the kanids::Error inside nested timing wrappers, if any.
const Error* find_error(const std::exception& e) {
  if (const auto* k = dynamic_cast<const Error*>(&e)) return k;
  try {
    std::rethrow_if_nested(e);
  } catch (const std::exception& inner) {
    return find_error(inner);
  } catch (...) {
  }
  return nullptr;
}

}  // namespace

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::io_error:
    case ErrorCode::corrupt_file:
    case ErrorCode::version_mismatch:
      return kExitIo;
    case ErrorCode::single_class_data:
    case ErrorCode::all_rows_dropped:
    case ErrorCode::too_few_rows:
    case ErrorCode::empty_data:
    case ErrorCode::degenerate_x:
    case ErrorCode::insufficient_samples:
    case ErrorCode::batch_too_large:
      return kExitDegenerateData;
    case ErrorCode::non_finite_loss:
      return kExitDiverged;
    case ErrorCode::feature_mismatch:
      return kExitFeatureMismatch;
    default:
      return kExitUsage;
  }
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"KAN toolkit for binary intrusion detection", "kanids"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string("kanids ") + kToolVersion);

  GlobalOptions g;
  app.add_option("--seed", g.seed, "Seed for splits, initialization and forests");
  app.add_option("-o,--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--label-column", g.label_column, "Name of the label column")->capture_default_str();
  app.add_option("--config", g.config, "File of key=value lines supplying defaults for any flag");

  SynthOptions synth;
  auto* s_synth = app.add_subcommand("synth", "Write a synthetic dataset and its ground-truth rule");
  s_synth->add_option("--rows", synth.rows, "Row count")->capture_default_str();
  s_synth->add_option("--features", synth.features, "Feature count")->capture_default_str();
  s_synth->add_option("--benign-fraction", synth.benign_fraction, "Share of benign rows")->capture_default_str();
  s_synth->add_option("--noise", synth.noise, "Standard deviation of the score noise")->capture_default_str();

  SelectOptions select;
  auto* s_select = app.add_subcommand("select-features", "Rank features by random-forest importance");
  add_data_options(s_select, select.data);
  s_select->add_option("--top", select.top, "Number of features to keep")->capture_default_str();
  s_select->add_option("--trees", select.trees, "Forest size")->capture_default_str();

  TrainOptions train;
  auto* s_train = app.add_subcommand("train", "Train one model and write it with a manifest");
  add_data_options(s_train, train.data);
  s_train->add_option("--model", train.model, "One of: kan, rf, dt, lr, gnb, knn, mlp")->capture_default_str();
  s_train->add_option("--name", train.name, "Output file stem (default: model kind)");
  s_train->add_option("--width", train.width, "Hidden layers, e.g. 16,8 or (16,8); none for a direct input-output layer")->capture_default_str();
  s_train->add_flag("--multikan", train.multikan, "Read --width as one hidden layer of (add, mult) nodes");
  s_train->add_option("--grid-size", train.grid_size, "Spline intervals per edge")->capture_default_str();
  s_train->add_option("--grid-range", train.grid_range, "Spline domain is [-R, R]")->capture_default_str();
  s_train->add_option("--degree", train.degree, "Spline degree")->capture_default_str();
  s_train->add_option("--epochs", train.epochs, "Training epochs")->capture_default_str();
  s_train->add_option("--batch", train.batch, "Batch size")->capture_default_str();
  s_train->add_option("--lr", train.lr, "Adam learning rate")->capture_default_str();
  s_train->add_option("--features", train.features, "full or topN")->capture_default_str();
  s_train->add_option("--top", train.top, "Select the N most important features");
  s_train->add_option("--selected", train.selected, "File of feature names, one per line");
  s_train->add_option("--trees", train.trees, "Forest size (rf, feature selection)")->capture_default_str();
  s_train->add_option("--max-depth", train.max_depth, "Depth limit for rf and dt");
  s_train->add_option("--k", train.k, "Neighbours for knn")->capture_default_str();
  s_train->add_option("--hidden", train.hidden, "Hidden units for mlp")->capture_default_str();

  EvaluateOptions eval;
  auto* s_eval = app.add_subcommand("evaluate", "Score models on the shared test split");
  add_data_options(s_eval, eval.data);
  s_eval->add_option("models", eval.models, "Model files")->required();
  s_eval->add_option("--timings", eval.timings, "measured or omit")->capture_default_str();
  s_eval->add_option("--report", eval.report, "Report file stem")->capture_default_str();

  FormulaOptions formula;
  auto* s_formula = app.add_subcommand("extract-formula", "Snap a KAN to closed-form edges and print its formula");
  add_data_options(s_formula, formula.data);
  s_formula->add_option("--model", formula.model, "KAN model file")->required();
  s_formula->add_option("--r2-threshold", formula.r2_threshold, "Minimum r^2 for a non-linear edge")
      ->capture_default_str();
  s_formula->add_option("--precision", formula.precision, "Displayed decimals")->capture_default_str();
  s_formula->add_option("--sample-rows", formula.sample_rows, "Training rows used for sampling")->capture_default_str();
  s_formula->add_option("--name", formula.name, "Output file stem")->capture_default_str();

  DotOptions dot;
  auto* s_dot = app.add_subcommand("export-dot", "Write the KAN architecture as a Graphviz digraph");
  add_data_options(s_dot, dot.data);
  s_dot->add_option("--model", dot.model, "KAN model file")->required();
  s_dot->add_option("--sample-rows", dot.sample_rows, "Training rows used for edge importance")->capture_default_str();
  s_dot->add_option("--name", dot.name, "Output file stem")->capture_default_str();

  try {
    const std::vector<std::string> args = merge_config(app, raw_args);
    std::vector<const char*> argv{"kanids"};
    for (const auto& a : args) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());

    if (s_synth->parsed()) return cmd_synth(g, synth, out);
    if (s_select->parsed()) return cmd_select(g, select, out, err);
    if (s_train->parsed()) return cmd_train(g, train, out, err);
    if (s_eval->parsed()) return cmd_evaluate(g, eval, out, err);
    if (s_formula->parsed()) return cmd_extract_formula(g, formula, out, err);
    if (s_dot->parsed()) return cmd_export_dot(g, dot, out, err);
    return kExitUsage;
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    if (const Error* k = find_error(e)) {
      err << "error: " << k->what() << "\n";
      return exit_code_for(k->code());
    }
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace kanids::cli
