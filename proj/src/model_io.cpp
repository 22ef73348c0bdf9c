#include "kanids/model_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace kanids::io {
namespace {

using json = nlohmann::ordered_json;

const std::vector<std::pair<ModelKind, std::string>>& kind_table() {
  static const std::vector<std::pair<ModelKind, std::string>> table = {
      {ModelKind::kan, "kan"}, {ModelKind::rf, "rf"},   {ModelKind::dt, "dt"},   {ModelKind::lr, "lr"},
      {ModelKind::gnb, "gnb"}, {ModelKind::knn, "knn"}, {ModelKind::mlp, "mlp"},
  };
  return table;
}

json tree_to_json(const trees::DecisionTree& tree) {
  json nodes = json::array();
  for (const auto& n : tree.nodes) {
    nodes.push_back({n.feature, n.threshold, n.left, n.right, n.impurity_decrease, n.n_samples, n.class_counts[0],
                     n.class_counts[1]});
  }
  return {{"n_features", tree.n_features}, {"n_train", tree.n_train}, {"nodes", std::move(nodes)}};
}

trees::DecisionTree tree_from_json(const json& j) {
  trees::DecisionTree tree;
  tree.n_features = j.at("n_features").get<std::size_t>();
  tree.n_train = j.at("n_train").get<std::size_t>();
  for (const auto& n : j.at("nodes")) {
    if (n.size() != 8) throw Error(ErrorCode::corrupt_file, "tree node must have 8 fields");
    trees::TreeNode node;
    node.feature = n[0].get<int>();
    node.threshold = n[1].get<double>();
    node.left = n[2].get<int>();
    node.right = n[3].get<int>();
    node.impurity_decrease = n[4].get<double>();
    node.n_samples = n[5].get<std::size_t>();
    node.class_counts = {n[6].get<std::size_t>(), n[7].get<std::size_t>()};
    tree.nodes.push_back(node);
  }
  const auto count = static_cast<int>(tree.nodes.size());
  for (const auto& node : tree.nodes) {
    const bool bad_child = !node.is_leaf() && (node.left <= 0 || node.left >= count || node.right <= 0 ||
                                               node.right >= count);
    if (bad_child || node.feature >= static_cast<int>(tree.n_features)) {
      throw Error(ErrorCode::corrupt_file, "tree node references are out of range");
    }
  }
  if (tree.nodes.empty()) throw Error(ErrorCode::corrupt_file, "tree has no nodes");
  return tree;
}

json matrix_to_json(const Matrix& m) { return {{"rows", m.rows()}, {"cols", m.cols()}, {"values", m.values()}}; }

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  auto values = j.at("values").get<std::vector<double>>();
  if (values.size() != rows * cols) throw Error(ErrorCode::corrupt_file, "matrix size does not match its shape");
  return Matrix(rows, cols, std::move(values));
}

json kan_to_json(const kan::KanNetwork& net) {
  json width = json::array();
  for (const auto& w : net.width) width.push_back({w.n_add, w.n_mult});
  return {
      {"width", std::move(width)},
      {"grid",
       {{"range_min", net.grid.range_min},
        {"range_max", net.grid.range_max},
        {"num_intervals", net.grid.num_intervals},
        {"degree", net.grid.degree}}},
      {"parameters", kan::flatten_parameters(net)},
  };
}

kan::KanNetwork kan_from_json(const json& j) {
  kan::WidthSpec width;
  for (const auto& w : j.at("width")) {
    if (w.size() != 2) throw Error(ErrorCode::corrupt_file, "width entries must be pairs");
    width.push_back({w[0].get<std::size_t>(), w[1].get<std::size_t>()});
  }
  const json& g = j.at("grid");
  kan::GridConfig grid{g.at("range_min").get<double>(), g.at("range_max").get<double>(),
                       g.at("num_intervals").get<int>(), g.at("degree").get<int>()};
  kan::KanNetwork net;
  try {
    net = kan::build_regression_network(width, grid, 0);
  } catch (const Error& e) {
    throw Error(ErrorCode::corrupt_file, "invalid network description: " + e.message());
  }
  const auto params = j.at("parameters").get<std::vector<double>>();
  if (params.size() != net.parameter_count()) {
    throw Error(ErrorCode::corrupt_file, "expected " + std::to_string(net.parameter_count()) + " parameters, found " +
                                             std::to_string(params.size()));
  }
  kan::assign_parameters(net, params);
  return net;
}

json baseline_to_json(const baselines::FittedBaseline& model) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, baselines::LogisticModel>) {
          return {{"weights", s.weights},         {"bias", s.bias},
                  {"iterations", s.iterations},   {"converged", s.converged},
                  {"initial_loss", s.initial_loss}, {"final_loss", s.final_loss}};
        } else if constexpr (std::is_same_v<T, baselines::GaussianNbModel>) {
          return {{"means", {s.means[0], s.means[1]}},
                  {"variances", {s.variances[0], s.variances[1]}},
                  {"log_priors", {s.log_priors[0], s.log_priors[1]}}};
        } else if constexpr (std::is_same_v<T, baselines::KnnModel>) {
          return {{"k", s.k}, {"train_x", matrix_to_json(s.train_x)}, {"train_y", s.train_y}};
        } else {
          return {{"inputs", s.inputs}, {"hidden", s.hidden}, {"params", s.params}};
        }
      },
      model.state);
}

baselines::FittedBaseline baseline_from_json(ModelKind kind, const json& j) {
  baselines::FittedBaseline model;
  switch (kind) {
    case ModelKind::lr: {
      model.kind = baselines::BaselineKind::logistic_regression;
      baselines::LogisticModel s;
      s.weights = j.at("weights").get<std::vector<double>>();
      s.bias = j.at("bias").get<double>();
      s.iterations = j.at("iterations").get<std::size_t>();
      s.converged = j.at("converged").get<bool>();
      s.initial_loss = j.at("initial_loss").get<double>();
      s.final_loss = j.at("final_loss").get<double>();
      model.state = std::move(s);
      break;
    }
    case ModelKind::gnb: {
      model.kind = baselines::BaselineKind::gaussian_nb;
      baselines::GaussianNbModel s;
      for (int c = 0; c < 2; ++c) {
        s.means[c] = j.at("means").at(c).get<std::vector<double>>();
        s.variances[c] = j.at("variances").at(c).get<std::vector<double>>();
        s.log_priors[c] = j.at("log_priors").at(c).get<double>();
      }
      if (s.means[0].size() != s.means[1].size() || s.variances[0].size() != s.means[0].size() ||
          s.variances[1].size() != s.means[0].size()) {
        throw Error(ErrorCode::corrupt_file, "naive Bayes parameter lengths differ");
      }
      model.state = std::move(s);
      break;
    }
    case ModelKind::knn: {
      model.kind = baselines::BaselineKind::knn;
      baselines::KnnModel s;
      s.k = j.at("k").get<std::size_t>();
      s.train_x = matrix_from_json(j.at("train_x"));
      s.train_y = j.at("train_y").get<std::vector<int>>();
      if (s.train_y.size() != s.train_x.rows()) throw Error(ErrorCode::corrupt_file, "kNN label count mismatch");
      model.state = std::move(s);
      break;
    }
    case ModelKind::mlp: {
      model.kind = baselines::BaselineKind::mlp;
      baselines::MlpModel s;
      s.inputs = j.at("inputs").get<std::size_t>();
      s.hidden = j.at("hidden").get<std::size_t>();
      s.params = j.at("params").get<std::vector<double>>();
      if (s.params.size() != s.hidden * s.inputs + 3 * s.hidden + 2) {
        throw Error(ErrorCode::corrupt_file, "MLP parameter count mismatch");
      }
      model.state = std::move(s);
      break;
    }
    default:
      throw Error(ErrorCode::corrupt_file, "not a baseline kind");
  }
  return model;
}

}  // namespace

std::string to_string(ModelKind kind) {
  for (const auto& [k, name] : kind_table()) {
    if (k == kind) return name;
  }
  return "unknown";
}

const std::vector<std::string>& model_kind_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& entry : kind_table()) out.push_back(entry.second);
    return out;
  }();
  return names;
}

ModelKind parse_model_kind(const std::string& name) {
  for (const auto& [k, n] : kind_table()) {
    if (n == name) return k;
  }
  std::string valid;
  for (const auto& n : model_kind_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw Error(ErrorCode::invalid_argument, "unknown model '" + name + "' (valid: " + valid + ")");
}

std::string display_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kan: return "KAN";
    case ModelKind::rf: return "Random Forest";
    case ModelKind::dt: return "Decision Tree";
    case ModelKind::lr: return "Logistic Regression";
    case ModelKind::gnb: return "Naive Bayes";
    case ModelKind::knn: return "KNN";
    case ModelKind::mlp: return "MLP";
  }
  return "unknown";
}

std::string serialize(const ModelFile& file) {
  const Preprocessing& p = file.preprocessing;
  json j;
  j["format"] = "kanids-model";
  j["format_version"] = kFormatVersion;
  j["kind"] = to_string(file.kind);
  j["label_column"] = p.label_column;
  j["label_map"] = {{"benign_label", p.label_map.benign_label}, {"benign", data::kBenign},
                    {"malicious", data::kMalicious}};
  j["feature_mode"] = p.top_n ? json("top" + std::to_string(*p.top_n)) : json("full");
  j["feature_names"] = p.feature_names;
  j["scaler"] = {{"means", p.scaler.means}, {"stds", p.scaler.stds}};
  j["split"] = {{"train", p.split.train_fraction},
                {"val", p.split.val_fraction},
                {"test", p.split.test_fraction},
                {"seed", p.split.seed}};
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, kan::KanNetwork>) {
          j["model"] = kan_to_json(m);
        } else if constexpr (std::is_same_v<T, trees::RandomForest>) {
          json trees_json = json::array();
          for (const auto& t : m.trees) trees_json.push_back(tree_to_json(t));
          j["model"] = {{"n_features", m.n_features}, {"trees", std::move(trees_json)}};
        } else if constexpr (std::is_same_v<T, trees::DecisionTree>) {
          j["model"] = tree_to_json(m);
        } else {
          j["model"] = baseline_to_json(m);
        }
      },
      file.model);
  return j.dump(1) + "\n";
}

ModelFile deserialize(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::corrupt_file, std::string("not a valid model document: ") + e.what());
  }
  try {
    if (!j.is_object() || j.value("format", std::string()) != "kanids-model") {
      throw Error(ErrorCode::corrupt_file, "missing kanids-model format tag");
    }
    const int version = j.at("format_version").get<int>();
    if (version != kFormatVersion) {
      throw Error(ErrorCode::version_mismatch, "file has format_version " + std::to_string(version) +
                                                   ", this build reads " + std::to_string(kFormatVersion));
    }
    ModelFile file;
    try {
      file.kind = parse_model_kind(j.at("kind").get<std::string>());
    } catch (const Error& e) {
      throw Error(ErrorCode::corrupt_file, e.message());
    }
    Preprocessing& p = file.preprocessing;
    p.label_column = j.at("label_column").get<std::string>();
    p.label_map.benign_label = j.at("label_map").at("benign_label").get<std::string>();
    const auto mode = j.at("feature_mode").get<std::string>();
    if (mode.rfind("top", 0) == 0) p.top_n = std::stoul(mode.substr(3));
    else if (mode != "full") throw Error(ErrorCode::corrupt_file, "unknown feature_mode '" + mode + "'");
    p.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    p.scaler.means = j.at("scaler").at("means").get<std::vector<double>>();
    p.scaler.stds = j.at("scaler").at("stds").get<std::vector<double>>();
    if (p.scaler.means.size() != p.feature_names.size() || p.scaler.stds.size() != p.feature_names.size()) {
      throw Error(ErrorCode::corrupt_file, "scaler length differs from feature count");
    }
    const json& s = j.at("split");
    p.split = {s.at("train").get<double>(), s.at("val").get<double>(), s.at("test").get<double>(),
               s.at("seed").get<std::uint64_t>()};

    const json& m = j.at("model");
    std::size_t inputs = 0;
    switch (file.kind) {
      case ModelKind::kan: {
        auto net = kan_from_json(m);
        inputs = net.input_dim();
        file.model = std::move(net);
        break;
      }
      case ModelKind::rf: {
        trees::RandomForest forest;
        forest.n_features = m.at("n_features").get<std::size_t>();
        for (const auto& t : m.at("trees")) forest.trees.push_back(tree_from_json(t));
        if (forest.trees.empty()) throw Error(ErrorCode::corrupt_file, "forest has no trees");
        inputs = forest.n_features;
        file.model = std::move(forest);
        break;
      }
      case ModelKind::dt: {
        auto tree = tree_from_json(m);
        inputs = tree.n_features;
        file.model = std::move(tree);
        break;
      }
      default: {
        auto b = baseline_from_json(file.kind, m);
        inputs = b.n_features();
        file.model = std::move(b);
      }
    }
    if (inputs != p.feature_names.size()) {
      throw Error(ErrorCode::corrupt_file, "model input width differs from stored feature names");
    }
    return file;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::corrupt_file, std::string("malformed model document: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw Error(ErrorCode::corrupt_file, "malformed feature_mode");
  }
}

void save_model(const ModelFile& file, const std::filesystem::path& path) {
  const std::string text = serialize(file);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::io_error, "failed writing " + path.string());
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return deserialize(buf.str());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.message());
  }
}

void save_model(const kan::KanNetwork& network, const data::ScalerParams& scaler,
                const std::vector<std::string>& feature_names, const std::filesystem::path& path) {
  ModelFile file;
  file.kind = ModelKind::kan;
  file.preprocessing.feature_names = feature_names;
  file.preprocessing.scaler = scaler;
  file.model = network;
  save_model(file, path);
}

}  // namespace kanids::io
