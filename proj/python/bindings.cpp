#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "kanids/baselines.hpp"
#include "kanids/cli.hpp"
#include "kanids/data.hpp"
#include "kanids/kan.hpp"
#include "kanids/metrics.hpp"
#include "kanids/model_io.hpp"
#include "kanids/symbolic.hpp"
#include "kanids/trees.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace kanids;

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Labels = py::array_t<int, py::array::c_style | py::array::forcecast>;

namespace {

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
  const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
  return Matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

std::vector<int> to_labels(const Labels& a) {
  if (a.ndim() != 1) throw py::value_error("expected a 1-D label array");
  return std::vector<int>(a.data(), a.data() + a.shape(0));
}

Array to_array(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

py::array_t<int> to_array(const std::vector<int>& v) {
  py::array_t<int> out(v.size());
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

class Kan {
 public:
  Kan(const std::string& width, int grid_size, double grid_range, int degree, std::uint64_t seed)
      : net_(kan::build_network(kan::parse_width_spec(width), {-grid_range, grid_range, grid_size, degree}, seed)) {}
  explicit Kan(kan::KanNetwork net) : net_(std::move(net)) {}

  py::dict fit(const Array& x, const Labels& y, std::size_t epochs, double lr, std::size_t batch, std::uint64_t seed,
               std::optional<Array> val_x, std::optional<Labels> val_y) {
    const Matrix xm = to_matrix(x);
    const auto ym = to_labels(y);
    kan::TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.learning_rate = lr;
    cfg.batch_size = batch;
    cfg.seed = seed;
    kan::TrainHistory h;
    if (val_x && val_y) {
      const Matrix vx = to_matrix(*val_x);
      const auto vy = to_labels(*val_y);
      const kan::LabeledSet vs{vx, vy};
      py::gil_scoped_release release;
      h = kan::train(net_, {xm, ym}, &vs, cfg);
    } else {
      py::gil_scoped_release release;
      h = kan::train(net_, {xm, ym}, nullptr, cfg);
    }
    std::vector<std::pair<std::uint64_t, double>> log;
    for (const auto& e : h.loss_log) log.emplace_back(e.iteration, e.mean_batch_loss);
    return py::dict("loss_log"_a = log, "val_accuracy"_a = h.val_accuracy,
                    "total_iterations"_a = h.total_iterations, "wall_seconds"_a = h.wall_seconds);
  }

  py::array_t<int> predict(const Array& x) const { return to_array(kan::predict(net_, to_matrix(x)).labels); }
  Array predict_proba(const Array& x) const { return to_array(kan::predict(net_, to_matrix(x)).probabilities); }

  std::string formula(const Array& batch, double r2_threshold, int precision,
                      const std::vector<std::string>& names) const {
    auto sn = snap(batch, r2_threshold);
    sn.input_names = names;
    return symbolic::emit_formula(sn, precision);
  }

  std::string prefix(const Array& batch, double r2_threshold) const {
    return symbolic::emit_prefix(snap(batch, r2_threshold));
  }

  std::string dot(const Array& batch, const std::vector<std::string>& names) const {
    return kan::export_dot(net_, kan::edge_importance(net_, to_matrix(batch)), names);
  }

  const kan::KanNetwork& network() const { return net_; }

 private:
  symbolic::SymbolicNetwork snap(const Array& batch, double r2_threshold) const {
    symbolic::SnapOptions so;
    so.r2_threshold = r2_threshold;
    return symbolic::snap_network(net_, to_matrix(batch), so);
  }

  kan::KanNetwork net_;
};

baselines::BaselineKind baseline_kind(const std::string& name) {
  if (name == "lr") return baselines::BaselineKind::logistic_regression;
  if (name == "gnb") return baselines::BaselineKind::gaussian_nb;
  if (name == "knn") return baselines::BaselineKind::knn;
  if (name == "mlp") return baselines::BaselineKind::mlp;
  throw py::value_error("baseline must be one of lr, gnb, knn, mlp");
}

}  // namespace

PYBIND11_MODULE(_kanids, m) {
  m.doc() = "KAN toolkit for binary intrusion detection";
  py::register_exception<Error>(m, "KanidsError", PyExc_ValueError);

  m.def("iteration_count", &kan::iteration_count, "n_train"_a, "batch_size"_a, "epochs"_a);

  m.def(
      "split_indices",
      [](std::size_t rows, double train, double val, double test, std::uint64_t seed) {
        auto s = data::split_indices(rows, {train, val, test, seed});
        return py::make_tuple(s.train, s.val, s.test);
      },
      "rows"_a, "train"_a = 0.70, "val"_a = 0.15, "test"_a = 0.15, "seed"_a = 42);

  m.def(
      "synth",
      [](std::size_t rows, std::size_t features, double benign_fraction, std::uint64_t seed, double noise) {
        auto r = data::synth_generate({rows, features, benign_fraction, seed, noise});
        return py::dict("features"_a = to_array(r.dataset.features), "labels"_a = to_array(r.dataset.labels),
                        "feature_names"_a = r.dataset.feature_names,
                        "informative"_a = r.rule.informative_features(),
                        "periodic_feature"_a = r.rule.periodic_feature,
                        "description"_a = r.rule.describe(r.dataset.feature_names));
      },
      "rows"_a = 20000, "features"_a = 46, "benign_fraction"_a = 0.5, "seed"_a = 7, "noise"_a = 0.05);

  m.def(
      "per_class_metrics",
      [](const Labels& y_true, const Labels& y_pred) {
        const auto c = metrics::per_class_metrics(to_labels(y_true), to_labels(y_pred));
        return py::dict("precision"_a = c.precision, "recall"_a = c.recall, "f1"_a = c.f1, "support"_a = c.support,
                        "accuracy"_a = c.accuracy, "macro_f1"_a = c.macro_f1());
      },
      "y_true"_a, "y_pred"_a);

  py::class_<Kan>(m, "KAN")
      .def(py::init<const std::string&, int, double, int, std::uint64_t>(), "width"_a, "grid_size"_a = 5,
           "grid_range"_a = 4.0, "degree"_a = 3, "seed"_a = 42)
      .def("fit", &Kan::fit, "x"_a, "y"_a, "epochs"_a = 20, "lr"_a = 0.001, "batch"_a = 128, "seed"_a = 42,
           "val_x"_a = py::none(), "val_y"_a = py::none())
      .def("predict", &Kan::predict, "x"_a)
      .def("predict_proba", &Kan::predict_proba, "x"_a)
      .def("formula", &Kan::formula, "batch"_a, "r2_threshold"_a = 0.9, "precision"_a = 4,
           "feature_names"_a = std::vector<std::string>{})
      .def("prefix", &Kan::prefix, "batch"_a, "r2_threshold"_a = 0.9)
      .def("dot", &Kan::dot, "batch"_a, "feature_names"_a = std::vector<std::string>{})
      .def_property_readonly("width", [](const Kan& k) { return kan::format_width_spec(k.network().width); })
      .def_property_readonly("parameter_count", [](const Kan& k) { return k.network().parameter_count(); })
      .def(
          "save",
          [](const Kan& k, const std::filesystem::path& path, const std::vector<std::string>& names) {
            data::ScalerParams identity;
            identity.means.assign(k.network().input_dim(), 0.0);
            identity.stds.assign(k.network().input_dim(), 1.0);
            io::save_model(k.network(), identity, names, path);
          },
          "path"_a, "feature_names"_a)
      .def_static(
          "load",
          [](const std::filesystem::path& path) {
            auto file = io::load_model(path);
            if (file.kind != io::ModelKind::kan) throw py::value_error(path.string() + " does not hold a KAN");
            return Kan(std::get<kan::KanNetwork>(std::move(file.model)));
          },
          "path"_a);

  py::class_<trees::RandomForest>(m, "RandomForest")
      .def(py::init([](const Array& x, const Labels& y, std::size_t n_trees, std::optional<std::size_t> max_depth,
                       std::uint64_t seed) {
             trees::ForestConfig cfg;
             cfg.n_trees = n_trees;
             cfg.max_depth = max_depth;
             cfg.seed = seed;
             const Matrix xm = to_matrix(x);
             const auto ym = to_labels(y);
             py::gil_scoped_release release;
             return trees::fit_forest(xm, ym, cfg);
           }),
           "x"_a, "y"_a, "n_trees"_a = 100, "max_depth"_a = py::none(), "seed"_a = 42)
      .def("predict", [](const trees::RandomForest& f, const Array& x) { return to_array(trees::predict_forest(f, to_matrix(x))); })
      .def("feature_importances", &trees::feature_importances);

  m.def("select_top_n", [](const std::vector<double>& imp, std::size_t n) { return trees::select_top_n(imp, n); },
        "importances"_a, "n"_a);

  py::class_<baselines::FittedBaseline>(m, "Baseline")
      .def(py::init([](const std::string& kind, const Array& x, const Labels& y) {
             return baselines::fit_baseline(baseline_kind(kind), {}, to_matrix(x), to_labels(y));
           }),
           "kind"_a, "x"_a, "y"_a)
      .def("predict", [](const baselines::FittedBaseline& b, const Array& x) {
        return to_array(baselines::predict_baseline(b, to_matrix(x)));
      });

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = cli::run(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      "args"_a, "Runs one kanids command; returns (exit_code, stdout, stderr).");
}
