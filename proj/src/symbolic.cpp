#include "kanids/symbolic.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>

namespace kanids::symbolic {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::size_t kGridSize = 32;
constexpr int kRefineSteps = 20;
constexpr double kTieTolerance = 1e-9;

double apply_g(Primitive p, double u) {
  switch (p) {
    case Primitive::linear: return u;
    case Primitive::sin: return std::sin(u);
    case Primitive::cos: return std::cos(u);
    case Primitive::square: return u * u;
  }
  return u;
}

struct AffineFit {
  double a = 0.0;
  double d = 0.0;
  double sse = 0.0;
};

/// Least squares y ~ a * g + d.
AffineFit affine_fit(std::span<const double> g, std::span<const std::pair<double, double>> s, double y_mean) {
  const auto n = static_cast<double>(g.size());
  double g_mean = 0.0;
  for (double v : g) g_mean += v;
  g_mean /= n;
  double sgg = 0.0, sgy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double dg = g[i] - g_mean;
    const double dy = s[i].second - y_mean;
    sgg += dg * dg;
    sgy += dg * dy;
    syy += dy * dy;
  }
  AffineFit f;
  if (sgg > 1e-300) {
    f.a = sgy / sgg;
    f.sse = std::max(0.0, syy - f.a * sgy);
  } else {
    f.sse = syy;
  }
  f.d = y_mean - f.a * g_mean;
  return f;
}

double wrap_phase(double c) { return c - 2.0 * kPi * std::floor((c + kPi) / (2.0 * kPi)); }

void check_samples(std::span<const std::pair<double, double>> samples) {
  if (samples.size() < 8) {
    throw Error(ErrorCode::insufficient_samples, "need at least 8 samples, got " + std::to_string(samples.size()));
  }
  auto [lo, hi] = std::minmax_element(samples.begin(), samples.end(),
                                      [](const auto& l, const auto& r) { return l.first < r.first; });
  if (!(hi->first - lo->first > 1e-6)) throw Error(ErrorCode::degenerate_x, "x spread is below 1e-6");
}

double mean_y(std::span<const std::pair<double, double>> samples) {
  double m = 0.0;
  for (const auto& [x, y] : samples) m += y;
  return m / static_cast<double>(samples.size());
}

PrimitiveFit plain_linear(std::span<const std::pair<double, double>> samples) {
  std::vector<double> g(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) g[i] = samples[i].first;
  const AffineFit f = affine_fit(g, samples, mean_y(samples));
  PrimitiveFit out;
  out.a = f.a;
  out.d = f.d;
  out.r_squared = r_squared(samples, out);
  return out;
}

}  // namespace

std::string to_string(Primitive p) {
  switch (p) {
    case Primitive::linear: return "linear";
    case Primitive::sin: return "sin";
    case Primitive::cos: return "cos";
    case Primitive::square: return "square";
  }
  return "linear";
}

Primitive parse_primitive(const std::string& name) {
  for (Primitive p : kPrimitives) {
    if (to_string(p) == name) return p;
  }
  throw Error(ErrorCode::invalid_argument, "unknown primitive '" + name + "'");
}

double PrimitiveFit::operator()(double x) const { return a * apply_g(primitive, b * x + c) + d; }

double r_squared(std::span<const std::pair<double, double>> samples, const PrimitiveFit& fit) {
  const double ym = mean_y(samples);
  double ss_res = 0.0, ss_tot = 0.0;
  for (const auto& [x, y] : samples) {
    const double r = y - fit(x);
    ss_res += r * r;
    ss_tot += (y - ym) * (y - ym);
  }
  if (ss_res < 1e-12 && ss_tot < 1e-12) return 1.0;
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
  return 1.0 - ss_res / ss_tot;
}

PrimitiveFit fit_primitive(std::span<const std::pair<double, double>> samples, Primitive primitive) {
  check_samples(samples);
  if (primitive == Primitive::linear) return plain_linear(samples);

  const std::size_t n = samples.size();
  const double y_mean = mean_y(samples);
  std::vector<double> g(n);
  auto evaluate = [&](double log_b, double c) {
    const double b = std::exp(log_b);
    for (std::size_t i = 0; i < n; ++i) g[i] = apply_g(primitive, b * samples[i].first + c);
    return affine_fit(g, samples, y_mean);
  };

  const double log_lo = std::log(0.05);
  const double log_step = std::log(100.0) / static_cast<double>(kGridSize - 1);
  const double c_step = 2.0 * kPi / static_cast<double>(kGridSize);

  double best_lb = log_lo, best_c = -kPi;
  double best_sse = std::numeric_limits<double>::infinity();
  std::vector<double> sb(n), cb(n);
  for (std::size_t k = 0; k < kGridSize; ++k) {
    const double lb = log_lo + static_cast<double>(k) * log_step;
    const double b = std::exp(lb);
    if (primitive != Primitive::square) {
      for (std::size_t i = 0; i < n; ++i) {
        sb[i] = std::sin(b * samples[i].first);
        cb[i] = std::cos(b * samples[i].first);
      }
    }
    for (std::size_t j = 0; j < kGridSize; ++j) {
      const double c = -kPi + static_cast<double>(j) * c_step;
      const double sc = std::sin(c), cc = std::cos(c);
      for (std::size_t i = 0; i < n; ++i) {
        switch (primitive) {
          case Primitive::sin: g[i] = sb[i] * cc + cb[i] * sc; break;
          case Primitive::cos: g[i] = cb[i] * cc - sb[i] * sc; break;
          default: {
            const double u = b * samples[i].first + c;
            g[i] = u * u;
          }
        }
      }
      const AffineFit f = affine_fit(g, samples, y_mean);
      if (f.sse < best_sse) {
        best_sse = f.sse;
        best_lb = lb;
        best_c = c;
      }
    }
  }

  double step_lb = log_step, step_c = c_step;
  for (int it = 0; it < kRefineSteps; ++it) {
    for (int coord = 0; coord < 2; ++coord) {
      for (double sign : {1.0, -1.0}) {
        const double lb = coord == 0 ? best_lb + sign * step_lb : best_lb;
        const double c = coord == 1 ? best_c + sign * step_c : best_c;
        const AffineFit f = evaluate(lb, c);
        if (f.sse < best_sse) {
          best_sse = f.sse;
          best_lb = lb;
          best_c = c;
          break;
        }
      }
    }
    step_lb *= 0.5;
    step_c *= 0.5;
  }

  const AffineFit f = evaluate(best_lb, best_c);
  PrimitiveFit out;
  out.primitive = primitive;
  out.a = f.a;
  out.b = std::exp(best_lb);
  out.c = best_c;
  out.d = f.d;
  if (primitive != Primitive::square) {
    if (out.a < 0.0) {
      out.a = -out.a;
      out.c += kPi;
    }
    out.c = wrap_phase(out.c);
  }
  out.r_squared = r_squared(samples, out);
  return out;
}

namespace {
void check_edge(const kan::KanNetwork& network, const EdgeId& id) {
  if (id.layer >= network.layers.size()) throw Error(ErrorCode::unknown_edge, "no layer " + std::to_string(id.layer));
  const auto& layer = network.layers[id.layer];
  if (id.in >= layer.in_dim || id.sub >= layer.spec.subnode_count()) {
    throw Error(ErrorCode::unknown_edge, "layer " + std::to_string(id.layer) + " has no edge (" +
                                             std::to_string(id.in) + ", " + std::to_string(id.sub) + ")");
  }
}
}  // namespace

Samples sample_edge(const kan::KanNetwork& network, const kan::ActivationCache& cache, const EdgeId& id) {
  check_edge(network, id);
  if (cache.inputs.size() <= id.layer || cache.inputs[id.layer].rows() == 0) {
    throw Error(ErrorCode::empty_batch, "no cached inputs for layer " + std::to_string(id.layer));
  }
  const Matrix& in = cache.inputs[id.layer];
  std::vector<double> xs(in.rows());
  for (std::size_t r = 0; r < in.rows(); ++r) xs[r] = in(r, id.in);
  std::sort(xs.begin(), xs.end());
  const auto& phi = network.layers[id.layer].edge(id.in, id.sub);
  Samples out;
  for (double x : xs) {
    if (!out.empty() && x - out.back().first <= 1e-9) continue;
    out.emplace_back(x, phi(x));
  }
  return out;
}

Samples sample_edge(const kan::KanNetwork& network, const EdgeId& edge, const Matrix& batch) {
  check_edge(network, edge);
  if (batch.rows() == 0) throw Error(ErrorCode::empty_batch, "sample batch is empty");
  return sample_edge(network, kan::forward(network, batch).cache, edge);
}

Matrix SymbolicNetwork::evaluate(const Matrix& inputs) const {
  if (inputs.cols() != input_dim()) {
    throw Error(ErrorCode::shape_mismatch, "expected " + std::to_string(input_dim()) + " input columns");
  }
  Matrix current = inputs;
  for (const auto& layer : layers) {
    const std::size_t subs = layer.spec.subnode_count();
    Matrix next(current.rows(), layer.out_dim());
    std::vector<double> sums(subs);
    for (std::size_t r = 0; r < current.rows(); ++r) {
      std::fill(sums.begin(), sums.end(), 0.0);
      for (std::size_t i = 0; i < layer.in_dim; ++i) {
        for (std::size_t s = 0; s < subs; ++s) sums[s] += layer.edge(i, s).fit(current(r, i));
      }
      for (std::size_t nd = 0; nd < layer.spec.n_add; ++nd) next(r, nd) = sums[nd];
      for (std::size_t m = 0; m < layer.spec.n_mult; ++m) {
        double prod = 1.0;
        for (std::size_t k = 0; k < layer.spec.mult_arity; ++k) {
          prod *= sums[layer.spec.n_add + m * layer.spec.mult_arity + k];
        }
        next(r, layer.spec.n_add + m) = prod;
      }
    }
    current = std::move(next);
  }
  return current;
}

SymbolicNetwork snap_network(const kan::KanNetwork& network, const Matrix& batch, const SnapOptions& options) {
  if (batch.rows() == 0) throw Error(ErrorCode::empty_batch, "snap batch is empty");
  const kan::ForwardPass pass = kan::forward(network, batch);

  SymbolicNetwork out;
  out.r2_threshold = options.r2_threshold;
  std::vector<EdgeId> ids;
  for (std::size_t l = 0; l < network.layers.size(); ++l) {
    const auto& layer = network.layers[l];
    SymbolicLayer sl;
    sl.spec = layer.spec;
    sl.in_dim = layer.in_dim;
    sl.edges.resize(layer.edges.size());
    out.layers.push_back(std::move(sl));
    for (std::size_t i = 0; i < layer.in_dim; ++i) {
      for (std::size_t s = 0; s < layer.spec.subnode_count(); ++s) ids.push_back({l, i, s});
    }
  }

  auto snap_one = [&](const EdgeId& id) {
    SymbolicEdge e;
    e.source = id;
    e.node = network.layers[id.layer].spec.node_of_subnode(id.sub);
    const Samples samples = sample_edge(network, pass.cache, id);
    std::optional<PrimitiveFit> best;
    try {
      for (std::size_t k = 0; k < kPrimitives.size(); ++k) {
        PrimitiveFit f = fit_primitive(samples, kPrimitives[k]);
        e.candidate_r2[k] = f.r_squared;
        if (!best || f.r_squared > best->r_squared + kTieTolerance) best = f;
      }
    } catch (const Error& err) {
      e.error = err.what();
      best.reset();
    }
    if (!best) {
      e.low_fidelity = true;
      if (samples.size() >= 2 && samples.back().first - samples.front().first > 1e-12) {
        e.fit = plain_linear(samples);
      } else {
        e.fit.a = 0.0;
        e.fit.d = mean_y(samples);
        e.fit.r_squared = r_squared(samples, e.fit);
      }
    } else if (best->r_squared < options.r2_threshold) {
      e.low_fidelity = true;
      e.fit = plain_linear(samples);
    } else {
      e.fit = *best;
    }
    auto& layer = out.layers[id.layer];
    layer.edges[id.in * layer.spec.subnode_count() + id.sub] = std::move(e);
  };

  std::size_t workers = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, ids.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < ids.size(); k = next++) snap_one(ids[k]);
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }

  for (std::size_t i = 0; i < out.input_dim(); ++i) out.input_names.push_back("x_" + std::to_string(i + 1));
  if (out.output_dim() == 2) out.output_names = {"malicious", "benign"};
  return out;
}

namespace {

enum class Shape { atom, product, sum };

struct Rendered {
  std::string infix;
  std::string prefix;
  Shape shape = Shape::atom;
};

std::string name_for(std::size_t index) {
  std::string s;
  std::size_t k = index + 1;
  while (k > 0) {
    --k;
    s.insert(s.begin(), static_cast<char>('A' + k % 26));
    k /= 26;
  }
  return s;
}

class FormulaBuilder {
 public:
  FormulaBuilder(const SymbolicNetwork& net, int precision) : net_(net), precision_(precision) {
    cutoff_ = std::pow(10.0, -precision);
  }

  void build() {
    std::vector<Rendered> inputs;
    for (std::size_t i = 0; i < net_.input_dim(); ++i) {
      const std::string x = "x_" + std::to_string(i + 1);
      inputs.push_back({x, x, Shape::atom});
    }
    for (std::size_t l = 0; l < net_.layers.size(); ++l) {
      const auto& layer = net_.layers[l];
      const bool last = l + 1 == net_.layers.size();
      const std::size_t refs = last ? 1 : net_.layers[l + 1].spec.subnode_count();
      std::vector<Rendered> sums;
      for (std::size_t s = 0; s < layer.spec.subnode_count(); ++s) sums.push_back(render_sum(layer, s, inputs));

      std::vector<Rendered> nodes;
      for (std::size_t nd = 0; nd < layer.spec.node_count(); ++nd) {
        Rendered node;
        if (nd < layer.spec.n_add) {
          node = sums[nd];
        } else {
          std::string infix, prefix = "(*";
          for (std::size_t k = 0; k < layer.spec.mult_arity; ++k) {
            const Rendered named = define(sums[layer.spec.n_add + (nd - layer.spec.n_add) * layer.spec.mult_arity + k]);
            infix += (k ? " · " : "") + named.infix;
            prefix += " " + named.prefix;
          }
          node = {infix, prefix + ")", Shape::product};
        }
        if (!last && refs > 1) node = define(node);
        nodes.push_back(std::move(node));
      }
      inputs = std::move(nodes);
    }
    outputs_ = std::move(inputs);
  }

  std::string formula() const {
    std::ostringstream out;
    for (std::size_t k = 0; k < outputs_.size(); ++k) {
      out << "f_" << k;
      if (k < net_.output_names.size()) out << " (" << net_.output_names[k] << ")";
      out << " = " << outputs_[k].infix << "\n";
    }
    if (!defs_.empty()) {
      out << "where\n";
      for (const auto& [name, r] : defs_) out << "  " << name << " = " << r.infix << "\n";
    }
    out << "inputs\n";
    for (std::size_t i = 0; i < net_.input_dim(); ++i) {
      out << "  x_" << i + 1;
      if (i < net_.input_names.size() && net_.input_names[i] != "x_" + std::to_string(i + 1)) {
        out << " = " << net_.input_names[i];
      }
      out << "\n";
    }
    return out.str();
  }

  std::string prefix() const {
    std::ostringstream out;
    for (const auto& [name, r] : defs_) out << "def " << name << " " << r.prefix << "\n";
    for (std::size_t k = 0; k < outputs_.size(); ++k) out << "class " << k << " " << outputs_[k].prefix << "\n";
    return out.str();
  }

 private:
  Rendered define(const Rendered& r) {
    const std::string name = name_for(defs_.size());
    defs_.emplace_back(name, r);
    return {name, name, Shape::atom};
  }

  std::string num(double v) const { return format_fixed(v, precision_); }

  static std::string wrap(const Rendered& r, bool allow_product) {
    if (r.shape == Shape::atom || (allow_product && r.shape == Shape::product)) return r.infix;
    return "(" + r.infix + ")";
  }

  /// "b·E + c" for the argument of a periodic or square term.
  std::string argument(const PrimitiveFit& f, const Rendered& in) const {
    std::string s = num(f.b) + "·" + wrap(in, true);
    if (std::abs(f.c) >= cutoff_) s += (f.c < 0 ? " - " : " + ") + num(std::abs(f.c));
    return s;
  }

  Rendered render_sum(const SymbolicLayer& layer, std::size_t sub, const std::vector<Rendered>& inputs) const {
    std::vector<std::pair<double, std::string>> terms;  // signed coefficient, body
    std::string prefix = "(+";
    double constant = 0.0;
    for (std::size_t i = 0; i < layer.in_dim; ++i) {
      const PrimitiveFit& f = layer.edge(i, sub).fit;
      const Rendered& in = inputs[i];
      constant += f.d;
      const std::string pa = format_exact(f.a), pb = format_exact(f.b), pc = format_exact(f.c);
      switch (f.primitive) {
        case Primitive::linear:
          prefix += " (* " + pa + " " + in.prefix + ")";
          break;
        case Primitive::sin:
        case Primitive::cos:
        case Primitive::square: {
          const std::string op = f.primitive == Primitive::square ? "sq" : to_string(f.primitive);
          prefix += " (* " + pa + " (" + op + " (+ (* " + pb + " " + in.prefix + ") " + pc + ")))";
          break;
        }
      }
      if (std::abs(f.a) < cutoff_) continue;
      std::string body;
      switch (f.primitive) {
        case Primitive::linear: body = wrap(in, true); break;
        case Primitive::sin: body = "sin(" + argument(f, in) + ")"; break;
        case Primitive::cos: body = "cos(" + argument(f, in) + ")"; break;
        case Primitive::square: body = "(" + argument(f, in) + ")^2"; break;
      }
      terms.emplace_back(f.a, body);
    }
    prefix += " " + format_exact(constant) + ")";

    std::string infix;
    for (const auto& [coef, body] : terms) {
      if (infix.empty()) infix = (coef < 0 ? "-" : "") + num(std::abs(coef)) + "·" + body;
      else infix += (coef < 0 ? " - " : " + ") + num(std::abs(coef)) + "·" + body;
    }
    std::size_t parts = terms.size();
    if (std::abs(constant) >= cutoff_ || terms.empty()) {
      if (infix.empty()) infix = num(constant);
      else infix += (constant < 0 ? " - " : " + ") + num(std::abs(constant));
      ++parts;
    }
    Shape shape = Shape::sum;
    if (parts == 1 && infix.front() != '-') shape = terms.empty() ? Shape::atom : Shape::product;
    return {infix, prefix, shape};
  }

  const SymbolicNetwork& net_;
  int precision_;
  double cutoff_;
  std::vector<std::pair<std::string, Rendered>> defs_;
  std::vector<Rendered> outputs_;
};

}  // namespace

std::string emit_formula(const SymbolicNetwork& network, int precision) {
  FormulaBuilder b(network, precision);
  b.build();
  return b.formula();
}

std::string emit_prefix(const SymbolicNetwork& network) {
  FormulaBuilder b(network, 4);
  b.build();
  return b.prefix();
}

std::string edge_table_csv(const SymbolicNetwork& network) {
  std::ostringstream out;
  out << "layer,in,subnode,node,primitive,a,b,c,d,r_squared,low_fidelity,r2_linear,r2_sin,r2_cos,r2_square,error\n";
  for (const auto& layer : network.layers) {
    for (const auto& e : layer.edges) {
      out << e.source.layer << ',' << e.source.in << ',' << e.source.sub << ',' << e.node << ','
          << to_string(e.fit.primitive) << ',' << format_exact(e.fit.a) << ',' << format_exact(e.fit.b) << ','
          << format_exact(e.fit.c) << ',' << format_exact(e.fit.d) << ',' << format_exact(e.fit.r_squared) << ','
          << (e.low_fidelity ? "true" : "false");
      for (const auto& r2 : e.candidate_r2) out << ',' << (r2 ? format_exact(*r2) : std::string());
      std::string err = e.error;
      std::replace(err.begin(), err.end(), ',', ';');
      out << ',' << err << '\n';
    }
  }
  return out.str();
}

}  // namespace kanids::symbolic
