#include "kanids/symbolic.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "oracles.hpp"
#include "support.hpp"

using namespace kanids;
using symbolic::Primitive;

namespace {

symbolic::Samples sample_fn(double (*f)(double), double lo, double hi, int n) {
  symbolic::Samples s;
  for (int i = 0; i < n; ++i) {
    const double x = lo + (hi - lo) * i / (n - 1);
    s.emplace_back(x, f(x));
  }
  return s;
}

// Best r^2 of a*g(b*x+c)+d over a dense (b, c) grid, with (a, d) by least squares.
double dense_search_r2(const symbolic::Samples& s, Primitive p, double b_lo, double b_hi) {
  double my = 0.0;
  for (auto [x, y] : s) my += y;
  my /= static_cast<double>(s.size());
  double sst = 0.0;
  for (auto [x, y] : s) sst += (y - my) * (y - my);
  double best = -1e300;
  for (double b = b_lo; b <= b_hi; b += 0.002) {
    for (double c = -std::numbers::pi; c < std::numbers::pi; c += 0.01) {
      double sg = 0, sgg = 0, sgy = 0, sy = 0;
      std::vector<double> g;
      for (auto [x, y] : s) {
        const double u = b * x + c;
        const double v = p == Primitive::sin ? std::sin(u) : p == Primitive::cos ? std::cos(u) : u * u;
        g.push_back(v);
        sg += v;
        sgg += v * v;
        sgy += v * y;
        sy += y;
      }
      const double n = static_cast<double>(s.size());
      const double var = sgg - sg * sg / n;
      if (var <= 0) continue;
      const double a = (sgy - sg * sy / n) / var;
      const double d = (sy - a * sg) / n;
      double ssr = 0.0;
      for (std::size_t i = 0; i < s.size(); ++i) ssr += std::pow(s[i].second - a * g[i] - d, 2);
      best = std::max(best, 1.0 - ssr / sst);
    }
  }
  return best;
}

symbolic::SymbolicEdge edge_of(Primitive p, double a, double b, double c, double d) {
  symbolic::SymbolicEdge e;
  e.fit = {p, a, b, c, d, 1.0};
  return e;
}

// A trained two-class network with a multiplication layer.
kan::KanNetwork trained_network(Matrix& x_out) {
  Rng rng(4);
  const std::size_t m = 600;
  Matrix x(m, 3);
  std::vector<int> y;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < 3; ++j) x(i, j) = rng.normal();
    y.push_back(std::sin(2 * x(i, 0)) + 0.5 * x(i, 1) * x(i, 2) > 0 ? 1 : 0);
  }
  auto net = kan::build_network(kan::parse_width_spec("3,(2,1),2"), {}, 9);
  kan::TrainConfig cfg;
  cfg.epochs = 5;
  cfg.learning_rate = 0.01;
  cfg.batch_size = 64;
  kan::LabeledSet set{x, y};
  kan::train(net, set, nullptr, cfg);
  x_out = x;
  return net;
}

}  // namespace

TEST_CASE("primitive names") {
  for (auto p : symbolic::kPrimitives) CHECK(symbolic::parse_primitive(symbolic::to_string(p)) == p);
  CHECK_CODE(symbolic::parse_primitive("tanh"), ErrorCode::invalid_argument);
}

TEST_CASE("fit sin") {
  auto s = sample_fn([](double x) { return std::sin(x); }, -3, 3, 200);
  auto f = symbolic::fit_primitive(s, Primitive::sin);
  CHECK(f.r_squared >= 0.999);
  CHECK(f.a == doctest::Approx(1.0).epsilon(0.02));
  CHECK(f.b == doctest::Approx(1.0).epsilon(0.02));
  CHECK(f.a >= 0.0);
  CHECK(f.c >= -std::numbers::pi);
  CHECK(f.c < std::numbers::pi);
  CHECK(f.r_squared >= dense_search_r2(s, Primitive::sin, 0.5, 1.5) - 1e-9);
}

TEST_CASE("fit against dense search") {
  auto s = sample_fn([](double x) { return 0.3 * std::cos(2.2 * x - 0.4) + 0.05 * x * x; }, -2, 2, 120);
  for (auto p : {Primitive::sin, Primitive::cos}) {
    CAPTURE(symbolic::to_string(p));
    auto f = symbolic::fit_primitive(s, p);
    CHECK(f.r_squared >= dense_search_r2(s, p, 1.7, 2.7) - 1e-6);
  }
}

TEST_CASE("fit linear") {
  auto s = sample_fn([](double x) { return 2 * x + 1; }, -1, 3, 50);
  auto f = symbolic::fit_primitive(s, Primitive::linear);
  CHECK(std::abs(f.a - 2) <= 1e-10);
  CHECK(std::abs(f.d - 1) <= 1e-10);
  CHECK(f.b == 1.0);
  CHECK(f.c == 0.0);
  CHECK(std::abs(f.r_squared - 1) <= 1e-10);

  auto flat = sample_fn([](double) { return 5.0; }, -1, 1, 20);
  auto g = symbolic::fit_primitive(flat, Primitive::linear);
  CHECK(std::abs(g.a) < 1e-12);
  CHECK(g.d == doctest::Approx(5.0));
  CHECK(g.r_squared == 1.0);
}

TEST_CASE("fit preconditions") {
  auto few = sample_fn([](double x) { return x; }, 0, 1, 7);
  CHECK_CODE(symbolic::fit_primitive(few, Primitive::linear), ErrorCode::insufficient_samples);
  symbolic::Samples narrow;
  for (int i = 0; i < 10; ++i) narrow.emplace_back(1.0 + i * 1e-8, i);
  CHECK_CODE(symbolic::fit_primitive(narrow, Primitive::sin), ErrorCode::degenerate_x);
}

TEST_CASE("generating primitive wins") {
  auto lin = sample_fn([](double x) { return -0.7 * x + 0.2; }, -2, 2, 100);
  auto sq = sample_fn([](double x) { return 1.3 * std::pow(0.8 * x - 0.4, 2) - 1.0; }, -2, 2, 100);
  auto per = sample_fn([](double x) { return 0.9 * std::sin(1.7 * x + 0.3) + 0.1; }, -3, 3, 100);

  auto r2 = [](const symbolic::Samples& s, Primitive p) { return symbolic::fit_primitive(s, p).r_squared; };
  for (auto p : {Primitive::sin, Primitive::cos, Primitive::square}) CHECK(r2(lin, Primitive::linear) > r2(lin, p));
  for (auto p : {Primitive::linear, Primitive::sin, Primitive::cos}) CHECK(r2(sq, Primitive::square) > r2(sq, p));
  // sin and cos describe the same family up to a phase shift.
  CHECK(r2(per, Primitive::sin) > r2(per, Primitive::linear));
  CHECK(r2(per, Primitive::sin) > r2(per, Primitive::square));
  CHECK(r2(per, Primitive::cos) > r2(per, Primitive::square));
  CHECK(r2(per, Primitive::sin) >= 0.9999);
}

TEST_CASE("r squared recomputation") {
  auto s = sample_fn([](double x) { return std::exp(0.3 * x); }, -2, 2, 40);
  for (auto p : symbolic::kPrimitives) {
    auto f = symbolic::fit_primitive(s, p);
    double my = 0.0;
    for (auto [x, y] : s) my += y;
    my /= static_cast<double>(s.size());
    double ssr = 0, sst = 0;
    for (auto [x, y] : s) {
      ssr += std::pow(y - f(x), 2);
      sst += std::pow(y - my, 2);
    }
    CHECK(std::abs(f.r_squared - (1 - ssr / sst)) <= 1e-10);
    CHECK(f.r_squared <= 1.0);
  }
}

TEST_CASE("edge sampling") {
  auto net = kan::build_network(kan::parse_width_spec("2,3,2"), {}, 5);
  Matrix x(6, 2);
  for (std::size_t i = 0; i < 6; ++i) {
    x(i, 0) = 0.3 * static_cast<double>(i) - 0.8;
    x(i, 1) = 1.25;
  }
  auto s = symbolic::sample_edge(net, {0, 0, 1}, x);
  CHECK(s.size() == 6);
  const auto& edge = net.layers[0].edge(0, 1);
  for (auto [xv, yv] : s) CHECK(yv == edge(xv));
  for (std::size_t i = 1; i < s.size(); ++i) CHECK(s[i].first > s[i - 1].first);

  CHECK(symbolic::sample_edge(net, {0, 1, 0}, x).size() == 1);
  CHECK_CODE(symbolic::sample_edge(net, {2, 0, 0}, x), ErrorCode::unknown_edge);
  CHECK_CODE(symbolic::sample_edge(net, {0, 5, 0}, x), ErrorCode::unknown_edge);
  CHECK_CODE(symbolic::sample_edge(net, {0, 0, 0}, Matrix(0, 2)), ErrorCode::empty_batch);
}

TEST_CASE("snapping a sin-trained edge") {
  kan::GridConfig grid;
  grid.num_intervals = 10;
  auto net = kan::build_regression_network({{1, 0}, {1, 0}}, grid, 3);
  Rng rng(8);
  Matrix x(1024, 1), y(1024, 1);
  for (std::size_t i = 0; i < 1024; ++i) {
    x(i, 0) = rng.uniform(-3, 3);
    y(i, 0) = std::sin(x(i, 0));
  }
  kan::TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.epochs = 100;
  kan::train_regression(net, x, y, cfg);
  auto sn = symbolic::snap_network(net, x);
  const auto& e = sn.layers[0].edge(0, 0);
  CHECK(e.fit.primitive == Primitive::sin);
  CHECK(e.fit.r_squared >= 0.99);
  CHECK_FALSE(e.low_fidelity);
}

TEST_CASE("snapping edge cases") {
  auto net = kan::build_network(kan::parse_width_spec("3,(2,1),2"), {}, 1);
  kan::assign_parameters(net, std::vector<double>(net.parameter_count(), 0.0));
  Rng rng(2);
  Matrix x(50, 3);
  for (auto& v : x.values()) v = rng.normal();
  auto zero = symbolic::snap_network(net, x);
  for (const auto& layer : zero.layers) {
    for (const auto& e : layer.edges) {
      CHECK(e.fit.primitive == Primitive::linear);
      CHECK(std::abs(e.fit.a) < 1e-12);
    }
  }

  Matrix trained_x;
  auto trained = trained_network(trained_x);
  symbolic::SnapOptions strict;
  strict.r2_threshold = 1.01;
  auto all_low = symbolic::snap_network(trained, trained_x, strict);
  for (const auto& layer : all_low.layers) {
    for (const auto& e : layer.edges) {
      CHECK(e.low_fidelity);
      CHECK(e.fit.primitive == Primitive::linear);
    }
  }
  CHECK_CODE(symbolic::snap_network(trained, Matrix(0, 3)), ErrorCode::empty_batch);
}

TEST_CASE("snapped network properties") {
  Matrix x;
  auto net = trained_network(x);
  auto pass = kan::forward(net, x);
  auto sn = symbolic::snap_network(net, x);

  SUBCASE("reported r squared is reproducible") {
    for (const auto& layer : sn.layers) {
      for (const auto& e : layer.edges) {
        auto s = symbolic::sample_edge(net, pass.cache, e.source);
        CHECK(std::abs(symbolic::r_squared(s, e.fit) - e.fit.r_squared) <= 1e-10);
        CHECK(e.fit.r_squared <= 1.0);
        if (!e.low_fidelity) {
          for (const auto& r2 : e.candidate_r2) {
            if (r2) CHECK(*r2 <= e.fit.r_squared + 1e-9);
          }
        }
      }
    }
  }

  SUBCASE("deterministic across thread counts") {
    symbolic::SnapOptions one, many;
    one.threads = 1;
    many.threads = 8;
    auto a = symbolic::snap_network(net, x, one);
    auto b = symbolic::snap_network(net, x, many);
    CHECK(symbolic::emit_formula(a) == symbolic::emit_formula(b));
    CHECK(symbolic::emit_prefix(a) == symbolic::emit_prefix(b));
    CHECK(symbolic::edge_table_csv(a) == symbolic::edge_table_csv(b));
  }

  SUBCASE("prefix text agrees with the snapped network") {
    const std::string prefix = symbolic::emit_prefix(sn);
    auto out = sn.evaluate(x);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      auto row = x.row(r);
      auto v = oracle::eval_prefix_text(prefix, {row.begin(), row.end()});
      REQUIRE(v.size() == 2);
      for (std::size_t c = 0; c < 2; ++c) CHECK(std::abs(v[c] - out(r, c)) <= 1e-8 * std::max(1.0, std::abs(out(r, c))));
    }
  }

  SUBCASE("rounded formula text agrees with the snapped network") {
    const std::string text = symbolic::emit_formula(sn, 4);
    CHECK(text.find(" · ") != std::string::npos);
    Rng rng(17);
    Matrix probe(100, 3);
    for (auto& v : probe.values()) v = rng.normal();
    auto out = sn.evaluate(probe);
    for (std::size_t r = 0; r < 100; ++r) {
      auto row = probe.row(r);
      auto v = oracle::eval_formula_text(text, {row.begin(), row.end()});
      for (std::size_t c = 0; c < 2; ++c) CHECK(std::abs(v[c] - out(r, c)) <= 1e-2 * std::max(1.0, std::abs(out(r, c))));
    }
  }

  SUBCASE("edge table") {
    std::istringstream in(symbolic::edge_table_csv(sn));
    std::string line;
    std::getline(in, line);
    CHECK(line ==
          "layer,in,subnode,node,primitive,a,b,c,d,r_squared,low_fidelity,r2_linear,r2_sin,r2_cos,r2_square,error");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 3 * 4 + 3 * 2);
  }
}

TEST_CASE("formula rendering") {
  SUBCASE("single linear edge") {
    symbolic::SymbolicNetwork net;
    symbolic::SymbolicLayer layer;
    layer.spec = {1, 0, 2};
    layer.in_dim = 1;
    layer.edges.push_back(edge_of(Primitive::linear, 2, 1, 0, 1));
    net.layers.push_back(layer);
    net.input_names = {"x_1"};
    const std::string text = symbolic::emit_formula(net);
    CHECK(text.find("2.0000·x_1 + 1.0000") != std::string::npos);
  }

  SUBCASE("multiplication node") {
    symbolic::SymbolicNetwork net;
    symbolic::SymbolicLayer hidden;
    hidden.spec = {0, 1, 2};
    hidden.in_dim = 2;
    hidden.edges = {edge_of(Primitive::linear, 0.5, 1, 0, 0), edge_of(Primitive::sin, 1, 2, -0.5, 0),
                    edge_of(Primitive::linear, -1, 1, 0, 0.25), edge_of(Primitive::linear, 3, 1, 0, 0)};
    symbolic::SymbolicLayer out;
    out.spec = {2, 0, 2};
    out.in_dim = 1;
    out.edges = {edge_of(Primitive::linear, -0.1319, 1, 0, 5.973), edge_of(Primitive::linear, 0.1319, 1, 0, -5.973)};
    net.layers = {hidden, out};
    net.input_names = {"x_1", "rate"};
    net.output_names = {"malicious", "benign"};
    const std::string text = symbolic::emit_formula(net);
    CHECK(text.find("C = A · B") != std::string::npos);
    CHECK(text.find("f_0 (malicious) = -0.1319·C + 5.9730") != std::string::npos);
    CHECK(text.find("sin(2.0000·x_1 - 0.5000)") != std::string::npos);
    CHECK(text.find("x_2 = rate") != std::string::npos);

    Matrix probe(1, 2);
    probe(0, 0) = 0.4;
    probe(0, 1) = -1.1;
    auto v = oracle::eval_formula_text(text, {0.4, -1.1});
    auto ref = net.evaluate(probe);
    CHECK(v[0] == doctest::Approx(ref(0, 0)).epsilon(1e-4));
    CHECK(v[1] == doctest::Approx(ref(0, 1)).epsilon(1e-4));

    const double A = 0.5 * 0.4 + -1.0 * -1.1 + 0.25;
    const double B = std::sin(2 * 0.4 - 0.5) + 3 * -1.1;
    CHECK(ref(0, 0) == doctest::Approx(-0.1319 * A * B + 5.973).epsilon(1e-12));

    // With a single consumer the product stays inline.
    net.layers[1].spec = {1, 0, 2};
    net.layers[1].edges.pop_back();
    net.output_names.clear();
    const std::string single = symbolic::emit_formula(net);
    CHECK(single.find("f_0 = -0.1319·A · B + 5.9730") != std::string::npos);
  }

  SUBCASE("tiny coefficients are omitted") {
    symbolic::SymbolicNetwork net;
    symbolic::SymbolicLayer layer;
    layer.spec = {1, 0, 2};
    layer.in_dim = 2;
    layer.edges = {edge_of(Primitive::linear, 1e-6, 1, 0, 0), edge_of(Primitive::square, 2, 1, 0, 0.5)};
    net.layers.push_back(layer);
    const std::string text = symbolic::emit_formula(net, 4);
    const std::string first = text.substr(0, text.find('\n'));
    CHECK(first.find("x_1") == std::string::npos);
    CHECK(text.find("2.0000·(1.0000·x_2)^2 + 0.5000") != std::string::npos);
  }
}
