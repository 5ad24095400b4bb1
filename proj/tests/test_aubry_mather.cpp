#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "sgflow/sgflow.hpp"
#include "support/newton_oracle.hpp"

using namespace sgflow;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double kPi = std::numbers::pi;

FlowParams params(double gamma, double beta = 0.5, double dt = 0.05, double t_end = 200.0, double tol = 1e-8) {
  FlowParams p;
  p.gamma = gamma;
  p.beta = beta;
  p.dt = dt;
  p.t_end = t_end;
  p.tol_residual = tol;
  return p;
}

// max |a - b - c| minimized over the integer c
double distance_mod_integer(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd d = a - b;
  const double c = std::round(d.mean());
  return (d.array() - c).abs().maxCoeff();
}

}  // namespace

TEST_CASE("rotation vectors", "[aubry_mather]") {
  const auto w = RotationVector::parse("2/4");
  CHECK(w.q[0] == 1);
  CHECK(w.N == 2);
  CHECK(w.str() == "1/2");
  const auto v = RotationVector::parse("3,-6/9");
  CHECK(v.dim == 2);
  CHECK(v.q[0] == 1);
  CHECK(v.q[1] == -2);
  CHECK(v.N == 3);
  CHECK_THAT(v.norm_l1(), WithinAbs(1.0, 1e-15));
  CHECK(RotationVector::parse("0").is_zero());
  CHECK(RotationVector::parse("0/5").N == 1);
  CHECK(RotationVector::parse("1").N == 1);
  CHECK_THROWS_AS(RotationVector::parse("1/0"), ConfigError);
  CHECK_THROWS_AS(RotationVector::parse("a/2"), ConfigError);
  CHECK_THROWS_AS(RotationVector::parse("1,2,3/4"), ConfigError);
}

TEST_CASE("tilted field evaluation", "[aubry_mather]") {
  const Grid g(1, 2, 8);
  const auto w = RotationVector::parse("1/2");
  const TiltedField tf{w, field_from_fn(g, [](const Point& x) { return std::sin(kPi * x[0]); })};
  for (std::int64_t i : {-20, -3, 0, 5, 17, 40}) {
    const double x = static_cast<double>(i) / 8;
    CHECK_THAT(tf.at(i), WithinAbs(0.5 * x + std::sin(kPi * x), 1e-12));
  }
  CHECK_THAT(tf.values()[4], WithinAbs(0.25 + 1.0, 1e-12));
}

TEST_CASE("tilted right-hand side", "[aubry_mather]") {
  const auto w = RotationVector::parse("1/2");
  SECTION("constant coefficients and no potential: the linear part is stationary") {
    const Grid g(1, 2, 16);
    const EllipticOperator op(g, CoefficientField::identity(1));
    const Field r = tilted_rhs(TiltedField{w, Field(g)}, op, params(1.0), Potential::zero());
    CHECK(r.max_abs() <= 1e-13);
  }
  SECTION("variable coefficients force p through -omega a'(x)") {
    const Grid g(1, 2, 64);
    const EllipticOperator op(g, CoefficientField::parse("expr:1 + 0.5*sin(2*pi*x)", 1));
    const auto prm = params(1.0);
    const Field r = tilted_rhs(TiltedField{w, Field(g)}, op, prm, Potential::zero());
    const Field force = field_from_fn(g, [](const Point& x) { return -0.5 * 0.5 * 2 * kPi * std::cos(2 * kPi * x[0]); });
    const Field expect = frac_power_apply(op, prm.gamma, -prm.beta, force) * -1.0;
    CHECK(r.max_abs() > 0.1);
    CHECK((r - expect).max_abs() <= 2e-3 * expect.max_abs());
  }
  SECTION("omega = 0 reduces to the untilted Sobolev gradient") {
    const Grid g(1, 1, 32);
    const EllipticOperator op(g, CoefficientField::parse("expr:1 + 0.5*sin(2*pi*x)", 1));
    const auto prm = params(3.0, 0.3);
    const auto pend = Potential::pendulum(0.05);
    const Field p = field_from_fn(g, [](const Point& x) { return 0.3 * std::cos(2 * kPi * x[0]) + 0.1; });
    const Field r = tilted_rhs(TiltedField{RotationVector::parse("0"), p}, op, prm, pend);
    const Field lin = frac_power_apply(op, prm.gamma, prm.lambda(), p) * -1.0;
    CHECK((r - (lin + x_apply(op, prm, p, pend))).max_abs() <= 1e-10);
    CHECK((r + sobolev_gradient(p, FlowProblem(op, prm, pend))).max_abs() <= 1e-12);
  }
}

TEST_CASE("Birkhoff check examples", "[aubry_mather]") {
  const Grid g(1, 2, 16);
  const auto half = RotationVector::parse("1/2");
  for (int window : {0, 1, 3, 5}) CHECK(birkhoff_check(TiltedField{half, Field(g)}, window).ok);

  const Grid g1(1, 1, 16);
  const Field s = field_from_fn(g1, [](const Point& x) { return 0.1 * std::sin(2 * kPi * x[0]); });
  CHECK(birkhoff_check(TiltedField{RotationVector::parse("0"), s}).ok);

  const auto bump = [](double a) {
    return [a](const Point& x) { return a * std::sin(kPi * x[0]); };
  };
  CHECK(birkhoff_check(TiltedField{half, field_from_fn(g, bump(0.2))}).ok);
  const auto bad = birkhoff_check(TiltedField{half, field_from_fn(g, bump(0.4))});
  CHECK_FALSE(bad.ok);
  // s(x) = 1/2 - 0.8 sin(pi x) dips to -0.3 for k = 1, l = 0 (and every odd k)
  CHECK_THAT(bad.worst_violation, WithinAbs(0.3 - 1e-8, 1e-6));
  CHECK(bad.worst_k[0] % 2 != 0);  // every odd k ties with k = 1
  CHECK(bad.pairs_checked > 0);

  const Grid g2(2, 1, 8);
  const Field wave = field_from_fn(g2, [](const Point& x) { return 0.2 * std::sin(2 * kPi * (x[0] + x[1])); });
  CHECK(birkhoff_check(TiltedField{RotationVector::parse("0,0"), wave}, 2).ok);
  CHECK_THROWS_AS(birkhoff_check(TiltedField{half, Field(g)}, -1), Error);
}

TEST_CASE("flow commutes with integer translations", "[aubry_mather][property]") {
  const Grid g(1, 2, 16);
  const EllipticOperator op(g, CoefficientField::parse("expr:1 + 0.3*cos(2*pi*x)", 1));
  Rng rng(11);
  for (const auto& v : {Potential::pendulum(0.05), Potential::parse("modulated:0.1,1 + 0.5*sin(2*pi*x)")}) {
    const FlowProblem prob(op, params(auto_gamma(v, 1), 0.5, 0.01), v);
    for (int l = -2; l <= 3; ++l) {
      const Field u0 = random_band_limited(op, rng, 1.0);
      const int k = l % 2 == 0 ? 1 : -1;
      const auto r = check_equivariance(u0, prob, 0.3, {k, 0}, l);
      INFO(v.description() << " l=" << l);
      CHECK(r.value_shift_error <= 1e-9);
      CHECK(r.domain_shift_error <= 1e-9);
      CHECK(r.ok);
    }
  }
  const Grid g2(2, 1, 8);
  const EllipticOperator op2(g2, CoefficientField::parse("diag:1,2", 2));
  const auto v = Potential::parse("modulated:0.1,cos(2*pi*x2)");
  const FlowProblem prob2(op2, params(auto_gamma(v, 2), 0.4, 0.01), v);
  const Field u2 = random_band_limited(op2, rng, 1.0);
  const auto r2 = check_equivariance(u2, prob2, 0.2, {1, -1}, 2);
  CHECK(r2.ok);
  // truncated Picard iterates carry constants only approximately, so only
  // the domain shift is exact for them
  const auto rp = check_equivariance(u2, prob2, 0.2, {1, -1}, 2, StepScheme::picard(2));
  CHECK(rp.domain_shift_error <= 1e-9);
  CHECK(rp.value_shift_error <= 1e-3);
}

TEST_CASE("oscillation examples", "[aubry_mather]") {
  const Grid g(1, 2, 16);
  CHECK(oscillation(TiltedField{RotationVector::parse("0"), Field::constant(Grid(1, 1, 16), 0.7)}, {0.5, 0}, 1.0) ==
        0.0);
  const auto half = RotationVector::parse("1/2");
  CHECK_THAT(oscillation(TiltedField{half, Field(g)}, {1.0, 0}, 1.0), WithinAbs(0.5, 1e-14));
  // the cube may reach past the stored period
  CHECK_THAT(oscillation(TiltedField{half, Field(g)}, {0.0, 0}, 3.0), WithinAbs(1.5, 1e-14));
  const Grid g2(2, 3, 8);
  const auto w2 = RotationVector::parse("1,-2/3");
  CHECK_THAT(oscillation(TiltedField{w2, Field(g2)}, {1.5, 1.5}, 1.0), WithinAbs(1.0, 1e-14));
  CHECK_THROWS_AS(oscillation(TiltedField{half, Field(g)}, {0.03, 0}, 0.01), Error);
  CHECK_THROWS_AS(oscillation(TiltedField{half, Field(g)}, {0.5, 0}, 0.0), Error);
}

TEST_CASE("minimizer search", "[aubry_mather]") {
  SECTION("no potential, constant coefficients: omega.x is already critical") {
    const Grid g(1, 3, 16);
    const EllipticOperator op(g, CoefficientField::identity(1));
    const auto m = find_minimizer(RotationVector::parse("2/3"), op, params(1.0), Potential::zero());
    CHECK(m.converged);
    CHECK(m.residual <= 1e-12);
    CHECK(m.time == 0.0);
    CHECK(m.snapshots == 1);
    CHECK(m.u.p.max_abs() <= 1e-14);
  }
  SECTION("result keeps its mean in [0,1) and descends") {
    const Grid g(1, 2, 32);
    const EllipticOperator op(g, CoefficientField::identity(1));
    const auto v = Potential::pendulum(0.05);
    std::vector<double> energies;
    MinimizerOptions opts;
    opts.phase_time = 2.0;
    opts.store_every = 5;
    bool birkhoff = true;
    const auto w = RotationVector::parse("1/2");
    const FlowProblem full = tilted_problem(w, op, params(auto_gamma(v, 1)), v);
    opts.observer = [&](double, const TiltedField& tf) {
      energies.push_back(full.energy(tf.p));
      birkhoff = birkhoff && birkhoff_check(tf).ok;
    };
    const auto m = find_minimizer(w, op, params(auto_gamma(v, 1)), v, opts);
    CHECK(m.converged);
    CHECK(m.residual < 1e-8);
    CHECK(m.u.mean() >= 0.0);
    CHECK(m.u.mean() < 1.0);
    CHECK(birkhoff);
    CHECK(m.snapshots == energies.size());
    CHECK(m.residual_curve.size() == m.snapshots);
    for (std::size_t i = 1; i < energies.size(); ++i) CHECK(energies[i] <= energies[i - 1] + 1e-12);
    CHECK(m.energy_increases.empty());
  }
}

TEST_CASE("minimizers match an independent Newton solve", "[aubry_mather]") {
  struct Case {
    const char* omega;
    const char* coeff;
    std::function<double(double)> a;
  };
  const std::vector<Case> cases{
      {"1/2", "identity", [](double) { return 1.0; }},
      {"1/3", "identity", [](double) { return 1.0; }},
      {"2/5", "expr:1 + 0.3*sin(2*pi*x)", [](double x) { return 1 + 0.3 * std::sin(2 * kPi * x); }},
  };
  const double eps = 0.05;
  const auto v = Potential::pendulum(eps);  // eps (1 - cos 2 pi y)
  const auto v2 = [eps](double, double y) { return eps * 2 * kPi * std::sin(2 * kPi * y); };
  const auto v22 = [eps](double, double y) { return eps * 4 * kPi * kPi * std::cos(2 * kPi * y); };
  for (const auto& c : cases) {
    INFO(c.omega << " " << c.coeff);
    const auto w = RotationVector::parse(c.omega);
    const int n = 16;
    const Grid g(1, static_cast<int>(w.N), n);
    const EllipticOperator op(g, CoefficientField::parse(c.coeff, 1));
    const auto m = find_minimizer(w, op, params(auto_gamma(v, 1), 0.5, 0.05, 400.0, 1e-10), v);
    REQUIRE(m.converged);
    const auto ref = oracle::newton_tilted_1d(static_cast<int>(w.N), n, w.value()[0], c.a, v2, v22);
    REQUIRE(ref.residual < 1e-10);
    CHECK(distance_mod_integer(m.u.p.values(), ref.p) <= 1e-6);
  }
}

TEST_CASE("vanishing potential keeps p constant", "[aubry_mather]") {
  const Grid g(2, 3, 6);
  const EllipticOperator op(g, CoefficientField::parse("diag:1,2", 2));
  const auto m = find_minimizer(RotationVector::parse("1,2/3"), op, params(1.0), Potential::pendulum(0.0));
  CHECK(m.converged);
  CHECK(m.u.p.max() - m.u.p.min() <= 1e-12);
  CHECK_THAT(oscillation(m.u, {1.5, 1.5}, 1.0), WithinAbs(1.0 / 3 + 2.0 / 3, 1e-12));
}

TEST_CASE("continued fractions", "[aubry_mather]") {
  const auto cf = continued_fraction_convergents(0.4, 10);
  REQUIRE(cf.size() == 3);
  CHECK(cf[1] == std::pair<std::int64_t, std::int64_t>{1, 2});
  CHECK(cf[2] == std::pair<std::int64_t, std::int64_t>{2, 5});
  const auto gold = golden_convergents(6);
  REQUIRE(gold.size() == 6);
  const std::int64_t expect[6][2] = {{1, 2}, {2, 3}, {3, 5}, {5, 8}, {8, 13}, {13, 21}};
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(gold[i].q[0] == expect[i][0]);
    CHECK(gold[i].N == expect[i][1]);
  }
  const double inv_phi = (std::sqrt(5.0) - 1) / 2;
  for (std::size_t i = 1; i < 6; ++i)
    CHECK(std::abs(gold[i].value()[0] - inv_phi) < std::abs(gold[i - 1].value()[0] - inv_phi));
  CHECK(golden_convergents(2, 2)[1].dim == 2);
}

TEST_CASE("sweeps", "[aubry_mather]") {
  SweepSetup setup;
  setup.points_per_period = 16;
  setup.params = params(1.0);
  const auto rep = sweep({RotationVector::parse("0")}, setup);
  REQUIRE(rep.items.size() == 1);
  CHECK_FALSE(rep.items[0].error);
  CHECK(rep.items[0].converged);
  CHECK(rep.items[0].birkhoff_ok);
  CHECK(rep.items[0].osc_q == 0.0);
  CHECK_FALSE(rep.items[0].c0_to_previous);

  setup.potential = Potential::pendulum(0.05);
  setup.params = params(auto_gamma(setup.potential, 1));
  const auto gr = sweep(golden_convergents(3), setup);
  REQUIRE(gr.items.size() == 3);
  for (const auto& it : gr.items) {
    CHECK_FALSE(it.error);
    CHECK(it.converged);
    CHECK(it.birkhoff_ok);
    CHECK(it.osc_q > 0.0);
  }
  CHECK(gr.items[1].c0_to_previous.has_value());
  CHECK(gr.osc_ratio_max_deviation < 0.2);

  // an inconsistent setup is recorded per item and the sweep continues
  setup.coeff = "expr:1 + 0.5*sin(pi*x)";
  const auto bad = sweep({RotationVector::parse("1/2"), RotationVector::parse("0")}, setup);
  CHECK(bad.items[0].error.has_value());
  CHECK(bad.items[1].error.has_value());
}

TEST_CASE("index slope", "[aubry_mather]") {
  CHECK(index_slope({}) == 0.0);
  CHECK(index_slope({3.0}) == 0.0);
  CHECK_THAT(index_slope({1.0, 3.0, 5.0, 7.0}), WithinAbs(2.0, 1e-14));
}
