#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "sgflow/sgflow.hpp"

using namespace sgflow;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<Potential> library() {
  return {Potential::zero(), Potential::pendulum(0.05), Potential::pendulum(0.2),
          Potential::parse("modulated:0.1,cos(2*pi*x)"),
          Potential::parse("modulated:0.3,1 + 0.5*sin(2*pi*x)*cos(2*pi*x2)"),
          Potential::parse("expr:0.2*sin(2*pi*y)^2,0.4*pi*sin(4*pi*y),1.6*pi^2*cos(4*pi*y)")};
}

}  // namespace

TEST_CASE("potential specs", "[potential]") {
  CHECK(Potential::parse("zero").is_zero());
  const auto p = Potential::parse("pendulum:0.05");
  CHECK_THAT(p.value({0.3, 0.0}, 0.5), WithinAbs(0.1, 1e-15));
  CHECK(p.value({0.0, 0.0}, 0.0) == 0.0);
  CHECK(p.periodic_in_y());
  const auto m = Potential::parse("modulated:0.1,cos(2*pi*x)");
  CHECK_THAT(m.value({0.5, 0.0}, 0.0), WithinAbs(-0.1, 1e-15));
  CHECK_THROWS_AS(Potential::parse("pendulum"), std::exception);
  CHECK_THROWS_AS(Potential::parse("modulated:0.1"), ConfigError);
  CHECK_THROWS_AS(Potential::parse("expr:y,1"), ConfigError);
  CHECK_THROWS_AS(Potential::parse("quartic:1"), ConfigError);
}

TEST_CASE("built-in potentials are periodic in x and y", "[potential][property]") {
  Rng rng(1);
  std::uniform_real_distribution<double> uni(-2.0, 2.0);
  for (const auto& v : library()) {
    INFO(v.description());
    for (int rep = 0; rep < 50; ++rep) {
      const Point x{uni(rng), uni(rng)};
      const double y = uni(rng);
      for (const Point e : {Point{1, 0}, Point{0, 1}, Point{-2, 3}}) {
        const Point xe{x[0] + e[0], x[1] + e[1]};
        CHECK_THAT(v.value(xe, y), WithinAbs(v.value(x, y), 1e-12));
      }
      CHECK_THAT(v.value(x, y + 1), WithinAbs(v.value(x, y), 1e-12));
      CHECK_THAT(v.value(x, y - 3), WithinAbs(v.value(x, y), 1e-12));
    }
  }
}

TEST_CASE("analytic derivatives match centered differences to second order", "[potential][property]") {
  Rng rng(2);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (const auto& v : library()) {
    if (v.is_zero()) continue;
    INFO(v.description());
    for (int rep = 0; rep < 10; ++rep) {
      const Point x{uni(rng), uni(rng)};
      const double y = uni(rng);
      auto err1 = [&](double h) {
        return std::abs((v.value(x, y + h) - v.value(x, y - h)) / (2 * h) - v.d2(x, y));
      };
      auto err2 = [&](double h) {
        return std::abs((v.d2(x, y + h) - v.d2(x, y - h)) / (2 * h) - v.d22(x, y));
      };
      for (auto err : {std::function<double(double)>(err1), std::function<double(double)>(err2)}) {
        const double e3 = err(1e-3), e4 = err(1e-4);
        if (e3 < 1e-12) continue;  // derivative of a locally flat sample
        CHECK(std::log10(e3 / e4) >= 1.9);
      }
    }
  }
}

TEST_CASE("sup_v22 examples", "[potential]") {
  CHECK(sup_v22(Potential::zero(), 1) == 0.0);
  const auto c = Potential::parse("expr:cos(2*pi*y),-2*pi*sin(2*pi*y),-4*pi^2*cos(2*pi*y)");
  CHECK_THAT(sup_v22(c, 1), WithinRel(4 * kPi * kPi, 1e-10));
  const auto m = Potential::parse("modulated:0.1,cos(2*pi*x)");
  CHECK_THAT(sup_v22(m, 1), WithinRel(0.4 * kPi * kPi, 1e-10));
  CHECK_THAT(sup_v22(Potential::pendulum(0.05), 2), WithinRel(0.2 * kPi * kPi, 1e-10));
  // maximum off the sampling lattice, recovered by the polish
  const auto off = Potential::parse("expr:0,0,cos(2*pi*(y - 0.0123))*(2 + cos(2*pi*(x - 0.377)))");
  CHECK_THAT(sup_v22(off, 1, 16), WithinRel(3.0, 1e-9));

  const auto quad = Potential::parse("expr:y^2,2*y,2", false);
  CHECK_THROWS_AS(sup_v22(quad, 1), Error);
  const auto bounded = Potential::parse("expr:y^2,2*y,2", false, 2.0);
  CHECK(sup_v22(bounded, 1) == 2.0);
  CHECK_THAT(auto_gamma(Potential::pendulum(0.05), 1), WithinRel(1.1 * 0.2 * kPi * kPi + 0.1, 1e-10));
}

TEST_CASE("flow parameters", "[potential]") {
  FlowParams p;
  CHECK_NOTHROW(p.validate());
  CHECK(p.lambda() == 0.5);
  p.beta = 1.0;
  CHECK_THROWS_AS(p.validate(), Error);
  p.beta = 0.3;
  p.gamma = 0.0;
  CHECK_THROWS_AS(p.validate(), Error);
  p.gamma = 1.0;
  p.dt = 0.0;
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("x_apply examples", "[potential]") {
  Grid g(1, 1, 32);
  const EllipticOperator op(g, CoefficientField::identity(1));
  FlowParams prm;
  prm.gamma = 4.0;
  prm.beta = 0.5;
  const Field one = Field::constant(g, 1.0);
  CHECK((x_apply(op, prm, one, Potential::zero()) - one * 2.0).max_abs() <= 1e-12);

  const auto pend = Potential::pendulum(0.05);
  for (double c : {0.0, 0.2, 0.75}) {
    const Field u = Field::constant(g, c);
    const double expect = std::pow(4.0, -0.5) * (4.0 * c - pend.d2({0, 0}, c));
    CHECK((x_apply(op, prm, u, pend) - Field::constant(g, expect)).max_abs() <= 1e-13);
  }
}

TEST_CASE("X is order preserving when gamma exceeds sup|V22|", "[potential][property]") {
  const Grid g(2, 1, 10);
  const EllipticOperator op(g, CoefficientField::parse("diag:1,2", 2));
  Rng rng(3);
  for (const auto& v : library()) {
    FlowParams prm;
    prm.gamma = auto_gamma(v, 2);
    for (int rep = 0; rep < 5; ++rep) {
      auto [u, w] = random_ordered_pair(op, rng, 2.0);
      const Field xu = x_apply(op, prm, u, v), xw = x_apply(op, prm, w, v);
      CHECK((xu - xw).min() >= -1e-9);
    }
  }
}

TEST_CASE("core map is monotone in y", "[potential][property]") {
  for (const auto& v : library()) {
    const double gamma = sup_v22(v, 2);
    for (double x0 : {0.0, 0.37, 0.8})
      for (int k = 0; k < 400; ++k) {
        const double y0 = -1 + k / 200.0, y1 = y0 + 1.0 / 200;
        const Point x{x0, 0.5 * x0};
        CHECK(gamma * y1 - v.d2(x, y1) >= gamma * y0 - v.d2(x, y0) - 1e-12);
      }
  }
}

TEST_CASE("L-infinity bounds", "[potential]") {
  Grid g(1, 1, 32);
  const EllipticOperator op(g, CoefficientField::identity(1));
  FlowParams prm;
  prm.gamma = 4.0;
  prm.beta = 0.5;
  const Field one = Field::constant(g, 1.0);
  const auto r = l_infinity_bound_check(op, one, prm, Potential::zero());
  CHECK_THAT(r.x_norm, WithinAbs(2.0, 1e-13));
  CHECK_THAT(r.x_bound, WithinAbs(2.0, 1e-13));
  CHECK(r.ok);

  Rng rng(4);
  const EllipticOperator var(Grid(1, 2, 32), CoefficientField::parse("expr:1 + 0.5*sin(2*pi*x)", 1));
  for (const auto& v : library()) {
    for (int rep = 0; rep < 5; ++rep) {
      const Field u = random_uniform(var.grid(), rng);
      const auto rr = l_infinity_bound_check(var, u, prm, v);
      CHECK(rr.x_margin >= -1e-9);
      CHECK(rr.semigroup_margin >= -1e-9);
      CHECK(rr.ok);
    }
  }
  const double t0[] = {0.0};
  const Field u = random_uniform(g, rng);
  CHECK_THAT(l_infinity_bound_check(op, u, prm, Potential::zero(), t0).semigroup_margin, WithinAbs(0.0, 1e-12));
}
