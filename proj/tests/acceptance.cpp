// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Each criterion also has a wall-time budget.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "sgflow/sgflow.hpp"
#include "support/newton_oracle.hpp"

using namespace sgflow;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail << "failed: ";
      detail << what << "; ";
      pass = false;
    }
  }
};

FlowParams params(double gamma, double beta = 0.5, double dt = 1e-2, double t_end = 5.0, double tol = 1e-8) {
  FlowParams p;
  p.gamma = gamma;
  p.beta = beta;
  p.dt = dt;
  p.t_end = t_end;
  p.tol_residual = tol;
  return p;
}

double rel(const Field& a, const Field& b) { return (a - b).max_abs() / std::max(1.0, b.max_abs()); }

std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", x);
  return buf;
}

// ---------------------------------------------------------------------------

std::vector<EllipticOperator> calculus_operators(double alpha) {
  return {
      EllipticOperator(Grid(1, 1, 64), CoefficientField::parse("expr:1 + 0.5*sin(2*pi*x)", 1), alpha),
      EllipticOperator(Grid(2, 1, 12), CoefficientField::parse("expr:1.5 + 0.5*sin(2*pi*x)*cos(2*pi*x2);0.2;1", 2),
                       alpha),
      EllipticOperator(Grid(1, 2, 32), CoefficientField::identity(1), alpha, Discretization::FourierSymbol),
      EllipticOperator(Grid(2, 1, 10, Boundary::DirichletBox), CoefficientField::parse("diag:1,2", 2), alpha),
  };
}

void operator_calculus(Outcome& o, double alpha) {
  Rng rng(101);
  double power = 0, semi = 0, constants = 0;
  for (const auto& op : calculus_operators(alpha)) {
    for (int rep = 0; rep < 5; ++rep) {
      const Field u = random_uniform(op.grid(), rng);
      const double gamma = 0.5 + rep;
      const double s = -0.75 + 0.3 * rep, r = 0.4 - 0.2 * rep;
      power = std::max(power, rel(frac_power_apply(op, gamma, s, frac_power_apply(op, gamma, r, u)),
                                  frac_power_apply(op, gamma, s + r, u)));
      const double lam = 0.25 + 0.15 * rep, t1 = 0.01 * (rep + 1), t2 = 0.3;
      semi = std::max(semi, (semigroup_apply(op, gamma, lam, t1, semigroup_apply(op, gamma, lam, t2, u)) -
                             semigroup_apply(op, gamma, lam, t1 + t2, u))
                                .max_abs());
    }
    if (!op.grid().periodic()) continue;
    for (double gamma : {0.3, 2.0, 7.5})
      for (double beta : {0.25, 0.5, 0.75}) {
        const Field c = Field::constant(op.grid(), -1.3);
        constants = std::max(constants, (frac_power_apply(op, gamma, -beta, c) - c * std::pow(gamma, -beta)).max_abs());
      }
  }
  o.require(power <= 1e-10, "power law " + sci(power));
  o.require(semi <= 1e-10, "semigroup law " + sci(semi));
  o.require(constants <= 1e-12, "constants rule " + sci(constants));
  o.detail << "power " << sci(power) << ", semigroup " << sci(semi) << ", constants " << sci(constants);
}

void quadrature_oracles(Outcome& o) {
  const EllipticOperator op(Grid(1, 1, 64), CoefficientField::parse("expr:1 + 0.5*sin(2*pi*x)", 1));
  Rng rng(102);
  double bal = 0, gam = 0, sub = 0, heat = 0;
  for (int k = 0; k < 20; ++k) {
    const Field u = random_uniform(op.grid(), rng);
    for (double beta : {0.25, 0.5, 0.75}) {
      const Field exact = frac_power_apply(op, 2.0, -beta, u);
      bal = std::max(bal, (balakrishnan_apply(op, 2.0, beta, u).value - exact).max_abs() / exact.max_abs());
      gam = std::max(gam, (gamma_function_apply(op, 2.0, beta, u).value - exact).max_abs() / exact.max_abs());
    }
    for (double t : {0.05, 0.5, 2.0}) {
      const Field exact = semigroup_apply(op, 1.0, 0.5, t, u);
      sub = std::max(sub, (subordination_apply(op, 1.0, t, u).value - exact).max_abs() / exact.max_abs());
    }
  }
  for (int dim : {1, 2}) {
    const Grid g(dim, 2, dim == 1 ? 32 : 16);
    const EllipticOperator fourier(g, CoefficientField::identity(dim), 1.0, Discretization::FourierSymbol);
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.size()));
    delta[5] = 1.0 / g.cell_volume();
    for (const Field& u : {Field(g, delta), random_band_limited(fourier, rng)})
      for (double t : {0.02, 0.1}) {
        const Field fr = semigroup_apply(fourier, 0.0, 1.0, t, u);
        heat = std::max(heat, (heat_kernel_apply(g, t, u) - fr).max_abs() / std::max(1.0, fr.max_abs()));
      }
  }
  o.require(bal <= 1e-6, "balakrishnan " + sci(bal));
  o.require(gam <= 1e-6, "gamma function " + sci(gam));
  o.require(sub <= 1e-6, "subordination " + sci(sub));
  o.require(heat <= 1e-8, "heat kernel " + sci(heat));
  o.detail << "balakrishnan " << sci(bal) << ", gamma " << sci(gam) << ", subordination " << sci(sub) << ", heat "
           << sci(heat);
}

void smoothing_bound(Outcome& o) {
  const EllipticOperator ops[] = {
      EllipticOperator(Grid(1, 1, 128), CoefficientField::identity(1)),
      EllipticOperator(Grid(2, 1, 16), CoefficientField::parse("diag:1,3", 2)),
      EllipticOperator(Grid(1, 2, 32), CoefficientField::parse("expr:1 + 0.5*sin(2*pi*x)", 1), 0.5),
  };
  double worst_ratio = 0;
  int checks = 0;
  for (const auto& op : ops)
    for (double gamma : {0.5, 4.0})
      for (double beta : {0.25, 0.5, 0.75})
        for (int n : {1, 2, 3})
          for (double t : {0.1, 1.0}) {
            const double lam = 1 - beta;
            double worst = 0.0;
            for (Eigen::Index i = 0; i < op.effective_eigenvalues().size(); ++i) {
              const double b = gamma + op.effective_eigenvalues()[i];
              worst = std::max(worst, std::pow(b, n * lam) * std::exp(-t * std::pow(b, lam)));
            }
            const double bound = std::pow(n / (std::sqrt(2.0) * t), n);
            worst_ratio = std::max(worst_ratio, worst / bound);
            ++checks;
          }
  o.require(worst_ratio <= 1.0, "max/bound " + sci(worst_ratio));
  o.detail << checks << " cases, largest max/bound " << sci(worst_ratio);
}

void gradient_correctness(Outcome& o) {
  const EllipticOperator op(Grid(1, 2, 32), CoefficientField::parse("expr:1 + 0.5*sin(2*pi*x)", 1));
  const auto v = Potential::pendulum(0.2);
  const FlowParams prm = params(auto_gamma(v, 1), 0.5);
  const FlowProblem prob(op, prm, v);
  Rng rng(104);
  double l2_err = 0, sob_err = 0;
  for (int k = 0; k < 20; ++k) {
    const Field u = random_band_limited(op, rng);
    const Field eta = random_band_limited(op, rng);
    const double h = 1e-4;
    const double fd = (prob.energy(u + eta * h) - prob.energy(u - eta * h)) / (2 * h);
    const double l2 = inner_l2(prob.l2_gradient(u), eta);
    const double sob = inner_hs(prob.sobolev_gradient(u), eta, op, prm.gamma, prm.beta);
    l2_err = std::max(l2_err, std::abs(l2 - fd) / std::abs(fd));
    sob_err = std::max(sob_err, std::abs(sob - fd) / std::abs(fd));
  }
  o.require(l2_err <= 1e-5, "DS(u)eta " + sci(l2_err));
  o.require(sob_err <= 1e-5, "<grad_beta S, eta>_beta " + sci(sob_err));
  o.detail << "DS(u)eta rel " << sci(l2_err) << ", Sobolev pairing rel " << sci(sob_err);
}

void linear_exactness(Outcome& o, double alpha) {
  // small gamma: ETD1 then carries only the O(dt gamma) splitting error
  const EllipticOperator op(Grid(1, 1, 64), CoefficientField::identity(1), alpha, Discretization::FourierSymbol);
  const double gamma = 0.01, beta = 0.5;
  const FlowProblem prob(op, params(gamma, beta, 1e-3, 1.0), Potential::zero());
  Rng rng(105);
  double err = 0;
  for (int k = 0; k < 5; ++k) {
    const Field u0 = random_band_limited(op, rng);
    const Trajectory tr = evolve(u0, StepScheme::etd1(), prob, {.store_every = 100000});
    const Field exact =
        op.apply_function(u0, [&](double nu) { return std::exp(-1.0 * nu * std::pow(gamma + nu, -beta)); });
    o.require(std::abs(tr.final_time - 1.0) < 1e-12, "final time");
    err = std::max(err, (tr.final_state() - exact).max_abs());
  }
  o.require(err <= 1e-6, "max error " + sci(err));
  o.detail << "max error at t=1 " << sci(err);
}

void comparison_principle(Outcome& o, double alpha) {
  const EllipticOperator op(Grid(1, 1, 64), CoefficientField::parse("expr:1 + 0.5*sin(2*pi*x)", 1), alpha);
  const auto v = Potential::pendulum(0.05);
  const FlowProblem prob(op, params(auto_gamma(v, 1)), v);
  o.require(prob.params().gamma > sup_v22(v, 1), "gamma above sup|V22|");
  Rng rng(107);
  double min_gap = std::numeric_limits<double>::infinity();
  int bad = 0;
  for (int k = 0; k <= 200; ++k) {
    const auto [u0, v0] = random_ordered_pair(op, rng, 1.0);
    const double horizon = k < 200 ? 2.0 : 20.0;
    const auto r = check_comparison(u0, v0, StepScheme::etd1(), prob, horizon);
    min_gap = std::min(min_gap, r.min_gap);
    if (r.min_gap < -1e-8) ++bad;
  }
  o.require(bad == 0, std::to_string(bad) + " pairs with gaps below -1e-8");
  o.detail << "200 pairs to t=2 and 1 to t=20, gamma " << sci(prob.params().gamma) << ", min gap " << sci(min_gap);
}

void equivariance(Outcome& o) {
  const EllipticOperator op(Grid(1, 2, 32), CoefficientField::parse("expr:1 + 0.3*cos(2*pi*x)", 1));
  Rng rng(108);
  double worst_r = 0, worst_c = 0;
  int cases = 0;
  for (const auto& v : {Potential::pendulum(0.05), Potential::parse("modulated:0.1,1 + 0.5*sin(2*pi*x)")}) {
    const FlowProblem prob(op, params(auto_gamma(v, 1)), v);
    for (int l = -2; l <= 3; ++l)
      for (int k : {-1, 1, 2}) {
        const auto r = check_equivariance(random_band_limited(op, rng), prob, 1.0, {k, 0}, l);
        worst_r = std::max(worst_r, r.value_shift_error);
        worst_c = std::max(worst_c, r.domain_shift_error);
        ++cases;
      }
  }
  o.require(worst_r <= 1e-9, "R_l " + sci(worst_r));
  o.require(worst_c <= 1e-9, "C_k " + sci(worst_c));
  o.detail << cases << " (k,l) cases, R_l " << sci(worst_r) << ", C_k " << sci(worst_c);
}

void energy_descent(Outcome& o) {
  struct Case {
    EllipticOperator op;
    Potential v;
  };
  const Case cases[] = {
      {EllipticOperator(Grid(1, 1, 64), CoefficientField::parse("expr:1 + 0.5*sin(2*pi*x)", 1)), Potential::pendulum(0.01)},
      {EllipticOperator(Grid(1, 1, 64), CoefficientField::parse("expr:1 + 0.5*sin(2*pi*x)", 1)), Potential::pendulum(0.05)},
      {EllipticOperator(Grid(1, 1, 64), CoefficientField::parse("expr:1 + 0.5*sin(2*pi*x)", 1)), Potential::pendulum(0.2)},
      {EllipticOperator(Grid(2, 1, 16), CoefficientField::parse("diag:1,2", 2)),
       Potential::parse("modulated:0.1,1 + 0.5*sin(2*pi*x)*cos(2*pi*x2)")},
  };
  Rng rng(106);
  std::size_t increases = 0, runs = 0;
  double drop = 0;
  for (const auto& c : cases) {
    const FlowProblem prob(c.op, params(auto_gamma(c.v, c.op.grid().dim()), 0.5, 1e-2, 5.0), c.v);
    for (int k = 0; k < 10; ++k) {
      const Trajectory tr =
          evolve(random_band_limited(c.op, rng, 1.0), StepScheme::etd1(), prob, {.store_every = 1000, .stop_on_residual = false});
      increases += tr.energy_increases.size();
      drop = std::max(drop, tr.diagnostics.front().energy - tr.diagnostics.back().energy);
      o.require(tr.diagnostics.size() == 501, "ran all 500 steps");
      ++runs;
    }
  }
  o.require(increases == 0, std::to_string(increases) + " steps increased the energy");
  o.detail << runs << " runs over t in [0,5], " << increases << " increasing steps";
}

// Criteria 9 and 10 share the descents.
struct MinimizerStats {
  bool ran = false;
  Outcome c9, c10;
};

MinimizerStats& minimizer_runs() {
  static MinimizerStats st;
  if (st.ran) return st;
  st.ran = true;
  const double eps = 0.05;
  const auto v = Potential::pendulum(eps);
  const auto v2 = [eps](double, double y) { return eps * 2 * kPi * std::sin(2 * kPi * y); };
  const auto v22 = [eps](double, double y) { return eps * 4 * kPi * kPi * std::cos(2 * kPi * y); };
  const int n = 32;
  double worst_res = 0, worst_dist = 0, worst_hess = std::numeric_limits<double>::infinity();
  std::size_t min_snaps = std::numeric_limits<std::size_t>::max();
  for (const char* text : {"0", "1/2", "1/3", "2/5"}) {
    const auto w = RotationVector::parse(text);
    const Grid g(1, static_cast<int>(w.N), n);
    const EllipticOperator op(g, CoefficientField::identity(1));
    MinimizerOptions opts;
    opts.store_every = 1;
    std::size_t snaps = 0, non_birkhoff = 0;
    opts.observer = [&](double, const TiltedField& tf) {
      ++snaps;
      if (!birkhoff_check(tf, 3).ok) ++non_birkhoff;
    };
    const auto m = find_minimizer(w, op, params(auto_gamma(v, 1), 0.5, 5e-2, 400.0, 1e-10), v, opts);
    const auto ref = oracle::newton_tilted_1d(static_cast<int>(w.N), n, w.value()[0], [](double) { return 1.0; }, v2, v22);
    const Eigen::VectorXd d = m.u.p.values() - ref.p;
    const double dist = (d.array() - std::round(d.mean())).abs().maxCoeff();
    // curvature of the energy at the limit, for the record
    {
      const Eigen::MatrixXd a = op.assemble();
      Eigen::MatrixXd hess = a;
      const Eigen::VectorXd u = m.u.values();
      for (Eigen::Index i = 0; i < u.size(); ++i) hess(i, i) += v22(0.0, u[i]);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hess);
      worst_hess = std::min(worst_hess, es.eigenvalues()[0]);
    }
    worst_res = std::max(worst_res, m.residual);
    worst_dist = std::max(worst_dist, dist);
    st.c9.require(m.residual < 1e-6, std::string(text) + " residual " + sci(m.residual));
    st.c9.require(ref.residual < 1e-10, std::string(text) + " Newton oracle did not converge");
    st.c9.require(dist <= 1e-5, std::string(text) + " distance to Newton " + sci(dist));
    st.c9.require(birkhoff_check(m.u, 3).ok, std::string(text) + " final state not Birkhoff");
    st.c10.require(non_birkhoff == 0, std::string(text) + ": " + std::to_string(non_birkhoff) + " stored states not Birkhoff");
    if (w.is_zero()) {
      // omega.x = 0 is already critical for this potential: no descent to follow
      st.c10.require(snaps == 1 && m.time == 0.0, "omega = 0 should be critical at t = 0");
    } else {
      st.c10.require(snaps >= 20, std::string(text) + ": only " + std::to_string(snaps) + " snapshots");
      min_snaps = std::min(min_snaps, snaps);
    }
  }
  // d = 2 smoke case on a 32 x 32 grid
  {
    const auto w = RotationVector::parse("1,0/2");
    const EllipticOperator op(Grid(2, 2, 16), CoefficientField::identity(2));
    const auto m = find_minimizer(w, op, params(auto_gamma(v, 2), 0.5, 5e-2, 100.0, 1e-4), v);
    st.c9.require(m.residual < 1e-4, "d=2 residual " + sci(m.residual));
    st.c9.detail << "d=2 residual " << sci(m.residual) << "; ";
  }
  st.c9.detail << "1D max residual " << sci(worst_res) << ", max distance to Newton " << sci(worst_dist)
               << ", smallest Hessian eigenvalue " << sci(worst_hess);
  st.c10.detail << "every stored state Birkhoff (W=3), fewest snapshots on a nontrivial descent " << min_snaps
                << "; omega=0 starts at a critical point";
  return st;
}

void rational_minimizer(Outcome& o) {
  auto& st = minimizer_runs();
  o.pass = st.c9.pass;
  o.detail << st.c9.detail.str();
}

void birkhoff_preservation(Outcome& o) {
  auto& st = minimizer_runs();
  o.pass = st.c10.pass;
  o.detail << st.c10.detail.str();
}

void oscillation_sweep(Outcome& o) {
  SweepSetup setup;
  setup.points_per_period = 32;
  setup.potential = Potential::pendulum(0.05);
  setup.params = params(auto_gamma(setup.potential, 1), 0.5, 5e-2, 400.0, 1e-10);
  const auto omegas = golden_convergents(4);
  const SweepReport rep = sweep(omegas, setup);
  std::ostringstream ratios;
  for (const auto& it : rep.items) {
    o.require(!it.error, it.omega.str() + " failed: " + it.error.value_or(""));
    o.require(it.converged, it.omega.str() + " did not converge");
    ratios << it.omega.str() << ":" << sci(it.osc_ratio) << " ";
  }
  o.require(rep.items.size() == 4 && rep.items.back().omega.str() == "5/8", "sweep through 5/8");
  o.require(rep.osc_ratio_max_deviation <= 0.2, "osc ratio spread " + sci(rep.osc_ratio_max_deviation));
  o.require(rep.sup_p_slope <= 0.05, "sup|p| slope " + sci(rep.sup_p_slope));
  o.detail << "osc ratios " << ratios.str() << "spread " << sci(rep.osc_ratio_max_deviation) << ", sup|p| slope "
           << sci(rep.sup_p_slope);
}

void fractional_base(Outcome& o) {
  Outcome a, b, c;
  operator_calculus(a, 0.5);
  linear_exactness(b, 0.5);
  comparison_principle(c, 0.5);
  o.pass = a.pass && b.pass && c.pass;
  o.detail << "[calculus] " << a.detail.str() << " [linear] " << b.detail.str() << " [comparison] " << c.detail.str();
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<void(Outcome&)> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "operator calculus", 5, [](Outcome& o) { operator_calculus(o, 1.0); }},
      {2, "quadrature oracles", 60, quadrature_oracles},
      {3, "smoothing bound", 1, smoothing_bound},
      {4, "gradient correctness", 10, gradient_correctness},
      {5, "linear-flow exactness", 5, [](Outcome& o) { linear_exactness(o, 1.0); }},
      {6, "energy descent", 60, energy_descent},
      {7, "comparison principle", 120, [](Outcome& o) { comparison_principle(o, 1.0); }},
      {8, "equivariance", 30, equivariance},
      {9, "rational minimizer", 180, rational_minimizer},
      {10, "Birkhoff preservation", 180, birkhoff_preservation},
      {11, "oscillation sweep", 120, oscillation_sweep},
      {12, "fractional base operator", 120, fractional_base},
  };
  int failed = 0;
  double total = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    total += secs;
    o.require(secs < c.budget_s, "over the " + sci(c.budget_s) + " s budget");
    if (!o.pass) ++failed;
    std::printf("%s %2d %-26s %7.2fs  %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs, o.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed in %.1f s\n", static_cast<int>(criteria.size()) - failed, criteria.size(), total);
  return failed == 0 ? 0 : 1;
}
