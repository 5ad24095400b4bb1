#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sgflow/elliptic_operator.hpp"
#include "sgflow/error.hpp"
#include "sgflow/expression.hpp"
#include "sgflow/flow.hpp"
#include "sgflow/grid.hpp"
#include "sgflow/potential.hpp"

namespace sgflow {

/// Rational rotation vector omega = q / N, gcd-reduced, N >= 1.
struct RotationVector {
  int dim = 1;
  std::array<std::int64_t, 2> q{0, 0};
  std::int64_t N = 1;

  static RotationVector make(int dim, std::array<std::int64_t, 2> q, std::int64_t N) {
    if (dim != 1 && dim != 2) throw Error("rotation vector dimension must be 1 or 2");
    if (N < 1) throw Error("rotation vector denominator must be >= 1");
    if (dim == 1) q[1] = 0;
    std::int64_t g = N;
    for (int i = 0; i < dim; ++i) g = std::gcd(g, q[static_cast<std::size_t>(i)]);
    RotationVector r;
    r.dim = dim;
    r.q = {q[0] / g, q[1] / g};
    r.N = N / g;
    return r;
  }

  /// "q1/N" or "q1,q2/N"; a bare "q1[,q2]" means N = 1.
  static RotationVector parse(const std::string& text) {
    const auto slash = text.find('/');
    const std::string num = text.substr(0, slash);
    std::int64_t N = 1;
    try {
      if (slash != std::string::npos) N = std::stoll(text.substr(slash + 1));
      const auto parts = split_trimmed(num, ',');
      if (parts.empty() || parts.size() > 2) throw ConfigError("");
      std::array<std::int64_t, 2> q{0, 0};
      for (std::size_t i = 0; i < parts.size(); ++i) q[i] = std::stoll(parts[i]);
      return make(static_cast<int>(parts.size()), q, N);
    } catch (const std::logic_error&) {
      throw ConfigError("cannot parse rotation vector '" + text + "'");
    } catch (const Error&) {
      throw ConfigError("cannot parse rotation vector '" + text + "'");
    }
  }

  std::array<double, 2> value() const {
    return {static_cast<double>(q[0]) / static_cast<double>(N),
            static_cast<double>(q[1]) / static_cast<double>(N)};
  }
  double norm() const {
    const auto w = value();
    return std::sqrt(w[0] * w[0] + w[1] * w[1]);
  }
  double norm_l1() const {
    const auto w = value();
    return std::abs(w[0]) + std::abs(w[1]);
  }
  bool is_zero() const noexcept { return q[0] == 0 && q[1] == 0; }

  std::string str() const {
    std::ostringstream os;
    os << q[0];
    if (dim == 2) os << ',' << q[1];
    os << '/' << N;
    return os.str();
  }
};

/// u(x) = omega.x + p(x) with p periodic over the grid's N Z^d.
struct TiltedField {
  RotationVector omega;
  Field p;

  /// omega.x at lattice index (i0, i1), which may lie outside the grid.
  double linear_at(std::int64_t i0, std::int64_t i1) const {
    const double h = p.grid().spacing();
    const auto w = omega.value();
    return w[0] * static_cast<double>(i0) * h + w[1] * static_cast<double>(i1) * h;
  }
  /// u at lattice index (i0, i1), extending p periodically.
  double at(std::int64_t i0, std::int64_t i1 = 0) const {
    const Grid& g = p.grid();
    const std::int64_t M = g.cells();
    auto wrap = [M](std::int64_t i) { return static_cast<int>(((i % M) + M) % M); };
    const std::size_t node = g.dim() == 1 ? static_cast<std::size_t>(wrap(i0)) : g.flat(wrap(i0), wrap(i1));
    return linear_at(i0, g.dim() == 2 ? i1 : 0) + p[node];
  }
  /// u on the grid nodes.
  Eigen::VectorXd values() const {
    const Grid& g = p.grid();
    Eigen::VectorXd out(static_cast<Eigen::Index>(g.size()));
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto ix = g.multi_index(i);
      out[static_cast<Eigen::Index>(i)] = linear_at(ix[0], ix[1]) + p[i];
    }
    return out;
  }
  double mean() const { return values().mean(); }
};

namespace detail {

inline void check_tilt_setup(const RotationVector& omega, const Grid& g) {
  if (!g.periodic()) throw Error("tilted fields need a periodic grid");
  if (omega.dim != g.dim()) throw Error("rotation vector and grid dimensions differ");
  if (g.period() % omega.N != 0)
    throw Error("grid period " + std::to_string(g.period()) + " is not a multiple of the rotation denominator " +
                std::to_string(omega.N));
}

}  // namespace detail

/// Flow problem for the periodic part p of u = omega.x + p.
inline FlowProblem tilted_problem(const RotationVector& omega, const EllipticOperator& op,
                                  const FlowParams& params, const Potential& potential) {
  detail::check_tilt_setup(omega, op.grid());
  return FlowProblem(op, params, potential, omega.value());
}

/// dp/dt = -(gamma + A)^{-beta} (A p + g_omega + V2(x, omega.x + p)), the flow
/// of u = omega.x + p with the linear part carried exactly.
inline Field tilted_rhs(const TiltedField& u, const EllipticOperator& op, const FlowParams& params,
                        const Potential& potential) {
  const FlowProblem prob = tilted_problem(u.omega, op, params, potential);
  return prob.sobolev_gradient(u.p) * -1.0;
}

struct BirkhoffReport {
  bool ok = true;
  std::array<int, 2> worst_k{0, 0};
  std::int64_t worst_l = 0;
  double worst_violation = 0.0;  // 0 when every pair passes
  std::size_t pairs_checked = 0;
};

/// Check that s(x) = u(x + k) - u(x) - l has the sign of omega.k - l on all
/// nodes for k in {-W..W}^d and l in {-ceil(W |omega|_1) - 1 .. +same}. At
/// omega.k = l either uniform sign is accepted, |s| <= tol counting as
/// uniform. The sign of omega.k - l is decided in integer arithmetic.
inline BirkhoffReport birkhoff_check(const TiltedField& u, int window = 3, double tol = 1e-8) {
  const Grid& g = u.p.grid();
  if (!g.periodic()) throw Error("birkhoff_check needs a periodic grid");
  if (window < 0) throw Error("Birkhoff window must be nonnegative");
  const int d = g.dim();
  const int n = g.points_per_period();
  const auto lmax = static_cast<std::int64_t>(std::ceil(window * u.omega.norm_l1() - 1e-12)) + 1;
  BirkhoffReport rep;
  const Eigen::VectorXd& p = u.p.values();
  const int k1max = d == 2 ? window : 0;
  for (int k1 = -k1max; k1 <= k1max; ++k1)
    for (int k0 = -window; k0 <= window; ++k0) {
      // p(x + k) - p(x): shift by k n nodes along each axis
      Eigen::VectorXd diff(p.size());
      for (std::size_t i = 0; i < g.size(); ++i)
        diff[static_cast<Eigen::Index>(i)] = u.p[g.shifted(i, {k0 * n, k1 * n})] - u.p[i];
      const double dmin = diff.minCoeff(), dmax = diff.maxCoeff();
      const std::int64_t qk = u.omega.q[0] * k0 + u.omega.q[1] * k1;
      for (std::int64_t l = -lmax; l <= lmax; ++l) {
        ++rep.pairs_checked;
        const std::int64_t num = qk - l * u.omega.N;  // sign of omega.k - l
        const double c = static_cast<double>(num) / static_cast<double>(u.omega.N);
        const double smin = c + dmin, smax = c + dmax;
        double violation = 0.0;
        if (num > 0) {
          violation = std::max(0.0, -smin - tol);
        } else if (num < 0) {
          violation = std::max(0.0, smax - tol);
        } else {
          const bool uniform = smin >= -tol || smax <= tol;
          violation = uniform ? 0.0 : std::min(-smin, smax) - tol;
        }
        if (violation > rep.worst_violation) {
          rep.worst_violation = violation;
          rep.worst_k = {k0, k1};
          rep.worst_l = l;
        }
      }
    }
  rep.ok = rep.worst_violation <= 0.0;
  return rep;
}

struct EquivarianceReport {
  double value_shift_error = 0.0;   // ||Phi_t(u0 + l) - (Phi_t u0 + l)||_inf
  double domain_shift_error = 0.0;  // ||Phi_t(u0(. + k)) - (Phi_t u0)(. + k)||_inf
  bool ok = false;
};

/// Flow equivariance under integer value shifts R_l and integer domain
/// shifts C_k, both computed by direct double evolution to time t.
inline EquivarianceReport check_equivariance(const Field& u0, const FlowProblem& problem, double t,
                                             std::array<int, 2> k, int l,
                                             StepScheme scheme = StepScheme::etd1(), double tol = 1e-9) {
  const Grid& g = u0.grid();
  if (!g.periodic()) throw Error("equivariance checks need a periodic grid");
  if (!problem.potential().periodic_in_y()) throw Error("equivariance under R_l needs a y-periodic potential");
  if (g.dim() == 1 && k[1] != 0) throw Error("shift has more components than the grid");
  FlowParams prm = problem.params();
  prm.t_end = t;
  prm.tol_residual = 0.0;
  const FlowProblem prob(problem.op(), prm, problem.potential(), problem.tilt());
  const EvolveOptions opts{.store_every = std::numeric_limits<std::size_t>::max() / 2};
  auto flow = [&](const Field& f) { return evolve(f, scheme, prob, opts).final_state(); };
  const std::array<int, 2> nodes{k[0] * g.points_per_period(), k[1] * g.points_per_period()};

  const Field base = flow(u0);
  EquivarianceReport r;
  r.value_shift_error = (flow(u0.plus_constant(l)) - base.plus_constant(l)).max_abs();
  r.domain_shift_error = (flow(u0.shifted(nodes)) - base.shifted(nodes)).max_abs();
  r.ok = r.value_shift_error <= tol && r.domain_shift_error <= tol;
  return r;
}

/// max - min of u over the grid nodes inside the closed cube
/// center +- side/2 (p extended periodically).
inline double oscillation(const TiltedField& u, const Point& center, double side) {
  const Grid& g = u.p.grid();
  if (!(side > 0.0)) throw Error("cube side must be positive");
  const double h = g.spacing();
  const double eps = 1e-12;
  std::array<std::int64_t, 2> lo{0, 0}, hi{0, 0};
  for (int a = 0; a < g.dim(); ++a) {
    lo[static_cast<std::size_t>(a)] = static_cast<std::int64_t>(std::ceil((center[static_cast<std::size_t>(a)] - side / 2) / h - eps));
    hi[static_cast<std::size_t>(a)] = static_cast<std::int64_t>(std::floor((center[static_cast<std::size_t>(a)] + side / 2) / h + eps));
    if (hi[static_cast<std::size_t>(a)] < lo[static_cast<std::size_t>(a)]) throw Error("oscillation cube contains no grid nodes");
  }
  double mn = std::numeric_limits<double>::infinity(), mx = -mn;
  for (std::int64_t i1 = lo[1]; i1 <= hi[1]; ++i1)
    for (std::int64_t i0 = lo[0]; i0 <= hi[0]; ++i0) {
      const double v = u.at(i0, i1);
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
  return mx - mn;
}

struct MinimizerOptions {
  StepScheme scheme = StepScheme::etd1();
  double phase_time = 5.0;      // descent time between renormalizations
  std::size_t store_every = 10;
  /// Called with (t, state) for every stored state, after renormalization.
  std::function<void(double, const TiltedField&)> observer;
};

struct MinimizerResult {
  TiltedField u;
  double residual = 0.0;
  double energy = 0.0;
  double time = 0.0;
  bool converged = false;
  std::size_t snapshots = 0;
  std::int64_t total_shift = 0;
  std::vector<std::pair<double, double>> residual_curve;  // (t, residual) at stored states
  std::vector<EnergyIncrease> energy_increases;
};

/// Descend from u0 = omega.x (p = 0) until the residual ||Au + V2(x,u)||_inf
/// drops below params.tol_residual or params.t_end is reached. After each
/// phase, u is shifted by the integer k = -floor(mean u) so that its mean
/// lies in [0,1).
inline MinimizerResult find_minimizer(const RotationVector& omega, const EllipticOperator& op,
                                      const FlowParams& params, const Potential& potential,
                                      const MinimizerOptions& opts = {}) {
  if (!potential.periodic_in_y()) throw Error("find_minimizer needs a y-periodic potential");
  if (!(opts.phase_time > 0.0)) throw Error("phase time must be positive");
  const Grid& g = op.grid();
  MinimizerResult res{TiltedField{omega, Field(g)}};
  const FlowProblem full = tilted_problem(omega, op, params, potential);
  double t = 0.0;

  auto renormalize = [&](Field p) {
    const TiltedField tf{omega, p};
    const auto k = static_cast<std::int64_t>(-std::floor(tf.mean()));
    res.total_shift += k;
    return k == 0 ? p : p.plus_constant(static_cast<double>(k));
  };

  Field p = renormalize(Field(g));
  bool first = true;
  for (;;) {
    FlowParams phase = params;
    phase.t_end = std::min(opts.phase_time, params.t_end - t);
    const FlowProblem prob(op, phase, potential, omega.value());
    std::vector<std::pair<double, Field>> stored;
    EvolveOptions eo{.store_every = opts.store_every, .stop_on_residual = true, .t_start = t};
    eo.on_store = [&](double ts, const Field& s) { stored.emplace_back(ts, s); };
    Trajectory tr = evolve(p, opts.scheme, prob, eo);
    for (const auto& e : tr.energy_increases) res.energy_increases.push_back(e);
    // the initial state of later phases was already reported
    for (std::size_t i = first ? 0 : 1; i < stored.size(); ++i) {
      const Field& s = stored[i].second;
      res.residual_curve.emplace_back(stored[i].first, full.residual(s));
      ++res.snapshots;
      if (opts.observer) opts.observer(stored[i].first, TiltedField{omega, s});
    }
    first = false;
    t = tr.final_time;
    p = renormalize(tr.final_state());
    if (tr.converged || t >= params.t_end - 1e-12 * std::max(1.0, params.t_end)) {
      res.converged = tr.converged;
      break;
    }
  }
  res.u = TiltedField{omega, p};
  res.time = t;
  res.residual = full.residual(p);  // re-evaluated after the final shift
  res.converged = res.residual < params.tol_residual;
  res.energy = full.energy(p);
  return res;
}

/// Convergents h_k / k_k of the continued fraction of x, starting at the
/// integer part; stops after `count` terms or when x is reached exactly.
inline std::vector<std::pair<std::int64_t, std::int64_t>> continued_fraction_convergents(double x, int count) {
  std::vector<std::pair<std::int64_t, std::int64_t>> out;
  std::int64_t h0 = 1, h1 = 0, k0 = 0, k1 = 1;  // h_{-1}, h_{-2}, k_{-1}, k_{-2}
  double r = x;
  for (int i = 0; i < count; ++i) {
    const auto a = static_cast<std::int64_t>(std::floor(r));
    const std::int64_t h = a * h0 + h1, k = a * k0 + k1;
    out.emplace_back(h, k);
    h1 = h0; h0 = h; k1 = k0; k0 = k;
    const double frac = r - static_cast<double>(a);
    if (frac < 1e-12) break;
    r = 1.0 / frac;
  }
  return out;
}

/// Convergents of the golden mean 1/phi: 1/2, 2/3, 3/5, 5/8, ... (`levels` terms).
inline std::vector<RotationVector> golden_convergents(int levels, int dim = 1) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  std::vector<RotationVector> out;
  for (const auto& [h, k] : continued_fraction_convergents(inv_phi, levels + 3)) {
    if (k < 2) continue;  // skip 0/1 and 1/1
    if (static_cast<int>(out.size()) == levels) break;
    out.push_back(RotationVector::make(dim, {h, 0}, k));
  }
  return out;
}

/// Everything needed to rebuild an operator on the grid matching each omega.
struct SweepSetup {
  int dim = 1;
  int points_per_period = 32;
  std::string coeff = "identity";
  double alpha = 1.0;
  Discretization discretization = Discretization::FiniteDifference;
  FlowParams params;
  Potential potential = Potential::zero();
  int window = 3;
  double cube_side = 1.0;
  MinimizerOptions minimizer;
};

struct SweepItem {
  RotationVector omega;
  std::int64_t N = 1;
  double residual = 0.0;
  bool converged = false;
  bool birkhoff_ok = false;
  double osc_q = 0.0;
  double sup_p = 0.0;          // sup |p - mean p|
  double energy_per_cell = 0.0;
  double osc_ratio = 0.0;      // osc_Q / sqrt(1 + |omega|^2)
  std::optional<double> c0_to_previous;
  std::optional<std::string> error;
  std::optional<TiltedField> minimizer;
};

struct SweepReport {
  std::vector<SweepItem> items;
  double osc_ratio_mean = 0.0;
  double osc_ratio_max_deviation = 0.0;  // max |ratio / mean - 1|
  double sup_p_slope = 0.0;              // least-squares slope of sup_p per level
};

/// Least-squares slope of y against its index.
inline double index_slope(const std::vector<double>& y) {
  const auto n = static_cast<double>(y.size());
  if (y.size() < 2) return 0.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double x = static_cast<double>(i);
    sx += x; sy += y[i]; sxx += x * x; sxy += x * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Run find_minimizer for each omega on an N-periodic grid (N = its
/// denominator) and collect residual, Birkhoff status, oscillation over the
/// unit cube at the domain center, sup |p - mean p| and energy per cell.
/// Failures are recorded per item and the sweep continues.
inline SweepReport sweep(const std::vector<RotationVector>& omegas, const SweepSetup& setup) {
  SweepReport rep;
  std::optional<TiltedField> prev;
  for (const auto& omega : omegas) {
    SweepItem it;
    it.omega = omega;
    it.N = omega.N;
    try {
      const Grid g(setup.dim, static_cast<int>(omega.N), setup.points_per_period);
      const EllipticOperator op(g, CoefficientField::parse(setup.coeff, setup.dim), setup.alpha,
                                setup.discretization);
      const MinimizerResult m = find_minimizer(omega, op, setup.params, setup.potential, setup.minimizer);
      it.residual = m.residual;
      it.converged = m.converged;
      it.birkhoff_ok = birkhoff_check(m.u, setup.window).ok;
      const double c = static_cast<double>(omega.N) / 2.0;
      it.osc_q = oscillation(m.u, {c, setup.dim == 2 ? c : 0.0}, setup.cube_side);
      it.osc_ratio = it.osc_q / std::sqrt(1.0 + omega.norm() * omega.norm());
      it.sup_p = (m.u.p.values().array() - m.u.p.mean()).abs().maxCoeff();
      it.energy_per_cell = m.energy / std::pow(static_cast<double>(omega.N), setup.dim);
      it.minimizer = m.u;
      if (prev) {
        // u_k - u_{k-1} on the nodes of [0,1)^d, aligned by the best integer shift
        const int n = setup.points_per_period;
        std::vector<double> diff;
        for (int i1 = 0; i1 < (setup.dim == 2 ? n : 1); ++i1)
          for (int i0 = 0; i0 < n; ++i0) diff.push_back(m.u.at(i0, i1) - prev->at(i0, i1));
        const double mean = std::accumulate(diff.begin(), diff.end(), 0.0) / static_cast<double>(diff.size());
        const double shift = std::round(mean);
        double worst = 0.0;
        for (double v : diff) worst = std::max(worst, std::abs(v - shift));
        it.c0_to_previous = worst;
      }
    } catch (const std::exception& e) {
      it.error = e.what();
    }
    rep.items.push_back(std::move(it));
    prev = rep.items.back().minimizer;
  }
  std::vector<double> ratios, sups;
  for (const auto& it : rep.items)
    if (!it.error) {
      ratios.push_back(it.osc_ratio);
      sups.push_back(it.sup_p);
    }
  if (!ratios.empty()) {
    rep.osc_ratio_mean = std::accumulate(ratios.begin(), ratios.end(), 0.0) / static_cast<double>(ratios.size());
    for (double r : ratios)
      rep.osc_ratio_max_deviation = std::max(rep.osc_ratio_max_deviation, std::abs(r / rep.osc_ratio_mean - 1.0));
  }
  rep.sup_p_slope = index_slope(sups);
  return rep;
}

}  // namespace sgflow
