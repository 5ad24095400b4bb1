#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sgflow/elliptic_operator.hpp"
#include "sgflow/error.hpp"
#include "sgflow/grid.hpp"
#include "sgflow/potential.hpp"
#include "sgflow/spectral.hpp"

namespace sgflow {

/// Time integrator for du/dt = L u + X(u).
struct StepScheme {
  enum class Kind { ETD1, Picard, ReferenceFine };
  Kind kind = Kind::ETD1;
  int picard_iterations = 4;

  static StepScheme etd1() { return {}; }
  static StepScheme picard(int j) {
    if (j < 1) throw Error("Picard scheme needs j >= 1");
    return {Kind::Picard, j};
  }
  static StepScheme reference() { return {Kind::ReferenceFine, 0}; }

  /// "etd1" | "picard:<j>" | "reference".
  static StepScheme parse(const std::string& s) {
    if (s == "etd1") return etd1();
    if (s == "reference") return reference();
    if (s.rfind("picard:", 0) == 0) return picard(std::stoi(s.substr(7)));
    throw ConfigError("unknown scheme '" + s + "'");
  }
  std::string name() const {
    switch (kind) {
      case Kind::ETD1: return "etd1";
      case Kind::Picard: return "picard:" + std::to_string(picard_iterations);
      case Kind::ReferenceFine: return "reference";
    }
    return {};
  }
};

/// Raised when a trajectory produces a non-finite state or a Picard iterate
/// blows up. Carries the last finite state.
class FlowError : public Error {
 public:
  FlowError(const std::string& what, Field last_good, double t)
      : Error(what), last_good_(std::move(last_good)), t_(t) {}
  const Field& last_good() const noexcept { return last_good_; }
  double time() const noexcept { return t_; }

 private:
  Field last_good_;
  double t_;
};

/// The Sobolev gradient flow
///   du/dt = -(gamma + A)^{1-beta} u + (gamma + A)^{-beta} (gamma u - V2(x, u))
/// for a fixed operator, potential and parameters.
///
/// With a nonzero tilt omega the unknown is the periodic part p of
/// u = omega.x + p; the linear part enters through the forcing -div(a omega)
/// and through the argument of V2.
class FlowProblem {
 public:
  FlowProblem(EllipticOperator op, FlowParams params, Potential potential,
              std::array<double, 2> tilt = {0.0, 0.0})
      : op_(std::move(op)), params_(params), potential_(std::move(potential)), tilt_(tilt) {
    params_.validate();
    const Grid& g = op_.grid();
    tilted_ = tilt[0] != 0.0 || tilt[1] != 0.0;
    if (tilted_) {
      if (!g.periodic()) throw Error("tilted flows need a periodic grid");
      if (op_.base_power() != 1.0) throw Error("tilted flows need base power 1");
      offset_.resize(static_cast<Eigen::Index>(g.size()));
      for (std::size_t i = 0; i < g.size(); ++i) {
        const Point x = g.position(i);
        offset_[static_cast<Eigen::Index>(i)] = tilt[0] * x[0] + tilt[1] * x[1];
      }
      forcing_ = op_.tilt_forcing(tilt);
    } else {
      forcing_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.size()));
    }
    const auto& nu = op_.effective_eigenvalues();
    smoothing_ = (nu.array() + params_.gamma).pow(-params_.beta).matrix();
    generator_ = (nu.array() + params_.gamma).pow(params_.lambda()).matrix();
  }

  const EllipticOperator& op() const noexcept { return op_; }
  const FlowParams& params() const noexcept { return params_; }
  const Potential& potential() const noexcept { return potential_; }
  const Grid& grid() const noexcept { return op_.grid(); }
  const std::array<double, 2>& tilt() const noexcept { return tilt_; }
  bool tilted() const noexcept { return tilted_; }
  /// omega.x at every node (empty when untilted).
  const Eigen::VectorXd& offset() const noexcept { return offset_; }
  const Eigen::VectorXd& forcing() const noexcept { return forcing_; }
  /// (gamma + nu_i)^{-beta} and (gamma + nu_i)^{lambda} per mode.
  const Eigen::VectorXd& smoothing_factors() const noexcept { return smoothing_; }
  const Eigen::VectorXd& generator_factors() const noexcept { return generator_; }

  /// gamma u - g_omega - V2(x, omega.x + u): the argument of (gamma+A)^{-beta}.
  Field source(const Field& u) const {
    Eigen::VectorXd s = monotone_source(u, potential_, params_.gamma, tilted_ ? &offset_ : nullptr);
    s -= forcing_;
    return Field(u.grid(), std::move(s));
  }

  /// A^alpha u (+ g_omega when tilted).
  Field apply_operator(const Field& u) const {
    const FluxStencil* st = op_.stencil();
    if (st && op_.base_power() == 1.0) {
      const Grid& g = u.grid();
      Eigen::VectorXd out = Eigen::VectorXd::Zero(u.values().size());
      for (int i = 0; i < g.dim(); ++i) {
        Eigen::VectorXd flux = Eigen::VectorXd::Zero(out.size());
        for (int j = 0; j < g.dim(); ++j)
          flux += st->coeff[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].cwiseProduct(
              st->grad[static_cast<std::size_t>(j)] * u.values());
        out += st->grad[static_cast<std::size_t>(i)].transpose() * flux;
      }
      for (std::size_t n = 0; n < g.size(); ++n)
        if (g.is_boundary(n)) out[static_cast<Eigen::Index>(n)] = 0.0;
      return Field(g, std::move(out));
    }
    return op_.apply(u);
  }

  /// L2 gradient A u + V2(x, u), including the tilt.
  Field l2_gradient(const Field& u) const {
    const Grid& g = u.grid();
    Eigen::VectorXd out = apply_operator(u).values() + forcing_;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g.is_boundary(i)) continue;
      const auto k = static_cast<Eigen::Index>(i);
      out[k] += potential_.d2(g.position(i), u[i] + (tilted_ ? offset_[k] : 0.0));
    }
    return Field(g, std::move(out));
  }

  double energy(const Field& u) const {
    const Grid& g = u.grid();
    double pot = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g.is_boundary(i)) continue;
      pot += potential_.value(g.position(i), u[i] + (tilted_ ? offset_[static_cast<Eigen::Index>(i)] : 0.0));
    }
    return op_.quadratic_energy(u, tilt_) + g.cell_volume() * pot;
  }

  /// ||A u + V2(x,u)||_inf.
  double residual(const Field& u) const { return l2_gradient(u).max_abs(); }

  /// (gamma + A)^{1-beta} u - (gamma + A)^{-beta}(gamma u - V2(x,u)) = -(L u + X(u)).
  Field sobolev_gradient(const Field& u) const {
    SpectralCoeffs cu = to_spectral(u, op_.spectrum());
    SpectralCoeffs cs = to_spectral(source(u), op_.spectrum());
    cu.values = generator_.cwiseProduct(cu.values) - smoothing_.cwiseProduct(cs.values);
    return to_physical(cu, op_.spectrum());
  }

 private:
  EllipticOperator op_;
  FlowParams params_;
  Potential potential_;
  std::array<double, 2> tilt_;
  bool tilted_ = false;
  Eigen::VectorXd offset_;
  Eigen::VectorXd forcing_;
  Eigen::VectorXd smoothing_;
  Eigen::VectorXd generator_;
};

inline double energy(const Field& u, const FlowProblem& p) { return p.energy(u); }
inline double residual(const Field& u, const FlowProblem& p) { return p.residual(u); }
inline Field sobolev_gradient(const Field& u, const FlowProblem& p) { return p.sobolev_gradient(u); }

/// Fixed-step integrator. Precomputes the per-mode propagators for dt.
class Integrator {
 public:
  static constexpr int kSubIntervals = 8;  // Simpson sub-nodes per Picard step
  static constexpr int kFineFactor = 32;   // ReferenceFine substeps

  Integrator(const FlowProblem& problem, StepScheme scheme, double dt)
      : problem_(&problem), scheme_(scheme), dt_(dt) {
    if (!(dt > 0.0)) throw Error("time step must be positive");
    const double h = scheme.kind == StepScheme::Kind::ReferenceFine ? dt / kFineFactor
                     : scheme.kind == StepScheme::Kind::Picard       ? dt / kSubIntervals
                                                                      : dt;
    const auto& lam = problem.generator_factors();
    const auto& p = problem.smoothing_factors();
    decay_.resize(kSubIntervals + 1);
    for (int k = 0; k <= kSubIntervals; ++k)
      decay_[static_cast<std::size_t>(k)] = (-(k * h) * lam.array()).exp().matrix();
    // phi1(h) (gamma+A)^{-beta}: exact Duhamel integral for frozen X
    etd_weight_ = (-(-h * lam.array()).unaryExpr([](double z) { return std::expm1(z); }) /
                   lam.array() * p.array())
                      .matrix();
    sub_step_ = h;
  }

  double dt() const noexcept { return dt_; }
  const StepScheme& scheme() const noexcept { return scheme_; }

  /// Advance one step of size dt. `coeffs` must hold the spectral
  /// coefficients of u on entry and is updated alongside.
  Field step(const Field& u, SpectralCoeffs& coeffs, int* picard_used = nullptr) const {
    switch (scheme_.kind) {
      case StepScheme::Kind::ETD1:
        return etd1(u, coeffs, decay_[1]);
      case StepScheme::Kind::ReferenceFine: {
        Field v = u;
        for (int k = 0; k < kFineFactor; ++k) v = etd1(v, coeffs, decay_[1]);
        return v;
      }
      case StepScheme::Kind::Picard:
        if (picard_used) *picard_used = scheme_.picard_iterations;
        return picard(u, coeffs);
    }
    return u;
  }

  Field step(const Field& u) const {
    SpectralCoeffs c = to_spectral(u, problem_->op().spectrum());
    return step(u, c);
  }

 private:
  Field etd1(const Field& u, SpectralCoeffs& c, const Eigen::VectorXd& decay) const {
    const auto& sp = problem_->op().spectrum();
    const SpectralCoeffs cs = to_spectral(problem_->source(u), sp);
    c.values = decay.cwiseProduct(c.values) + etd_weight_.cwiseProduct(cs.values);
    return to_physical(c, sp);
  }

  // Simpson-type weights for int_0^{k h} f using nodes 0..k.
  static std::vector<double> interval_weights(int k) {
    std::vector<double> w(static_cast<std::size_t>(k + 1), 0.0);
    if (k == 0) return w;
    if (k == 1) {
      w[0] = w[1] = 0.5;
      return w;
    }
    int start = 0;
    if (k % 2 == 1) {  // Simpson 3/8 on the first three intervals
      w[0] += 3.0 / 8; w[1] += 9.0 / 8; w[2] += 9.0 / 8; w[3] += 3.0 / 8;
      start = 3;
    }
    for (int i = start; i + 2 <= k; i += 2) {
      w[static_cast<std::size_t>(i)] += 1.0 / 3;
      w[static_cast<std::size_t>(i + 1)] += 4.0 / 3;
      w[static_cast<std::size_t>(i + 2)] += 1.0 / 3;
    }
    return w;
  }

  // F^{j+1}_tau = e^{tau L} u + int_0^tau e^{(tau - s) L} X(F^j_s) ds on the
  // sub-nodes tau_k = k dt / 8, iterated j times starting from F^0 = e^{tau L} u.
  Field picard(const Field& u, SpectralCoeffs& c) const {
    const auto& sp = problem_->op().spectrum();
    const auto& p = problem_->smoothing_factors();
    const int K = kSubIntervals;
    std::vector<Eigen::VectorXd> f(static_cast<std::size_t>(K + 1));
    for (int k = 0; k <= K; ++k) f[static_cast<std::size_t>(k)] = decay_[static_cast<std::size_t>(k)].cwiseProduct(c.values);
    const double scale = 1e6 * (1.0 + c.values.cwiseAbs().maxCoeff());
    std::vector<Eigen::VectorXd> x(static_cast<std::size_t>(K + 1));
    for (int j = 0; j < scheme_.picard_iterations; ++j) {
      try {
        for (int k = 0; k <= K; ++k) {
          const Field fk = to_physical({f[static_cast<std::size_t>(k)]}, sp);
          x[static_cast<std::size_t>(k)] = p.cwiseProduct(to_spectral(problem_->source(fk), sp).values);
        }
      } catch (const NonFiniteError&) {
        throw FlowError("Picard iteration diverged", u, 0.0);
      }
      for (int k = 0; k <= K; ++k) {
        Eigen::VectorXd acc = decay_[static_cast<std::size_t>(k)].cwiseProduct(c.values);
        const auto w = interval_weights(k);
        for (int l = 0; l <= k; ++l)
          acc += (sub_step_ * w[static_cast<std::size_t>(l)]) *
                 decay_[static_cast<std::size_t>(k - l)].cwiseProduct(x[static_cast<std::size_t>(l)]);
        f[static_cast<std::size_t>(k)] = std::move(acc);
      }
      if (!(f[static_cast<std::size_t>(K)].cwiseAbs().maxCoeff() <= scale))
        throw FlowError("Picard iteration diverged", u, 0.0);
    }
    c.values = f[static_cast<std::size_t>(K)];
    return to_physical(c, sp);
  }

  const FlowProblem* problem_;
  StepScheme scheme_;
  double dt_;
  double sub_step_ = 0.0;
  std::vector<Eigen::VectorXd> decay_;
  Eigen::VectorXd etd_weight_;
};

/// Single step of size dt from u.
inline Field step(const Field& u, double dt, StepScheme scheme, const FlowProblem& problem) {
  return Integrator(problem, scheme, dt).step(u);
}

struct StepDiagnostics {
  double t = 0.0;
  double energy = 0.0;
  double residual = 0.0;
  double max_norm = 0.0;
  int picard_iterations = 0;
};

struct EnergyIncrease {
  std::size_t step = 0;
  double t = 0.0;
  double increase = 0.0;
};

/// States u(t_k) at the stored times plus per-step diagnostics.
struct Trajectory {
  std::vector<double> times;
  std::vector<Field> states;
  std::vector<StepDiagnostics> diagnostics;  // every step, including t = 0
  std::vector<EnergyIncrease> energy_increases;
  bool converged = false;
  double final_time = 0.0;

  const Field& final_state() const { return states.back(); }
};

struct EvolveOptions {
  std::size_t store_every = 1;     // store every k-th state (the last is always kept)
  bool stop_on_residual = true;    // stop once residual < tol_residual
  double t_start = 0.0;            // label of the initial time
  std::function<void(double, const Field&)> on_store;  // called for each stored state
};

/// Integrate from u0 until params.t_end or until the residual drops below
/// params.tol_residual. Energy increases beyond 1e-8 (1 + |S|) are recorded,
/// not fatal.
inline Trajectory evolve(const Field& u0, StepScheme scheme, const FlowProblem& problem,
                         const EvolveOptions& opts = {}) {
  const FlowParams& prm = problem.params();
  const std::size_t every = std::max<std::size_t>(1, opts.store_every);
  Trajectory tr;
  auto diagnose = [&](double t, const Field& u, int picard) {
    return StepDiagnostics{t, problem.energy(u), problem.residual(u), u.max_abs(), picard};
  };
  auto store = [&](double t, const Field& u) {
    tr.times.push_back(t);
    tr.states.push_back(u);
    if (opts.on_store) opts.on_store(t, u);
  };

  Field u = u0;
  tr.diagnostics.push_back(diagnose(opts.t_start, u, 0));
  store(opts.t_start, u);
  if (opts.stop_on_residual && tr.diagnostics.back().residual < prm.tol_residual) {
    tr.converged = true;
    tr.final_time = opts.t_start;
    return tr;
  }

  const double span = prm.t_end;
  const auto full_steps = static_cast<std::size_t>(std::floor(span / prm.dt + 1e-9));
  const double rest = span - static_cast<double>(full_steps) * prm.dt;
  Integrator main(problem, scheme, prm.dt);
  std::optional<Integrator> last;
  if (rest > 1e-12 * prm.dt) last.emplace(problem, scheme, rest);
  const std::size_t total = full_steps + (last ? 1 : 0);

  for (std::size_t k = 1; k <= total; ++k) {
    // taken from u every step, so a run restarted from a dumped state
    // continues bit-for-bit
    SpectralCoeffs c = to_spectral(u, problem.op().spectrum());
    const Integrator& integ = (k <= full_steps) ? main : *last;
    const double t = opts.t_start + (k <= full_steps ? static_cast<double>(k) * prm.dt : span);
    int picard = 0;
    Field next = u;
    StepDiagnostics d;
    try {
      next = integ.step(u, c, &picard);
      d = diagnose(t, next, picard);
    } catch (const NonFiniteError&) {
      throw FlowError("non-finite state at t = " + std::to_string(t), u, t - integ.dt());
    } catch (const FlowError& e) {
      throw FlowError(e.what(), u, t - integ.dt());
    }
    u = std::move(next);
    const StepDiagnostics& prev = tr.diagnostics.back();
    if (d.energy > prev.energy + 1e-8 * (1.0 + std::abs(prev.energy)))
      tr.energy_increases.push_back({k, t, d.energy - prev.energy});
    tr.diagnostics.push_back(d);
    const bool done = k == total || (opts.stop_on_residual && d.residual < prm.tol_residual);
    if (done || k % every == 0) store(t, u);
    if (done) {
      tr.converged = d.residual < prm.tol_residual;
      tr.final_time = t;
      break;
    }
  }
  if (total == 0) tr.final_time = opts.t_start;
  return tr;
}

struct ComparisonViolation {
  double t = 0.0;
  std::size_t node = 0;
  double gap = 0.0;
};

struct ComparisonReport {
  double min_gap = std::numeric_limits<double>::infinity();
  double max_gap = -std::numeric_limits<double>::infinity();  // max_t max_x (u - v)
  std::vector<std::pair<double, double>> gap_curve;           // (t, min_x (u - v)) per step
  std::optional<ComparisonViolation> first_violation;
  double tolerance = 0.0;
  bool passed = false;
};

/// Evolve u0 >= v0 with the same scheme to `horizon` and track
/// min_t min_x (u - v). Passes iff the gap stays above
/// -1e-8 (1 + ||u0 - v0||_inf). Unless `exploratory`, requires
/// gamma > sup |V22|.
inline ComparisonReport check_comparison(const Field& u0, const Field& v0, StepScheme scheme,
                                         const FlowProblem& problem, double horizon,
                                         bool exploratory = false) {
  u0.check(v0);
  if ((u0.values() - v0.values()).minCoeff() < -1e-12)
    throw Error("check_comparison needs u0 >= v0");
  if (!exploratory) {
    const double bound = sup_v22(problem.potential(), problem.grid().dim());
    if (!(problem.params().gamma > bound))
      throw Error("comparison needs gamma > sup|V22| = " + std::to_string(bound));
  }
  ComparisonReport rep;
  rep.tolerance = 1e-8 * (1.0 + (u0 - v0).max_abs());
  const double dt = problem.params().dt;
  const auto steps = static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
  Integrator integ(problem, scheme, dt);
  const auto& sp = problem.op().spectrum();
  Field u = u0, v = v0;
  SpectralCoeffs cu = to_spectral(u, sp), cv = to_spectral(v, sp);
  auto record = [&](double t) {
    const Eigen::VectorXd gap = u.values() - v.values();
    Eigen::Index node = 0;
    const double g = gap.minCoeff(&node);
    rep.min_gap = std::min(rep.min_gap, g);
    rep.max_gap = std::max(rep.max_gap, gap.maxCoeff());
    rep.gap_curve.emplace_back(t, g);
    if (g < -rep.tolerance && !rep.first_violation)
      rep.first_violation = ComparisonViolation{t, static_cast<std::size_t>(node), g};
  };
  record(0.0);
  for (std::size_t k = 1; k <= steps; ++k) {
    u = integ.step(u, cu);
    v = integ.step(v, cv);
    record(static_cast<double>(k) * dt);
  }
  rep.passed = !rep.first_violation.has_value();
  return rep;
}

}  // namespace sgflow
