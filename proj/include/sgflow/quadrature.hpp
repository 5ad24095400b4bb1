#pragma once

// Quadrature oracles for operator functions. Each one evaluates a classical
// integral representation mode by mode in the eigenbasis and is meant as an
// independent check on the closed-form spectral calculus, not as the
// production path.
//
// All integrals over (0, inf) are taken in the logarithmic variable
// sigma = ln t on [ln a, ln b] with equal-width Gauss-Legendre panels; the
// window is widened to cover the spectrum and the pieces outside it are
// added from convergent series or closed forms.

#include <boost/math/quadrature/gauss.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "sgflow/elliptic_operator.hpp"
#include "sgflow/error.hpp"
#include "sgflow/grid.hpp"

namespace sgflow {

struct QuadratureSpec {
  int nodes = 400;  // total nodes; always a multiple of 20
  double tau_min = 1e-8;
  double tau_max = 1e4;
  double tolerance = 1e-6;
  int max_doublings = 3;
};

struct QuadratureResult {
  Field value;
  double estimated_error;  // max relative change of the mode multipliers on the last doubling
  int nodes_used;
};

namespace detail {

inline constexpr int kPanelNodes = 20;

/// Nodes (in t) and weights (including the Jacobian dt = t dsigma) of a
/// log-panel Gauss-Legendre rule on [a, b].
struct LogRule {
  std::vector<double> t;
  std::vector<double> w;
};

inline LogRule log_rule(double a, double b, int nodes) {
  using GL = boost::math::quadrature::gauss<double, kPanelNodes>;
  const auto& x = GL::abscissa();
  const auto& wx = GL::weights();
  const int panels = std::max(1, nodes / kPanelNodes);
  const double la = std::log(a);
  const double width = (std::log(b) - la) / panels;
  LogRule r;
  r.t.reserve(static_cast<std::size_t>(panels * kPanelNodes));
  r.w.reserve(r.t.capacity());
  for (int p = 0; p < panels; ++p) {
    const double mid = la + (p + 0.5) * width;
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (double sign : {-1.0, 1.0}) {
        const double sigma = mid + sign * 0.5 * width * x[i];
        const double t = std::exp(sigma);
        r.t.push_back(t);
        r.w.push_back(0.5 * width * wx[i] * t);
      }
    }
  }
  return r;
}

/// Evaluate mode multipliers with the rule at `nodes`, doubling until two
/// successive results agree to the tolerance.
template <typename Multipliers>
std::pair<Eigen::VectorXd, double> converge(const QuadratureSpec& q, Multipliers&& eval,
                                            int& nodes_used) {
  int nodes = std::max(detail::kPanelNodes, q.nodes / detail::kPanelNodes * detail::kPanelNodes);
  Eigen::VectorXd prev = eval(nodes);
  double err = 0.0;
  for (int k = 0; k <= q.max_doublings; ++k) {
    nodes *= 2;
    Eigen::VectorXd next = eval(nodes);
    err = 0.0;
    for (Eigen::Index i = 0; i < next.size(); ++i)
      err = std::max(err, std::abs(next[i] - prev[i]) / std::max(std::abs(next[i]), 1e-300));
    prev = std::move(next);
    if (err <= q.tolerance) {
      nodes_used = nodes;
      return {prev, err};
    }
  }
  throw QuadratureError("quadrature did not converge: estimated error " + std::to_string(err) +
                        " > tolerance " + std::to_string(q.tolerance));
}

inline Eigen::VectorXd shifted_spectrum(const EllipticOperator& op, double gamma) {
  return (op.effective_eigenvalues().array() + gamma).matrix();
}

inline QuadratureResult apply_multipliers(const EllipticOperator& op, const Field& u,
                                          const Eigen::VectorXd& mult, double err, int nodes) {
  SpectralCoeffs c = to_spectral(u, op.spectrum());
  c.values.array() *= mult.array();
  return {to_physical(c, op.spectrum()), err, nodes};
}

}  // namespace detail

/// (gamma + A)^{-beta} u from the resolvent integral
///   sin(pi beta)/pi * int_0^inf t^{-beta} (t + gamma + A)^{-1} u dt.
inline QuadratureResult balakrishnan_apply(const EllipticOperator& op, double gamma, double beta,
                                           const Field& u, const QuadratureSpec& q = {}) {
  if (!(gamma > 0.0)) throw Error("balakrishnan_apply needs gamma > 0");
  if (!(beta > 0.0 && beta < 1.0)) throw Error("balakrishnan_apply needs beta in (0,1)");
  const Eigen::VectorXd lam = detail::shifted_spectrum(op, gamma);
  const double lo = lam.minCoeff();
  const double hi = lam.maxCoeff();
  const double a = std::min(q.tau_min, 1e-6 * lo);
  const double b = std::max(q.tau_max, 1e6 * hi);
  const double c = std::sin(std::numbers::pi * beta) / std::numbers::pi;

  auto tails = [&](double L) {
    // int_0^a t^{-beta}/(t+L) and int_b^inf t^{-beta}/(t+L) as power series
    double low = 0.0, high = 0.0;
    double r = a / L, term_scale = std::pow(a, 1.0 - beta) / L, pw = 1.0;
    for (int k = 0; k < 60; ++k) {
      const double term = pw * term_scale / (k + 1.0 - beta);
      low += (k % 2 ? -term : term);
      if (std::abs(term) < 1e-18 * std::abs(low)) break;
      pw *= r;
    }
    r = L / b;
    pw = 1.0;
    const double bb = std::pow(b, -beta);
    for (int k = 0; k < 60; ++k) {
      const double term = pw * bb / (beta + k);
      high += (k % 2 ? -term : term);
      if (std::abs(term) < 1e-18 * std::abs(high)) break;
      pw *= r;
    }
    return low + high;
  };

  auto eval = [&](int nodes) {
    const auto rule = detail::log_rule(a, b, nodes);
    Eigen::VectorXd m(lam.size());
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
      const double L = lam[i];
      double s = 0.0;
      for (std::size_t k = 0; k < rule.t.size(); ++k)
        s += rule.w[k] * std::pow(rule.t[k], -beta) / (rule.t[k] + L);
      m[i] = c * (s + tails(L));
    }
    return m;
  };
  int used = 0;
  auto [mult, err] = detail::converge(q, eval, used);
  return detail::apply_multipliers(op, u, mult, err, used);
}

/// (gamma + A)^{-beta} u from the semigroup integral
///   1/Gamma(beta) * int_0^inf t^{beta-1} e^{-t(gamma + A)} u dt.
inline QuadratureResult gamma_function_apply(const EllipticOperator& op, double gamma, double beta,
                                             const Field& u, const QuadratureSpec& q = {}) {
  if (!(gamma > 0.0)) throw Error("gamma_function_apply needs gamma > 0");
  if (!(beta > 0.0 && beta < 1.0)) throw Error("gamma_function_apply needs beta in (0,1)");
  const Eigen::VectorXd lam = detail::shifted_spectrum(op, gamma);
  const double lo = lam.minCoeff();
  const double hi = lam.maxCoeff();
  const double a = std::min(q.tau_min, 1e-6 / hi);
  const double b = std::max(60.0 / lo, 1.0);  // e^{-60} beyond
  const double inv_gamma = 1.0 / std::tgamma(beta);

  auto lower_tail = [&](double L) {
    double s = 0.0, pw = std::pow(a, beta), fact = 1.0;
    for (int k = 0; k < 60; ++k) {
      const double term = pw / (fact * (k + beta));
      s += (k % 2 ? -term : term);
      if (std::abs(term) < 1e-18 * std::abs(s)) break;
      pw *= L * a;
      fact *= (k + 1.0);
    }
    return s;
  };

  auto eval = [&](int nodes) {
    const auto rule = detail::log_rule(a, b, nodes);
    Eigen::VectorXd m(lam.size());
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
      const double L = lam[i];
      double s = 0.0;
      for (std::size_t k = 0; k < rule.t.size(); ++k)
        s += rule.w[k] * std::pow(rule.t[k], beta - 1.0) * std::exp(-rule.t[k] * L);
      m[i] = inv_gamma * (s + lower_tail(L));
    }
    return m;
  };
  int used = 0;
  auto [mult, err] = detail::converge(q, eval, used);
  return detail::apply_multipliers(op, u, mult, err, used);
}

/// One-sided stable density of index 1/2:
///   phi_t(tau) = t / (2 sqrt(pi)) tau^{-3/2} exp(-t^2 / (4 tau)).
inline double stable_density_half(double t, double tau) {
  if (tau <= 0.0) return 0.0;
  return t / (2.0 * std::sqrt(std::numbers::pi)) * std::pow(tau, -1.5) *
         std::exp(-t * t / (4.0 * tau));
}

/// e^{-t (gamma + A)^{1/2}} u by Bochner subordination,
///   int_0^inf e^{-tau (gamma + A)} u phi_t(tau) dtau.
/// Checks that the density is nonnegative at every node and that its total
/// mass is one to 1e-8.
inline QuadratureResult subordination_apply(const EllipticOperator& op, double gamma, double t,
                                            const Field& u, const QuadratureSpec& q = {}) {
  if (!(t > 0.0)) throw Error("subordination_apply needs t > 0");
  if (!(gamma > 0.0)) throw Error("subordination_apply needs gamma > 0");
  const Eigen::VectorXd lam = detail::shifted_spectrum(op, gamma);
  const double lo = lam.minCoeff();
  const double a = t * t / 240.0;  // phi < e^{-60} tau^{-3/2} below
  const double b = std::max(60.0 / lo, 10.0 * a);

  auto eval = [&](int nodes) {
    const auto rule = detail::log_rule(a, b, nodes);
    std::vector<double> phi(rule.t.size());
    double mass = 0.0;
    for (std::size_t k = 0; k < rule.t.size(); ++k) {
      phi[k] = stable_density_half(t, rule.t[k]);
      if (!(phi[k] >= 0.0)) throw QuadratureError("negative subordination density");
      mass += rule.w[k] * phi[k];
    }
    mass += std::erf(t / (2.0 * std::sqrt(b)));  // exact mass beyond b
    if (std::abs(mass - 1.0) > 1e-8)
      throw QuadratureError("subordination density mass " + std::to_string(mass) + " != 1");
    Eigen::VectorXd m(lam.size());
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < rule.t.size(); ++k)
        s += rule.w[k] * phi[k] * std::exp(-rule.t[k] * lam[i]);
      m[i] = s;
    }
    return m;
  };
  int used = 0;
  auto [mult, err] = detail::converge(q, eval, used);
  return detail::apply_multipliers(op, u, mult, err, used);
}

/// Mass of phi_t on (0, inf) computed with the same rule as
/// subordination_apply (quadrature on the window plus the closed-form tail).
inline double subordination_mass(double t, double gamma, const QuadratureSpec& q = {}) {
  const double a = t * t / 240.0;
  const double b = std::max(60.0 / gamma, 10.0 * a);
  const auto rule = detail::log_rule(a, b, q.nodes);
  double mass = 0.0;
  for (std::size_t k = 0; k < rule.t.size(); ++k)
    mass += rule.w[k] * stable_density_half(t, rule.t[k]);
  return mass + std::erf(t / (2.0 * std::sqrt(b)));
}

/// e^{t Delta} u on a periodic grid by convolution with the periodized heat
/// kernel (4 pi t)^{-d/2} sum_k exp(-|x + kN|^2 / 4t). The kernel is
/// separable, so the convolution is applied one axis at a time. Lattice sums
/// stop once a term falls below 1e-14.
inline Field heat_kernel_apply(const Grid& grid, double t, const Field& u) {
  if (!(t > 0.0)) throw Error("heat_kernel_apply needs t > 0");
  if (!grid.periodic()) throw Error("heat_kernel_apply needs a periodic grid");
  if (!(u.grid() == grid)) throw GridMismatchError("field and grid differ");
  const int M = grid.axis_nodes();
  const double h = grid.spacing();
  const double N = grid.period();
  const double pref = 1.0 / std::sqrt(4.0 * std::numbers::pi * t);

  std::vector<double> kernel(static_cast<std::size_t>(M));
  for (int r = 0; r < M; ++r) {
    const double x = r * h;
    double s = pref * std::exp(-x * x / (4.0 * t));
    for (int k = 1;; ++k) {
      const double xp = x + k * N, xm = x - k * N;
      const double tp = pref * std::exp(-xp * xp / (4.0 * t));
      const double tm = pref * std::exp(-xm * xm / (4.0 * t));
      s += tp + tm;
      if (tp < 1e-14 && tm < 1e-14) break;
    }
    kernel[static_cast<std::size_t>(r)] = s;
  }

  Eigen::VectorXd v = u.values();
  for (int axis = 0; axis < grid.dim(); ++axis) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(v.size());
    for (std::size_t p = 0; p < grid.size(); ++p) {
      const auto ip = grid.multi_index(p);
      double acc = 0.0;
      for (int q = 0; q < M; ++q) {
        auto iq = ip;
        iq[static_cast<std::size_t>(axis)] = q;
        const int r = ((ip[static_cast<std::size_t>(axis)] - q) % M + M) % M;
        acc += kernel[static_cast<std::size_t>(r)] * v[static_cast<Eigen::Index>(grid.flat(iq[0], iq[1]))];
      }
      out[static_cast<Eigen::Index>(p)] = h * acc;
    }
    v = std::move(out);
  }
  return Field(grid, std::move(v));
}

}  // namespace sgflow
