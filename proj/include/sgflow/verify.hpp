#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sgflow/elliptic_operator.hpp"
#include "sgflow/error.hpp"
#include "sgflow/grid.hpp"
#include "sgflow/quadrature.hpp"
#include "sgflow/random.hpp"

namespace sgflow {

struct Check {
  std::string suite;
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct VerifyReport {
  std::vector<Check> checks;

  bool ok() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
  }
  std::size_t failures() const {
    return static_cast<std::size_t>(std::count_if(checks.begin(), checks.end(), [](const Check& c) { return !c.pass; }));
  }
  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["ok"] = ok();
    j["checks_run"] = checks.size();
    j["failures"] = failures();
    j["checks"] = nlohmann::ordered_json::array();
    for (const auto& c : checks)
      j["checks"].push_back({{"suite", c.suite}, {"name", c.name}, {"error", c.error}, {"tolerance", c.tolerance},
                             {"pass", c.pass}});
    return j;
  }
};

struct VerifySettings {
  double gamma = 1.0;
  double beta = 0.5;
  std::uint64_t seed = 1;
  int fields = 5;                           // random fields per quadrature check
  std::optional<double> tolerance;          // replaces every per-check tolerance
};

inline const std::vector<std::string>& verify_suites() {
  static const std::vector<std::string> names{"identities",   "balakrishnan", "gamma_function", "subordination",
                                              "heat_kernel",  "smoothing",    "positivity"};
  return names;
}

namespace detail {

inline double rel_error(const Field& a, const Field& b) {
  return (a - b).max_abs() / std::max(1.0, b.max_abs());
}

class CheckSink {
 public:
  CheckSink(VerifyReport& r, std::string suite, std::optional<double> override_tol)
      : r_(r), suite_(std::move(suite)), override_(override_tol) {}
  void add(const std::string& name, double error, double tolerance) {
    const double tol = override_ ? *override_ : tolerance;
    r_.checks.push_back({suite_, name, error, tol, std::isfinite(error) && error <= tol});
  }

 private:
  VerifyReport& r_;
  std::string suite_;
  std::optional<double> override_;
};

inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

inline void suite_identities(const EllipticOperator& op, const VerifySettings& s, Rng& rng, CheckSink& out) {
  const double g = s.gamma;
  const double pairs[][2] = {{-0.75, 0.4}, {0.3, 0.5}, {-0.5, -0.25}, {1.0, -1.0}};
  for (const auto& sr : pairs) {
    const Field u = random_uniform(op.grid(), rng);
    const Field lhs = frac_power_apply(op, g, sr[0], frac_power_apply(op, g, sr[1], u));
    const Field rhs = frac_power_apply(op, g, sr[0] + sr[1], u);
    out.add("power_law s=" + fmt(sr[0]) + " r=" + fmt(sr[1]), rel_error(lhs, rhs), 1e-10);
  }
  const double lam = 1.0 - s.beta;
  for (const auto& ts : {std::pair{0.01, 0.02}, std::pair{0.3, 0.7}}) {
    const Field u = random_uniform(op.grid(), rng);
    const Field a = semigroup_apply(op, g, lam, ts.first, semigroup_apply(op, g, lam, ts.second, u));
    const Field b = semigroup_apply(op, g, lam, ts.first + ts.second, u);
    out.add("semigroup_law t=" + fmt(ts.first) + "+" + fmt(ts.second), (a - b).max_abs(), 1e-10);
  }
  if (op.grid().periodic()) {
    const Field c = Field::constant(op.grid(), 0.7);
    for (double sp : {-s.beta, -1.0, lam}) {
      const Field r = frac_power_apply(op, g, sp, c);
      out.add("constants s=" + fmt(sp), (r - c * std::pow(g, sp)).max_abs(), 1e-12);
    }
  }
  const Field u = random_uniform(op.grid(), rng), v = random_uniform(op.grid(), rng);
  const double l2 = inner_l2(u, v);
  const SpectralCoeffs cu = to_spectral(u, op.spectrum()), cv = to_spectral(v, op.spectrum());
  out.add("parseval", std::abs(cu.values.dot(cv.values) - l2), 1e-10);
  out.add("hs_zero_is_l2", std::abs(inner_hs(u, v, op, g, 0.0) - l2), 1e-12);
  out.add("hs_symmetric", std::abs(inner_hs(u, v, op, g, 0.6) - inner_hs(v, u, op, g, 0.6)), 1e-12);
}

inline void suite_fractional(const EllipticOperator& op, const VerifySettings& s, Rng& rng, CheckSink& out,
                             bool resolvent) {
  for (double beta : {0.25, 0.5, 0.75}) {
    double worst = 0.0;
    for (int k = 0; k < s.fields; ++k) {
      const Field u = random_uniform(op.grid(), rng);
      const Field exact = frac_power_apply(op, s.gamma, -beta, u);
      const Field q = resolvent ? balakrishnan_apply(op, s.gamma, beta, u).value
                                : gamma_function_apply(op, s.gamma, beta, u).value;
      worst = std::max(worst, (q - exact).max_abs() / exact.max_abs());
    }
    out.add("beta=" + fmt(beta), worst, 1e-6);
  }
}

inline void suite_subordination(const EllipticOperator& op, const VerifySettings& s, Rng& rng, CheckSink& out) {
  for (double t : {0.05, 0.5, 2.0}) {
    out.add("mass t=" + fmt(t), std::abs(subordination_mass(t, s.gamma) - 1.0), 1e-8);
    const Field u = random_uniform(op.grid(), rng);
    const Field q = subordination_apply(op, s.gamma, t, u).value;
    const Field exact = semigroup_apply(op, s.gamma, 0.5, t, u);
    out.add("half_power t=" + fmt(t), (q - exact).max_abs() / exact.max_abs(), 1e-6);
  }
}

inline void suite_heat_kernel(const Grid& base, Rng& rng, CheckSink& out) {
  // its own periodic grid: the kernel route needs A = -Laplacian on a torus
  const Grid g(base.dim(), base.period(), base.points_per_period());
  const EllipticOperator fourier(g, CoefficientField::identity(g.dim()), 1.0, Discretization::FourierSymbol);
  const double n = g.points_per_period();
  // periodized-kernel aliasing is below exp(-pi^2 n^2 t)
  const double t0 = std::max(0.02, 2.5 / (n * n));
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.size()));
  delta[std::min<Eigen::Index>(3, delta.size() - 1)] = 1.0 / g.cell_volume();
  const Field d(g, delta);
  for (double t : {t0, 5 * t0}) {
    const Field fr = semigroup_apply(fourier, 0.0, 1.0, t, d);
    out.add("delta t=" + fmt(t), (heat_kernel_apply(g, t, d) - fr).max_abs() / std::max(1.0, fr.max_abs()), 1e-8);
    const Field u = random_band_limited(fourier, rng, 1.0);
    out.add("smooth t=" + fmt(t), (heat_kernel_apply(g, t, u) - semigroup_apply(fourier, 0.0, 1.0, t, u)).max_abs(),
            1e-8);
  }
}

inline void suite_smoothing(const EllipticOperator& op, const VerifySettings& s, CheckSink& out) {
  const double lam = 1.0 - s.beta;
  for (int n : {1, 2, 3})
    for (double t : {0.1, 1.0}) {
      double worst = 0.0;
      for (Eigen::Index i = 0; i < op.effective_eigenvalues().size(); ++i) {
        const double b = s.gamma + op.effective_eigenvalues()[i];
        worst = std::max(worst, std::pow(b, n * lam) * std::exp(-t * std::pow(b, lam)));
      }
      const double bound = std::pow(n / (std::sqrt(2.0) * t), n);
      out.add("n=" + std::to_string(n) + " t=" + fmt(t), std::max(0.0, worst - bound), 0.0);
    }
}

inline void suite_positivity(const EllipticOperator& op, const VerifySettings& s, Rng& rng, CheckSink& out) {
  // the spectral Fourier route is not order preserving; use the FD form
  const EllipticOperator fd = op.discretization() == Discretization::FiniteDifference
                                  ? op
                                  : EllipticOperator(op.grid(), op.coeffs(), op.base_power());
  for (double lam : {1.0, 1.0 - s.beta}) {
    double worst = 0.0;
    for (int k = 0; k < 5; ++k) {
      const Field u = random_uniform(fd.grid(), rng, 0.0, 1.0);
      for (double t : {0.05, 0.2, 1.0}) worst = std::max(worst, -semigroup_apply(fd, s.gamma, lam, t, u).min());
    }
    out.add("semigroup lambda=" + fmt(lam), std::max(0.0, worst), 1e-9);
  }
}

}  // namespace detail

/// Run the named suites (all when `only` is empty) on `op`.
inline VerifyReport run_verify(const EllipticOperator& op, const VerifySettings& s,
                               const std::vector<std::string>& only = {}) {
  for (const auto& name : only)
    if (std::find(verify_suites().begin(), verify_suites().end(), name) == verify_suites().end())
      throw ConfigError("unknown verify suite '" + name + "'");
  VerifyReport r;
  std::uint64_t index = 0;
  for (const auto& name : verify_suites()) {
    ++index;
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    Rng rng(s.seed * 1000003ULL + index);  // independent of which suites run
    detail::CheckSink out(r, name, s.tolerance);
    if (name == "identities") detail::suite_identities(op, s, rng, out);
    else if (name == "balakrishnan") detail::suite_fractional(op, s, rng, out, true);
    else if (name == "gamma_function") detail::suite_fractional(op, s, rng, out, false);
    else if (name == "subordination") detail::suite_subordination(op, s, rng, out);
    else if (name == "heat_kernel") detail::suite_heat_kernel(op.grid(), rng, out);
    else if (name == "smoothing") detail::suite_smoothing(op, s, out);
    else if (name == "positivity") detail::suite_positivity(op, s, rng, out);
  }
  return r;
}

}  // namespace sgflow
