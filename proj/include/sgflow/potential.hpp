#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>

#include "sgflow/elliptic_operator.hpp"
#include "sgflow/error.hpp"
#include "sgflow/expression.hpp"
#include "sgflow/grid.hpp"

namespace sgflow {

/// Nonlinearity V(x, y) with its first and second y-derivatives.
class Potential {
 public:
  using Fn = std::function<double(const Point&, double)>;

  Potential(Fn v, Fn v2, Fn v22, bool periodic_in_y, std::string description,
            int smoothness = 2, std::optional<double> v22_bound = std::nullopt)
      : v_(std::make_shared<Fn>(std::move(v))),
        v2_(std::make_shared<Fn>(std::move(v2))),
        v22_(std::make_shared<Fn>(std::move(v22))),
        periodic_in_y_(periodic_in_y),
        smoothness_(smoothness),
        bound_(v22_bound),
        description_(std::move(description)) {
    if (smoothness < 2) throw Error("potentials must be at least C^2");
  }

  static Potential zero() {
    auto z = [](const Point&, double) { return 0.0; };
    return Potential(z, z, z, true, "zero", 1000);
  }

  /// eps (1 - cos 2 pi y).
  static Potential pendulum(double eps) {
    constexpr double tp = 2.0 * std::numbers::pi;
    return Potential([eps](const Point&, double y) { return eps * (1.0 - std::cos(tp * y)); },
                     [eps](const Point&, double y) { return eps * tp * std::sin(tp * y); },
                     [eps](const Point&, double y) { return eps * tp * tp * std::cos(tp * y); },
                     true, "pendulum:" + format(eps), 1000);
  }

  /// eps cos(2 pi y) g(x) with g 1-periodic.
  static Potential modulated(double eps, std::function<double(const Point&)> g,
                             std::string g_text) {
    constexpr double tp = 2.0 * std::numbers::pi;
    auto gp = std::make_shared<std::function<double(const Point&)>>(std::move(g));
    return Potential(
        [eps, gp](const Point& x, double y) { return eps * std::cos(tp * y) * (*gp)(x); },
        [eps, gp](const Point& x, double y) { return -eps * tp * std::sin(tp * y) * (*gp)(x); },
        [eps, gp](const Point& x, double y) {
          return -eps * tp * tp * std::cos(tp * y) * (*gp)(x);
        },
        true, "modulated:" + format(eps) + "," + g_text, 1000);
  }

  /// Parse "zero" | "pendulum:<eps>" | "modulated:<eps>,<g(x)>" |
  /// "expr:<V>,<V2>,<V22>". Expression potentials see x (= x1), x2 and y and
  /// are treated as y-periodic only when `periodic_in_y` is set.
  static Potential parse(const std::string& spec, bool periodic_in_y = true,
                         std::optional<double> v22_bound = std::nullopt) {
    if (spec == "zero") return zero();
    if (spec.rfind("pendulum:", 0) == 0) return pendulum(std::stod(spec.substr(9)));
    if (spec.rfind("modulated:", 0) == 0) {
      const std::string rest = spec.substr(10);
      const auto comma = rest.find(',');
      if (comma == std::string::npos) throw ConfigError("modulated potential needs eps,g(x)");
      const double eps = std::stod(rest.substr(0, comma));
      const std::string gtext = split_trimmed(rest.substr(comma + 1), '\n').front();
      auto g = Expression::compile(gtext, {"x", "x2"});
      return modulated(
          eps, [g](const Point& x) { return g(std::span<const double>(x.data(), 2)); }, gtext);
    }
    if (spec.rfind("expr:", 0) == 0) {
      const auto parts = split_trimmed(spec.substr(5), ',');
      if (parts.size() != 3) throw ConfigError("expr potential needs V,V2,V22");
      const std::vector<std::string> vars{"x", "x2", "y"};
      std::array<Fn, 3> fns;
      for (std::size_t i = 0; i < 3; ++i) {
        auto e = Expression::compile(parts[i], vars);
        fns[i] = [e](const Point& x, double y) {
          const double args[3] = {x[0], x[1], y};
          return e(std::span<const double>(args, 3));
        };
      }
      return Potential(fns[0], fns[1], fns[2], periodic_in_y, spec, 2, v22_bound);
    }
    throw ConfigError("unknown potential spec '" + spec + "'");
  }

  double value(const Point& x, double y) const { return (*v_)(x, y); }
  double d2(const Point& x, double y) const { return (*v2_)(x, y); }
  double d22(const Point& x, double y) const { return (*v22_)(x, y); }

  bool periodic_in_y() const noexcept { return periodic_in_y_; }
  int smoothness() const noexcept { return smoothness_; }
  std::optional<double> declared_v22_bound() const noexcept { return bound_; }
  const std::string& description() const noexcept { return description_; }
  bool is_zero() const noexcept { return description_ == "zero"; }

 private:
  static std::string format(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
  }

  std::shared_ptr<const Fn> v_, v2_, v22_;
  bool periodic_in_y_;
  int smoothness_;
  std::optional<double> bound_;
  std::string description_;
};

/// sup |V_22| over the periodicity cell [0,1]^d x [0,1]: tensor sampling with
/// `grid_samples` points per axis followed by a coordinate-wise golden-section
/// polish around the best sample. Potentials that are not y-periodic must
/// carry a declared bound, which is returned as is.
inline double sup_v22(const Potential& v, int dim, int grid_samples = 64) {
  if (!v.periodic_in_y()) {
    if (auto b = v.declared_v22_bound()) return *b;
    throw Error("sup |V22| is not computable for a potential that is not y-periodic; "
                "declare a bound");
  }
  if (grid_samples < 2) throw Error("sup_v22 needs at least 2 samples per axis");
  const int s = grid_samples;
  const double step = 1.0 / s;
  auto f = [&](const std::array<double, 3>& z) {
    return std::abs(v.d22({z[0], z[1]}, z[2]));
  };
  std::array<double, 3> best{0.0, 0.0, 0.0};
  double best_val = -1.0;
  const int nx1 = dim == 2 ? s : 1;
  for (int i1 = 0; i1 < nx1; ++i1)
    for (int i0 = 0; i0 < s; ++i0)
      for (int iy = 0; iy < s; ++iy) {
        const std::array<double, 3> z{i0 * step, i1 * step, iy * step};
        const double val = f(z);
        if (val > best_val) {
          best_val = val;
          best = z;
        }
      }
  // golden-section maximization along each coordinate in turn
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  const std::array<int, 3> axes{0, 1, 2};
  for (int sweep = 0; sweep < 3; ++sweep) {
    for (int ax : axes) {
      if (ax == 1 && dim == 1) continue;
      auto g = [&](double c) {
        auto z = best;
        z[static_cast<std::size_t>(ax)] = c;
        return f(z);
      };
      double lo = best[static_cast<std::size_t>(ax)] - step;
      double hi = best[static_cast<std::size_t>(ax)] + step;
      double c = hi - invphi * (hi - lo), d = lo + invphi * (hi - lo);
      double fc = g(c), fd = g(d);
      for (int it = 0; it < 80; ++it) {
        if (fc > fd) {
          hi = d; d = c; fd = fc;
          c = hi - invphi * (hi - lo); fc = g(c);
        } else {
          lo = c; c = d; fc = fd;
          d = lo + invphi * (hi - lo); fd = g(d);
        }
      }
      const double cand = 0.5 * (lo + hi);
      const double val = g(cand);
      if (val > best_val) {
        best_val = val;
        best[static_cast<std::size_t>(ax)] = cand;
      }
    }
  }
  return best_val;
}

/// gamma chosen automatically: 1.1 sup|V22| + 0.1.
inline double auto_gamma(const Potential& v, int dim) { return 1.1 * sup_v22(v, dim) + 0.1; }

/// gamma, beta and time-stepping controls for the Sobolev flow.
struct FlowParams {
  double gamma = 1.0;
  double beta = 0.5;
  double dt = 1e-2;
  double t_end = 5.0;
  double tol_residual = 1e-8;
  int max_picard = 4;

  double lambda() const noexcept { return 1.0 - beta; }

  void validate() const {
    if (!(gamma > 0.0)) throw Error("gamma must be positive");
    if (!(beta > 0.0 && beta < 1.0)) throw Error("beta must lie in (0,1)");
    if (!(dt > 0.0)) throw Error("dt must be positive");
  }
};

/// Pointwise map y -> gamma y - V2(x, offset + y) on every node, the argument
/// of (gamma + A)^{-beta} in X. `offset` carries a non-periodic part (the
/// tilt) and may be empty.
inline Eigen::VectorXd monotone_source(const Field& u, const Potential& v, double gamma,
                                       const Eigen::VectorXd* offset = nullptr) {
  const Grid& g = u.grid();
  Eigen::VectorXd out(static_cast<Eigen::Index>(g.size()));
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    if (g.is_boundary(i)) {
      out[k] = 0.0;
      continue;
    }
    const double y = u[i] + (offset ? (*offset)[k] : 0.0);
    out[k] = gamma * u[i] - v.d2(g.position(i), y);
  }
  return out;
}

/// X(u) = (gamma + A)^{-beta} (gamma u - V2(x, u)).
inline Field x_apply(const EllipticOperator& op, const FlowParams& params, const Field& u,
                     const Potential& v) {
  params.validate();
  const Field src(u.grid(), monotone_source(u, v, params.gamma));
  return frac_power_apply(op, params.gamma, -params.beta, src);
}

struct LInfinityReport {
  double x_norm = 0.0;         // ||X(u)||_inf
  double x_bound = 0.0;        // gamma^lambda ||u||_inf + gamma^{-beta} ||V2||_inf
  double x_margin = 0.0;       // bound - norm
  double semigroup_margin = 0.0;  // min over sampled t of bound - ||e^{tL}u||_inf
  bool ok = false;
};

/// Check ||X(u)|| <= gamma^lambda ||u|| + gamma^{-beta} ||V2|| and
/// ||e^{tL} u|| <= e^{-gamma^lambda t} ||u|| in the sup norm (slack 1e-9).
/// ||V2||_inf is taken over the nodes at the values u takes there.
inline LInfinityReport l_infinity_bound_check(const EllipticOperator& op, const Field& u,
                                              const FlowParams& params, const Potential& v,
                                              std::span<const double> times = {}) {
  params.validate();
  LInfinityReport r;
  const Grid& g = u.grid();
  double v2_sup = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!g.is_boundary(i)) v2_sup = std::max(v2_sup, std::abs(v.d2(g.position(i), u[i])));
  const double lam = params.lambda();
  r.x_norm = x_apply(op, params, u, v).max_abs();
  r.x_bound = std::pow(params.gamma, lam) * u.max_abs() + std::pow(params.gamma, -params.beta) * v2_sup;
  r.x_margin = r.x_bound - r.x_norm;
  static constexpr double kDefaultTimes[] = {0.0, 0.01, 0.1, 0.5, 1.0, 5.0};
  if (times.empty()) times = kDefaultTimes;
  r.semigroup_margin = std::numeric_limits<double>::infinity();
  for (double t : times) {
    const double norm = semigroup_apply(op, params.gamma, lam, t, u).max_abs();
    const double bound = std::exp(-std::pow(params.gamma, lam) * t) * u.max_abs();
    r.semigroup_margin = std::min(r.semigroup_margin, bound - norm);
  }
  r.ok = r.x_margin >= -1e-9 && r.semigroup_margin >= -1e-9;
  return r;
}

}  // namespace sgflow
