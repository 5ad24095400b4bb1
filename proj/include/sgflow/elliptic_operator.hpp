#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "sgflow/coefficients.hpp"
#include "sgflow/error.hpp"
#include "sgflow/grid.hpp"
#include "sgflow/spectral.hpp"

namespace sgflow {

enum class Discretization { FourierSymbol, FiniteDifference };

inline const char* to_string(Discretization d) {
  return d == Discretization::FourierSymbol ? "fourier" : "fd";
}

inline Discretization parse_discretization(const std::string& s) {
  if (s == "fourier" || s == "fourier_symbol") return Discretization::FourierSymbol;
  if (s == "fd" || s == "finite_difference") return Discretization::FiniteDifference;
  throw ConfigError("unknown discretization '" + s + "'");
}

/// Conservative finite-difference form of -div(a grad u):
///   A = sum_ij G_i^T diag(a^ij) G_j
/// with G_i the forward difference along axis i. Diagonal coefficients are
/// sampled at x + h/2 e_i, mixed ones at x + h/2 (e_i + e_j). The same data
/// evaluates the Dirichlet energy, so 1/2 <u, A u> equals the discrete
/// gradient energy exactly.
struct FluxStencil {
  std::array<Eigen::SparseMatrix<double>, 2> grad;
  std::array<std::array<Eigen::VectorXd, 2>, 2> coeff;
};

/// Discrete A = -div(a(x) grad .) on a grid, optionally raised to a base
/// power alpha in (0,1], together with its spectral decomposition.
///
/// The decomposition is computed once at construction; copies share it.
class EllipticOperator {
 public:
  EllipticOperator(Grid grid, CoefficientField coeffs, double base_power = 1.0,
                   Discretization disc = Discretization::FiniteDifference)
      : state_(std::make_shared<State>(grid, std::move(coeffs), base_power, disc)) {
    State& s = *state_;
    if (!(base_power > 0.0 && base_power <= 1.0))
      throw Error("base power alpha must lie in (0,1]");
    if (s.coeffs.dim() != grid.dim()) throw Error("coefficient and grid dimensions differ");
    build_unknowns(s);
    check_coefficients(s);
    if (disc == Discretization::FourierSymbol) {
      if (!s.coeffs.is_constant())
        throw Error("FourierSymbol discretization needs constant coefficients");
      if (!grid.periodic())
        throw Error("FourierSymbol discretization needs a periodic grid");
      build_fourier(s);
    } else {
      build_stencil(s);
      decompose_fd(s);
    }
    s.effective.resize(s.spectrum->eigenvalues().size());
    for (Eigen::Index i = 0; i < s.effective.size(); ++i) {
      const double mu = std::max(0.0, s.spectrum->eigenvalues()[i]);
      s.effective[i] = base_power == 1.0 ? mu : std::pow(mu, base_power);
    }
  }

  const Grid& grid() const noexcept { return state_->grid; }
  const CoefficientField& coeffs() const noexcept { return state_->coeffs; }
  double base_power() const noexcept { return state_->alpha; }
  Discretization discretization() const noexcept { return state_->disc; }
  const SpectralDecomposition& spectrum() const noexcept { return *state_->spectrum; }
  /// Eigenvalues of A^alpha, max(mu,0)^alpha.
  const Eigen::VectorXd& effective_eigenvalues() const noexcept { return state_->effective; }
  double ellipticity_lower() const noexcept { return state_->lambda_min; }
  double ellipticity_upper() const noexcept { return state_->lambda_max; }
  const FluxStencil* stencil() const noexcept {
    return state_->disc == Discretization::FiniteDifference ? &state_->stencil : nullptr;
  }

  /// Matrix of A (alpha = 1) acting on the unknowns. FourierSymbol operators
  /// are matrix-free; the dense matrix is synthesized from the eigenbasis.
  Eigen::MatrixXd assemble() const {
    const State& s = *state_;
    if (s.disc == Discretization::FiniteDifference) return s.matrix;
    const auto& sp = *s.spectrum;
    return s.grid.cell_volume() *
           (sp.basis() * sp.eigenvalues().asDiagonal() * sp.basis().transpose());
  }

  /// Apply f(nu_i) to the spectral coefficients of u, nu_i = mu_i^alpha.
  template <typename F>
  Field apply_function(const Field& u, F&& f) const {
    SpectralCoeffs c = to_spectral(u, spectrum());
    scale_coeffs(c, f);
    return to_physical(c, spectrum());
  }

  template <typename F>
  void scale_coeffs(SpectralCoeffs& c, F&& f) const {
    const auto& nu = effective_eigenvalues();
    for (Eigen::Index i = 0; i < nu.size(); ++i) c.values[i] *= f(nu[i]);
  }

  /// A^alpha u.
  Field apply(const Field& u) const {
    return apply_function(u, [](double nu) { return nu; });
  }

  /// Periodic forcing -div(a omega) produced by the linear part omega.x of a
  /// tilted field, evaluated with the flux stencil. Zero for constant a.
  Eigen::VectorXd tilt_forcing(const std::array<double, 2>& omega) const {
    const State& s = *state_;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.grid.size()));
    if (s.coeffs.is_constant() || (omega[0] == 0.0 && omega[1] == 0.0)) return g;
    if (!s.grid.periodic()) throw Error("tilted fields need a periodic grid");
    const int d = s.grid.dim();
    for (int i = 0; i < d; ++i) {
      Eigen::VectorXd flux = Eigen::VectorXd::Zero(g.size());
      for (int j = 0; j < d; ++j) flux += s.stencil.coeff[i][j] * omega[j];
      g += s.stencil.grad[i].transpose() * flux;
    }
    return g;
  }

  /// 1/2 sum_ij a^ij (omega_i + D_i u)(omega_j + D_j u) integrated over the
  /// grid. With omega = 0 this is 1/2 <u, A^alpha u>.
  double quadratic_energy(const Field& u, const std::array<double, 2>& omega = {0.0, 0.0}) const {
    const State& s = *state_;
    const int d = s.grid.dim();
    const bool tilted = omega[0] != 0.0 || omega[1] != 0.0;
    if (s.disc == Discretization::FourierSymbol || s.alpha != 1.0) {
      if (tilted && s.alpha != 1.0) throw Error("tilted energy needs base power 1");
      const SpectralCoeffs c = to_spectral(u, spectrum());
      double e = 0.5 * c.values.dot(effective_eigenvalues().cwiseProduct(c.values));
      if (tilted) {
        // cross terms vanish for periodic u and constant a
        const auto a = s.coeffs.at({0.0, 0.0});
        double waw = 0.0;
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j) waw += omega[i] * a(i, j) * omega[j];
        e += 0.5 * waw * std::pow(static_cast<double>(s.grid.period()), d);
      }
      return e;
    }
    std::array<Eigen::VectorXd, 2> du;
    for (int i = 0; i < d; ++i) {
      du[i] = s.stencil.grad[i] * u.values();
      if (tilted) du[i] = (du[i].array() + omega[i]).matrix();
      if (!s.grid.periodic()) zero_missing_differences(s, i, du[i]);
    }
    double e = 0.0;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        e += (s.stencil.coeff[i][j].array() * du[i].array() * du[j].array()).sum();
    return 0.5 * s.grid.cell_volume() * e;
  }

 private:
  struct State {
    State(Grid g, CoefficientField c, double a, Discretization dd)
        : grid(g), coeffs(std::move(c)), alpha(a), disc(dd) {}
    Grid grid;
    CoefficientField coeffs;
    double alpha;
    Discretization disc;
    std::vector<Eigen::Index> unknowns;
    FluxStencil stencil;
    Eigen::MatrixXd matrix;
    std::unique_ptr<SpectralDecomposition> spectrum;
    Eigen::VectorXd effective;
    double lambda_min = 0.0;
    double lambda_max = 0.0;
  };

  static void build_unknowns(State& s) {
    for (std::size_t i = 0; i < s.grid.size(); ++i)
      if (!s.grid.is_boundary(i)) s.unknowns.push_back(static_cast<Eigen::Index>(i));
  }

  static Point offset(const Point& x, double h, int i, int j) {
    Point p = x;
    p[static_cast<std::size_t>(i)] += 0.5 * h;
    if (j != i) p[static_cast<std::size_t>(j)] += 0.5 * h;
    return p;
  }

  // Ellipticity bounds from sampling; periodicity of variable coefficients.
  static void check_coefficients(State& s) {
    const Grid& g = s.grid;
    const int d = g.dim();
    const double h = g.spacing();
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    auto sample = [&](const Point& x) {
      const auto a = s.coeffs.at(x);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a.topLeftCorner(d, d));
      lo = std::min(lo, es.eigenvalues().minCoeff());
      hi = std::max(hi, es.eigenvalues().maxCoeff());
      if (g.periodic() && !s.coeffs.is_constant()) {
        for (int k = 0; k < d; ++k) {
          Point y = x;
          y[static_cast<std::size_t>(k)] += 1.0;
          if ((s.coeffs.at(y) - a).cwiseAbs().maxCoeff() > 1e-10)
            throw Error("coefficients must be 1-periodic on periodic grids");
        }
      }
    };
    if (s.coeffs.is_constant()) {
      sample({0.0, 0.0});
    } else {
      for (std::size_t n = 0; n < g.size(); ++n) {
        const Point x = g.position(n);
        sample(x);
        for (int i = 0; i < d; ++i)
          for (int j = i; j < d; ++j) sample(offset(x, h, i, j));
      }
    }
    if (!(lo > 0.0)) throw Error("coefficient matrix is not uniformly elliptic (min eigenvalue " + std::to_string(lo) + ")");
    s.lambda_min = lo;
    s.lambda_max = hi;
  }

  static void zero_missing_differences(const State& s, int axis, Eigen::VectorXd& du) {
    for (std::size_t n = 0; n < s.grid.size(); ++n)
      if (s.grid.multi_index(n)[static_cast<std::size_t>(axis)] == s.grid.cells())
        du[static_cast<Eigen::Index>(n)] = 0.0;
  }

  static void build_stencil(State& s) {
    const Grid& g = s.grid;
    const int d = g.dim();
    const double h = g.spacing();
    const auto m = static_cast<Eigen::Index>(g.size());
    for (int i = 0; i < d; ++i) {
      std::vector<Eigen::Triplet<double>> t;
      for (std::size_t n = 0; n < g.size(); ++n) {
        auto ix = g.multi_index(n);
        if (!g.periodic() && ix[static_cast<std::size_t>(i)] == g.cells()) continue;
        auto jx = ix;
        jx[static_cast<std::size_t>(i)] = (jx[static_cast<std::size_t>(i)] + 1) % g.axis_nodes();
        const auto row = static_cast<Eigen::Index>(n);
        t.emplace_back(row, row, -1.0 / h);
        t.emplace_back(row, static_cast<Eigen::Index>(g.flat(jx[0], jx[1])), 1.0 / h);
      }
      s.stencil.grad[static_cast<std::size_t>(i)].resize(m, m);
      s.stencil.grad[static_cast<std::size_t>(i)].setFromTriplets(t.begin(), t.end());
      for (int j = 0; j < d; ++j) {
        Eigen::VectorXd c(m);
        for (std::size_t n = 0; n < g.size(); ++n)
          c[static_cast<Eigen::Index>(n)] = s.coeffs.entry(i, j, offset(g.position(n), h, i, j));
        s.stencil.coeff[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = std::move(c);
      }
    }
    Eigen::SparseMatrix<double> k(m, m);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        const auto& gi = s.stencil.grad[static_cast<std::size_t>(i)];
        const auto& gj = s.stencil.grad[static_cast<std::size_t>(j)];
        const auto& c = s.stencil.coeff[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        Eigen::SparseMatrix<double> term = gi.transpose() * c.asDiagonal() * gj;
        k += term;
      }
    const Eigen::MatrixXd full = Eigen::MatrixXd(k);
    const auto nu = static_cast<Eigen::Index>(s.unknowns.size());
    s.matrix.resize(nu, nu);
    for (Eigen::Index a = 0; a < nu; ++a)
      for (Eigen::Index b = 0; b < nu; ++b) s.matrix(a, b) = full(s.unknowns[a], s.unknowns[b]);
    // symmetric by construction; remove rounding asymmetry before decomposing
    s.matrix = 0.5 * (s.matrix + s.matrix.transpose()).eval();
  }

  static void decompose_fd(State& s) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s.matrix);
    if (es.info() != Eigen::Success) throw Error("eigendecomposition failed");
    Eigen::VectorXd eigs = es.eigenvalues();
    Eigen::MatrixXd vecs = es.eigenvectors();
    if (s.grid.periodic()) {
      // the kernel is spanned by constants: pin that mode exactly
      const auto n = vecs.rows();
      eigs[0] = 0.0;
      vecs.col(0).setConstant(1.0 / std::sqrt(static_cast<double>(n)));
      for (Eigen::Index j = 1; j < vecs.cols(); ++j) {
        vecs.col(j) -= vecs.col(0).dot(vecs.col(j)) * vecs.col(0);
        vecs.col(j).normalize();
      }
    }
    const double scale = 1.0 / std::sqrt(s.grid.cell_volume());
    s.spectrum = std::make_unique<SpectralDecomposition>(s.grid, s.unknowns, std::move(eigs),
                                                         vecs * scale);
  }

  // Real Fourier basis cos/sin(2 pi xi.x), xi in Z^d / N, with symbol
  // 4 pi^2 xi^T a xi. At a Nyquist component the two aliases +-xi_j give
  // different cross terms; their average (cross term dropped) keeps the
  // operator real and symmetric.
  static void build_fourier(State& s) {
    const Grid& g = s.grid;
    const int d = g.dim();
    const int M = g.cells();
    const double N = g.period();
    const auto m = static_cast<Eigen::Index>(g.size());
    const auto a = s.coeffs.at({0.0, 0.0});
    const double vol = std::pow(N, d);
    const double two_pi = 2.0 * std::numbers::pi;

    struct Mode {
      double eig;
      std::array<int, 2> k;
      bool is_sin;
      bool self_conjugate;
    };
    std::vector<Mode> modes;
    modes.reserve(static_cast<std::size_t>(m));
    auto centered = [M](int k) { return 2 * k <= M ? k : k - M; };
    auto conj_index = [M](int k) { return (M - k) % M; };
    const int k1_max = d == 2 ? M : 1;
    for (int k1 = 0; k1 < k1_max; ++k1) {
      for (int k0 = 0; k0 < M; ++k0) {
        const std::array<int, 2> k{k0, k1};
        const std::array<int, 2> kc{conj_index(k0), d == 2 ? conj_index(k1) : 0};
        const auto lin = [M](const std::array<int, 2>& v) { return v[0] + M * v[1]; };
        if (lin(kc) < lin(k)) continue;
        const bool self = lin(kc) == lin(k);
        double eig = 0.0;
        for (int i = 0; i < d; ++i) {
          const double xi = centered(k[static_cast<std::size_t>(i)]) / N;
          eig += a(i, i) * xi * xi;
          for (int j = 0; j < d; ++j) {
            if (j == i) continue;
            const bool nyq = (M % 2 == 0) && (2 * k[static_cast<std::size_t>(i)] == M ||
                                              2 * k[static_cast<std::size_t>(j)] == M);
            if (nyq) continue;
            eig += a(i, j) * xi * (centered(k[static_cast<std::size_t>(j)]) / N);
          }
        }
        eig *= two_pi * two_pi;
        modes.push_back({eig, k, false, self});
        if (!self) modes.push_back({eig, k, true, false});
      }
    }
    std::stable_sort(modes.begin(), modes.end(),
                     [](const Mode& x, const Mode& y) { return x.eig < y.eig; });
    Eigen::VectorXd eigs(m);
    Eigen::MatrixXd basis(m, m);
    for (Eigen::Index c = 0; c < m; ++c) {
      const Mode& md = modes[static_cast<std::size_t>(c)];
      eigs[c] = md.eig;
      const double norm = md.self_conjugate ? 1.0 / std::sqrt(vol) : std::sqrt(2.0 / vol);
      for (std::size_t n = 0; n < g.size(); ++n) {
        const auto ix = g.multi_index(n);
        // phase = 2 pi k.i / M, reduced exactly in integers
        long long num = static_cast<long long>(md.k[0]) * ix[0];
        if (d == 2) num += static_cast<long long>(md.k[1]) * ix[1];
        num %= M;
        const double phase = two_pi * static_cast<double>(num) / M;
        basis(static_cast<Eigen::Index>(n), c) = norm * (md.is_sin ? std::sin(phase) : std::cos(phase));
      }
    }
    s.spectrum = std::make_unique<SpectralDecomposition>(g, s.unknowns, std::move(eigs), std::move(basis));
  }

  std::shared_ptr<State> state_;
};

/// inner_hs on the effective spectrum of A^alpha.
inline double inner_hs(const Field& u, const Field& v, const EllipticOperator& op, double gamma,
                       double s) {
  u.check(v);
  return inner_hs_coeffs(to_spectral(u, op.spectrum()), to_spectral(v, op.spectrum()),
                         op.effective_eigenvalues(), gamma, s);
}

/// (gamma + A^alpha)^s u.
inline Field frac_power_apply(const EllipticOperator& op, double gamma, double s, const Field& u) {
  if (!(gamma > 0.0)) throw Error("fractional powers need gamma > 0");
  if (s == 0.0) return op.apply_function(u, [](double) { return 1.0; });
  return op.apply_function(u, [gamma, s](double nu) { return std::pow(gamma + nu, s); });
}

/// e^{-t (gamma + A^alpha)^lambda} u, the semigroup generated by
/// L = -(gamma + A^alpha)^lambda.
inline Field semigroup_apply(const EllipticOperator& op, double gamma, double lambda, double t,
                             const Field& u) {
  if (t < 0.0) throw Error("semigroup time must be nonnegative");
  if (gamma < 0.0) throw Error("semigroup needs gamma >= 0");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw Error("semigroup exponent must lie in (0,1]");
  return op.apply_function(
      u, [gamma, lambda, t](double nu) { return std::exp(-t * std::pow(gamma + nu, lambda)); });
}

}  // namespace sgflow
