#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "sgflow/error.hpp"
#include "sgflow/grid.hpp"

namespace sgflow {

/// Coefficients of a field in an L2-orthonormal operator eigenbasis.
struct SpectralCoeffs {
  Eigen::VectorXd values;
  std::size_t size() const noexcept { return static_cast<std::size_t>(values.size()); }
};

/// Eigenvalues (ascending) and L2-orthonormal eigenvectors of a discrete
/// operator. Eigenvectors are stored on the unknowns of the grid: every node
/// for periodic grids, interior nodes for Dirichlet boxes.
///
/// Orthonormality is with respect to inner_l2, i.e. h^d Psi^T Psi = I.
class SpectralDecomposition {
 public:
  SpectralDecomposition(Grid grid, std::vector<Eigen::Index> unknowns,
                        Eigen::VectorXd eigenvalues, Eigen::MatrixXd basis)
      : grid_(grid),
        unknowns_(std::move(unknowns)),
        eigenvalues_(std::move(eigenvalues)),
        basis_(std::move(basis)) {
    if (basis_.cols() != eigenvalues_.size() ||
        basis_.rows() != static_cast<Eigen::Index>(unknowns_.size()))
      throw Error("inconsistent spectral decomposition shapes");
  }

  const Grid& grid() const noexcept { return grid_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(eigenvalues_.size()); }
  const Eigen::VectorXd& eigenvalues() const noexcept { return eigenvalues_; }
  const Eigen::MatrixXd& basis() const noexcept { return basis_; }
  const std::vector<Eigen::Index>& unknowns() const noexcept { return unknowns_; }

  /// Values of u on the unknowns.
  Eigen::VectorXd gather(const Field& u) const {
    if (!(u.grid() == grid_)) throw GridMismatchError("field and operator grids differ");
    if (grid_.periodic()) return u.values();
    Eigen::VectorXd out(static_cast<Eigen::Index>(unknowns_.size()));
    for (std::size_t k = 0; k < unknowns_.size(); ++k)
      out[static_cast<Eigen::Index>(k)] = u.values()[unknowns_[k]];
    return out;
  }

  /// Embed unknown values into a full field (zero on Dirichlet boundary).
  Field scatter(const Eigen::VectorXd& x) const {
    if (grid_.periodic()) return Field(grid_, x);
    Eigen::VectorXd full = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid_.size()));
    for (std::size_t k = 0; k < unknowns_.size(); ++k)
      full[unknowns_[k]] = x[static_cast<Eigen::Index>(k)];
    return Field(grid_, std::move(full));
  }

  Field eigenvector(std::size_t i) const {
    return scatter(basis_.col(static_cast<Eigen::Index>(i)));
  }

 private:
  Grid grid_;
  std::vector<Eigen::Index> unknowns_;
  Eigen::VectorXd eigenvalues_;
  Eigen::MatrixXd basis_;
};

inline SpectralCoeffs to_spectral(const Field& u, const SpectralDecomposition& s) {
  return {s.grid().cell_volume() * (s.basis().transpose() * s.gather(u))};
}

inline Field to_physical(const SpectralCoeffs& c, const SpectralDecomposition& s) {
  if (c.size() != s.size())
    throw GridMismatchError("coefficient vector length " + std::to_string(c.size()) +
                            " does not match basis size " + std::to_string(s.size()));
  return s.scatter(s.basis() * c.values);
}

/// sum_i (gamma + mu_i)^s c_i(u) c_i(v) for the given eigenvalues.
inline double inner_hs_coeffs(const SpectralCoeffs& cu, const SpectralCoeffs& cv,
                              const Eigen::VectorXd& eigenvalues, double gamma, double s) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
    const double base = gamma + eigenvalues[i];
    if (base < 0.0 || (base == 0.0 && s < 0.0))
      throw Error("gamma + eigenvalue must be positive for this Sobolev exponent");
    const double w = s == 0.0 ? 1.0 : std::pow(base, s);
    acc += w * cu.values[i] * cv.values[i];
  }
  return acc;
}

inline double inner_hs(const Field& u, const Field& v, const SpectralDecomposition& op,
                       double gamma, double s) {
  u.check(v);
  return inner_hs_coeffs(to_spectral(u, op), to_spectral(v, op), op.eigenvalues(), gamma, s);
}

}  // namespace sgflow
