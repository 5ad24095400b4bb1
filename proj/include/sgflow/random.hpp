#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

#include "sgflow/elliptic_operator.hpp"
#include "sgflow/grid.hpp"
#include "sgflow/spectral.hpp"

namespace sgflow {

using Rng = std::mt19937_64;

/// Number of low modes used for band-limited random fields: ceil(m/4).
inline std::size_t band_limit(std::size_t modes) { return (modes + 3) / 4; }

/// Random field spanned by the lowest ceil(m/4) eigenvectors of `op`, with
/// standard normal coefficients, rescaled to sup norm `amplitude`.
inline Field random_band_limited(const EllipticOperator& op, Rng& rng, double amplitude = 1.0) {
  const auto& sp = op.spectrum();
  std::normal_distribution<double> normal(0.0, 1.0);
  SpectralCoeffs c{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sp.size()))};
  const std::size_t k = band_limit(sp.size());
  for (std::size_t i = 0; i < k; ++i) c.values[static_cast<Eigen::Index>(i)] = normal(rng);
  Field f = to_physical(c, sp);
  const double s = f.max_abs();
  return s > 0.0 ? f * (amplitude / s) : f;
}

/// Independent uniform samples in [lo, hi] (zero on Dirichlet boundaries).
inline Field random_uniform(const Grid& grid, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> uni(lo, hi);
  Eigen::VectorXd v(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t i = 0; i < grid.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = grid.is_boundary(i) ? 0.0 : uni(rng);
  return Field(grid, std::move(v));
}

/// Ordered pair (u0, v0) with v0 band-limited and u0 = v0 + |w| for an
/// independent band-limited w.
inline std::pair<Field, Field> random_ordered_pair(const EllipticOperator& op, Rng& rng,
                                                   double amplitude = 1.0) {
  Field v0 = random_band_limited(op, rng, amplitude);
  const Field w = random_band_limited(op, rng, amplitude);
  Field u0(v0.grid(), v0.values() + w.values().cwiseAbs());
  return {std::move(u0), std::move(v0)};
}

}  // namespace sgflow
