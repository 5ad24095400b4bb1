#pragma once

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "sgflow/error.hpp"
#include "sgflow/expression.hpp"
#include "sgflow/grid.hpp"

namespace sgflow {

/// Symmetric coefficient matrix a(x) of A = -div(a grad .). Stored as a 2x2
/// matrix; only the leading dim x dim block is meaningful.
class CoefficientField {
 public:
  using Matrix = Eigen::Matrix2d;
  using Fn = std::function<Matrix(const Point&)>;

  static CoefficientField identity(int dim) {
    return constant(dim, Matrix::Identity(), "identity");
  }

  static CoefficientField constant(int dim, Matrix a, std::string description = {}) {
    CoefficientField c;
    c.dim_ = dim;
    c.constant_ = true;
    c.value_ = mask(dim, a);
    c.description_ = description.empty() ? describe(dim, a) : std::move(description);
    c.check_symmetric(c.value_);
    return c;
  }

  static CoefficientField variable(int dim, Fn fn, std::string description) {
    CoefficientField c;
    c.dim_ = dim;
    c.constant_ = false;
    c.fn_ = std::make_shared<Fn>(std::move(fn));
    c.description_ = std::move(description);
    return c;
  }

  /// Parse "identity" | "diag:c1,...,cd" | "expr:<a>" | "expr:<a11>;<a12>;<a22>".
  /// Expressions see the variables x (= x1) and x2.
  static CoefficientField parse(const std::string& spec, int dim) {
    if (spec == "identity") return identity(dim);
    if (spec.rfind("diag:", 0) == 0) {
      const auto parts = split_trimmed(spec.substr(5), ',');
      if (static_cast<int>(parts.size()) != dim)
        throw ConfigError("diag coefficient needs " + std::to_string(dim) + " entries");
      Matrix a = Matrix::Zero();
      for (int i = 0; i < dim; ++i) a(i, i) = std::stod(parts[static_cast<std::size_t>(i)]);
      return constant(dim, a, spec);
    }
    if (spec.rfind("expr:", 0) == 0) {
      const auto parts = split_trimmed(spec.substr(5), ';');
      const std::vector<std::string> vars{"x", "x2"};
      const Point origin{0.0, 0.0};
      const std::span<const double> at0(origin.data(), 2);
      if (parts.size() == 1) {
        auto e = Expression::compile(parts[0], vars);
        if (e.is_constant()) return constant(dim, e(at0) * Matrix::Identity(), spec);
        return variable(
            dim,
            [e](const Point& p) -> Matrix {
              return e(std::span<const double>(p.data(), 2)) * Matrix::Identity();
            },
            spec);
      }
      if (parts.size() == 3 && dim == 2) {
        auto a11 = Expression::compile(parts[0], vars);
        auto a12 = Expression::compile(parts[1], vars);
        auto a22 = Expression::compile(parts[2], vars);
        if (a11.is_constant() && a12.is_constant() && a22.is_constant()) {
          Matrix m;
          m << a11(at0), a12(at0), a12(at0), a22(at0);
          return constant(dim, m, spec);
        }
        return variable(
            dim,
            [a11, a12, a22](const Point& p) -> Matrix {
              std::span<const double> s(p.data(), 2);
              Matrix m;
              m << a11(s), a12(s), a12(s), a22(s);
              return m;
            },
            spec);
      }
      throw ConfigError("expr coefficient needs 1 entry, or 3 entries in 2D: '" + spec + "'");
    }
    throw ConfigError("unknown coefficient spec '" + spec + "'");
  }

  int dim() const noexcept { return dim_; }
  bool is_constant() const noexcept { return constant_; }
  bool is_identity() const noexcept {
    return constant_ && value_.isApprox(mask(dim_, Matrix::Identity()), 0.0);
  }
  const std::string& description() const noexcept { return description_; }

  Matrix at(const Point& x) const {
    if (constant_) return value_;
    Matrix a = mask(dim_, (*fn_)(x));
    check_symmetric(a);
    for (int i = 0; i < dim_; ++i)
      for (int j = 0; j < dim_; ++j)
        if (!std::isfinite(a(i, j))) throw Error("non-finite coefficient value");
    return a;
  }
  double entry(int i, int j, const Point& x) const { return at(x)(i, j); }

 private:
  static Matrix mask(int dim, Matrix a) {
    if (dim == 1) {
      a(0, 1) = a(1, 0) = a(1, 1) = 0.0;
    }
    return a;
  }
  static std::string describe(int dim, const Matrix& a) {
    std::ostringstream os;
    os << "const:";
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) os << (i + j ? "," : "") << a(i, j);
    return os.str();
  }
  static void check_symmetric(const Matrix& a) {
    if (std::abs(a(0, 1) - a(1, 0)) > 1e-14 * (1.0 + a.cwiseAbs().maxCoeff()))
      throw Error("coefficient matrix is not symmetric");
  }

  int dim_ = 1;
  bool constant_ = true;
  Matrix value_ = Matrix::Identity();
  std::shared_ptr<const Fn> fn_;
  std::string description_;
};

}  // namespace sgflow
