#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sgflow/error.hpp"

namespace sgflow {

enum class Boundary { Periodic, DirichletBox };

inline const char* to_string(Boundary bc) {
  return bc == Boundary::Periodic ? "periodic" : "dirichlet";
}

inline Boundary parse_boundary(const std::string& s) {
  if (s == "periodic") return Boundary::Periodic;
  if (s == "dirichlet" || s == "dirichlet_box") return Boundary::DirichletBox;
  throw ConfigError("unknown boundary condition '" + s + "'");
}

/// Physical position of a node; the second coordinate is unused when d = 1.
using Point = std::array<double, 2>;

/// Uniform tensor grid on [0,N)^d (periodic) or [0,N]^d (Dirichlet box),
/// with n points per unit length.
///
/// Periodic grids carry M = N*n nodes per axis. Dirichlet grids carry M+1
/// nodes per axis, the outermost layer being the zero boundary. Nodes are
/// numbered with the x index running fastest.
class Grid {
 public:
  Grid(int dim, int period, int points_per_period,
       Boundary boundary = Boundary::Periodic)
      : dim_(dim), period_(period), points_(points_per_period), bc_(boundary) {
    if (dim != 1 && dim != 2) throw Error("grid dimension must be 1 or 2");
    if (period < 1) throw Error("grid period must be >= 1");
    if (points_per_period < 1) throw Error("points per period must be >= 1");
    if (period * points_per_period < 4)
      throw Error("grid needs at least 4 cells per axis");
  }

  int dim() const noexcept { return dim_; }
  int period() const noexcept { return period_; }
  int points_per_period() const noexcept { return points_; }
  Boundary boundary() const noexcept { return bc_; }
  bool periodic() const noexcept { return bc_ == Boundary::Periodic; }

  double spacing() const noexcept { return 1.0 / points_; }
  double cell_volume() const noexcept {
    return dim_ == 1 ? spacing() : spacing() * spacing();
  }
  /// Cells per axis, M = N n.
  int cells() const noexcept { return period_ * points_; }
  int axis_nodes() const noexcept { return periodic() ? cells() : cells() + 1; }
  std::size_t size() const noexcept {
    const auto a = static_cast<std::size_t>(axis_nodes());
    return dim_ == 1 ? a : a * a;
  }

  std::array<int, 2> multi_index(std::size_t node) const noexcept {
    const auto a = static_cast<std::size_t>(axis_nodes());
    if (dim_ == 1) return {static_cast<int>(node), 0};
    return {static_cast<int>(node % a), static_cast<int>(node / a)};
  }
  std::size_t flat(int i0, int i1 = 0) const noexcept {
    return static_cast<std::size_t>(i0) +
           static_cast<std::size_t>(axis_nodes()) * static_cast<std::size_t>(i1);
  }
  Point position(std::size_t node) const noexcept {
    const auto ix = multi_index(node);
    return {ix[0] * spacing(), dim_ == 2 ? ix[1] * spacing() : 0.0};
  }
  bool is_boundary(std::size_t node) const noexcept {
    if (periodic()) return false;
    const auto ix = multi_index(node);
    const int last = cells();
    for (int a = 0; a < dim_; ++a)
      if (ix[a] == 0 || ix[a] == last) return true;
    return false;
  }

  /// Node reached by moving `shift` nodes along each axis (periodic wrap).
  std::size_t shifted(std::size_t node, std::array<int, 2> shift) const {
    if (!periodic()) throw Error("index shifts require a periodic grid");
    const int m = axis_nodes();
    auto ix = multi_index(node);
    for (int a = 0; a < dim_; ++a) ix[a] = ((ix[a] + shift[a]) % m + m) % m;
    return flat(ix[0], ix[1]);
  }

  std::string header() const {
    std::ostringstream os;
    os << "# grid d=" << dim_ << " N=" << period_ << " n=" << points_
       << " bc=" << to_string(bc_);
    return os.str();
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int dim_;
  int period_;
  int points_;
  Boundary bc_;
};

/// Real samples of a function on a Grid.
class Field {
 public:
  explicit Field(Grid grid) : grid_(grid), values_(Eigen::VectorXd::Zero(grid.size())) {}

  Field(Grid grid, Eigen::VectorXd values) : grid_(grid), values_(std::move(values)) {
    if (static_cast<std::size_t>(values_.size()) != grid_.size())
      throw GridMismatchError("field length " + std::to_string(values_.size()) +
                              " does not match grid size " +
                              std::to_string(grid_.size()));
    for (Eigen::Index i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i]))
        throw NonFiniteError("non-finite field value", static_cast<std::size_t>(i));
      if (grid_.is_boundary(static_cast<std::size_t>(i)) && values_[i] != 0.0)
        throw Error("Dirichlet field is nonzero on boundary node " + std::to_string(i));
    }
  }

  static Field constant(const Grid& grid, double c) {
    Eigen::VectorXd v = Eigen::VectorXd::Constant(grid.size(), c);
    for (std::size_t i = 0; i < grid.size(); ++i)
      if (grid.is_boundary(i)) v[static_cast<Eigen::Index>(i)] = 0.0;
    return Field(grid, std::move(v));
  }

  const Grid& grid() const noexcept { return grid_; }
  const Eigen::VectorXd& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return grid_.size(); }
  double operator[](std::size_t i) const { return values_[static_cast<Eigen::Index>(i)]; }

  double max_abs() const { return values_.cwiseAbs().maxCoeff(); }
  double min() const { return values_.minCoeff(); }
  double max() const { return values_.maxCoeff(); }
  double mean() const { return values_.mean(); }

  Field operator+(const Field& o) const { check(o); return Field(grid_, values_ + o.values_); }
  Field operator-(const Field& o) const { check(o); return Field(grid_, values_ - o.values_); }
  Field operator*(double s) const { return Field(grid_, values_ * s); }
  Field plus_constant(double c) const {
    return Field(grid_, (values_.array() + c).matrix());
  }

  /// Translate by `shift` grid nodes per axis: result(x) = u(x + shift*h).
  Field shifted(std::array<int, 2> shift) const {
    Eigen::VectorXd out(values_.size());
    for (std::size_t i = 0; i < size(); ++i)
      out[static_cast<Eigen::Index>(i)] = (*this)[grid_.shifted(i, shift)];
    return Field(grid_, std::move(out));
  }

  void check(const Field& o) const {
    if (!(grid_ == o.grid_)) throw GridMismatchError("fields live on different grids");
  }

 private:
  Grid grid_;
  Eigen::VectorXd values_;
};

/// Sample f at every node. Dirichlet boundary samples must already vanish.
template <typename F>
Field field_from_fn(const Grid& grid, F&& f) {
  Eigen::VectorXd v(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double y = f(grid.position(i));
    if (!std::isfinite(y)) throw NonFiniteError("non-finite sample", i);
    if (grid.is_boundary(i)) {
      if (std::abs(y) > 1e-12)
        throw Error("function does not vanish on Dirichlet boundary node " +
                    std::to_string(i));
      v[static_cast<Eigen::Index>(i)] = 0.0;
    } else {
      v[static_cast<Eigen::Index>(i)] = y;
    }
  }
  return Field(grid, std::move(v));
}

/// Rectangle-rule L2 inner product h^d sum u_i v_i.
inline double inner_l2(const Field& u, const Field& v) {
  u.check(v);
  return u.grid().cell_volume() * u.values().dot(v.values());
}

inline double norm_l2(const Field& u) { return std::sqrt(inner_l2(u, u)); }

// ---------------------------------------------------------------------------
// CSV serialization: "# grid d=.. N=.. n=.. bc=.." then index,x(,y),value.

inline void write_field_csv(std::ostream& os, const Field& u) {
  const Grid& g = u.grid();
  os << g.header() << '\n';
  char buf[128];
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Point p = g.position(i);
    if (g.dim() == 1)
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", i, p[0], u[i]);
    else
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", i, p[0], p[1], u[i]);
    os << buf;
  }
}

inline void write_field_csv(const std::string& path, const Field& u) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_field_csv(os, u);
}

inline Field read_field_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("# grid", 0) != 0)
    throw Error("field CSV must start with a '# grid' header");
  int d = 0, N = 0, n = 0;
  char bc[32] = {0};
  if (std::sscanf(line.c_str(), "# grid d=%d N=%d n=%d bc=%31s", &d, &N, &n, bc) != 4)
    throw Error("malformed field CSV header: " + line);
  Grid grid(d, N, n, parse_boundary(bc));
  Eigen::VectorXd v = Eigen::VectorXd::Zero(grid.size());
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != static_cast<std::size_t>(d) + 2)
      throw Error("malformed field CSV row: " + line);
    const auto idx = std::stoull(cells.front());
    if (idx >= grid.size()) throw Error("field CSV node index out of range");
    v[static_cast<Eigen::Index>(idx)] = std::strtod(cells.back().c_str(), nullptr);
    ++rows;
  }
  if (rows != grid.size()) throw Error("field CSV has missing rows");
  return Field(grid, std::move(v));
}

inline Field read_field_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open '" + path + "'");
  return read_field_csv(is);
}

}  // namespace sgflow
