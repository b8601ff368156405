#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace cle {

/// How grid points relate to the box: `node` puts points on both faces
/// (spacing L/(N-1)); `cell` puts points at the centres of N equal cells
/// (spacing L/N). Hodge fields live on nodes, densities live on cells.
enum class Centering { node, cell };

struct Axis {
  double lower = 0.0;
  double upper = 1.0;
  std::size_t count = 4;

  bool operator==(const Axis&) const = default;
};

/// Regular box grid in 1 to 3 dimensions, row-major (last axis fastest).
class GridSpec {
 public:
  static constexpr std::size_t kDefaultPointCap = std::size_t{1} << 24;

  GridSpec() = default;
  /// Throws ConfigError when an axis is empty, inverted, has fewer than
  /// `min_count` points, or the total exceeds `point_cap`.
  GridSpec(std::vector<Axis> axes, Centering centering = Centering::node,
           std::size_t min_count = 4, std::size_t point_cap = kDefaultPointCap);

  std::size_t dimension() const noexcept { return axes_.size(); }
  const std::vector<Axis>& axes() const noexcept { return axes_; }
  const Axis& axis(std::size_t a) const { return axes_.at(a); }
  Centering centering() const noexcept { return centering_; }
  std::size_t count(std::size_t a) const { return axes_.at(a).count; }
  std::size_t size() const noexcept { return size_; }

  double spacing(std::size_t a) const;
  double coord(std::size_t a, std::size_t i) const;
  /// Volume represented by one point: product of spacings. For node grids this
  /// is the interior trapezoid weight.
  double cell_volume() const;
  /// Trapezoidal quadrature weight of a node (cell grids: cell volume).
  double weight(std::size_t flat) const;

  std::size_t stride(std::size_t a) const { return strides_.at(a); }
  std::size_t flat_index(const std::array<std::size_t, 3>& idx) const;
  std::array<std::size_t, 3> unravel(std::size_t flat) const;
  void point(std::size_t flat, double* out) const;
  bool on_boundary(std::size_t flat) const;

  /// Index of the cell (cell grids) or nearest node containing `x`; returns
  /// size() when `x` lies outside the box.
  std::size_t locate(const double* x) const;

  /// Node grid whose points coincide with the centres of this cell grid.
  GridSpec cell_centres_as_nodes() const;
  /// Cell grid whose centres coincide with the nodes of this node grid.
  GridSpec nodes_as_cell_centres() const;

  bool operator==(const GridSpec& other) const {
    return axes_ == other.axes_ && centering_ == other.centering_;
  }

 private:
  std::vector<Axis> axes_;
  Centering centering_ = Centering::node;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 0;
};

std::string to_string(Centering c);
Centering centering_from_string(const std::string& s);

/// Throws GridMismatchError with `context` if the grids differ.
void require_same_grid(const GridSpec& a, const GridSpec& b, const std::string& context);

struct ScalarFieldGrid {
  GridSpec grid;
  std::vector<double> values;

  ScalarFieldGrid() = default;
  explicit ScalarFieldGrid(GridSpec g, double fill = 0.0)
      : grid(std::move(g)), values(grid.size(), fill) {}
  ScalarFieldGrid(GridSpec g, std::vector<double> v);

  /// Throws ConfigError on size mismatch or non-finite values.
  void validate() const;
};

struct VectorFieldGrid {
  GridSpec grid;
  std::vector<std::vector<double>> components;

  VectorFieldGrid() = default;
  explicit VectorFieldGrid(GridSpec g, double fill = 0.0)
      : grid(std::move(g)), components(grid.dimension(), std::vector<double>(grid.size(), fill)) {}

  std::size_t dimension() const noexcept { return components.size(); }
  void validate() const;
};

/// Trapezoid-weighted L2 inner product  sum_p w_p a(p).b(p).
double inner_product(const VectorFieldGrid& a, const VectorFieldGrid& b);
/// sqrt(inner_product(a, a)).
double l2_norm(const VectorFieldGrid& a);
/// Max over points and components of |a|.
double max_norm(const VectorFieldGrid& a);

VectorFieldGrid operator+(const VectorFieldGrid& a, const VectorFieldGrid& b);
VectorFieldGrid operator-(const VectorFieldGrid& a, const VectorFieldGrid& b);

}  // namespace cle
