#include "cle/grid.hpp"

#include <cmath>

#include "cle/errors.hpp"

namespace cle {

GridSpec::GridSpec(std::vector<Axis> axes, Centering centering, std::size_t min_count,
                   std::size_t point_cap)
    : axes_(std::move(axes)), centering_(centering) {
  if (axes_.empty() || axes_.size() > 3) {
    throw ConfigError("grid dimension must be 1, 2 or 3");
  }
  size_ = 1;
  for (std::size_t a = 0; a < axes_.size(); ++a) {
    const Axis& ax = axes_[a];
    if (!(std::isfinite(ax.lower) && std::isfinite(ax.upper)) || !(ax.upper > ax.lower)) {
      throw ConfigError("grid axis " + std::to_string(a) + ": upper must exceed lower");
    }
    if (ax.count < min_count) {
      throw ConfigError("grid axis " + std::to_string(a) + ": needs at least " +
                        std::to_string(min_count) + " points");
    }
    if (size_ > point_cap / ax.count) {
      throw ConfigError("grid exceeds the point cap of " + std::to_string(point_cap));
    }
    size_ *= ax.count;
  }
  strides_.assign(axes_.size(), 1);
  for (std::size_t a = axes_.size() - 1; a-- > 0;) {
    strides_[a] = strides_[a + 1] * axes_[a + 1].count;
  }
}

double GridSpec::spacing(std::size_t a) const {
  const Axis& ax = axes_.at(a);
  const double len = ax.upper - ax.lower;
  return centering_ == Centering::node ? len / static_cast<double>(ax.count - 1)
                                       : len / static_cast<double>(ax.count);
}

double GridSpec::coord(std::size_t a, std::size_t i) const {
  const Axis& ax = axes_.at(a);
  const double h = spacing(a);
  if (centering_ == Centering::node) {
    // Pin the last node to the upper bound exactly.
    return i + 1 == ax.count ? ax.upper : ax.lower + static_cast<double>(i) * h;
  }
  return ax.lower + (static_cast<double>(i) + 0.5) * h;
}

double GridSpec::cell_volume() const {
  double v = 1.0;
  for (std::size_t a = 0; a < axes_.size(); ++a) v *= spacing(a);
  return v;
}

double GridSpec::weight(std::size_t flat) const {
  double w = cell_volume();
  if (centering_ == Centering::cell) return w;
  const auto idx = unravel(flat);
  for (std::size_t a = 0; a < axes_.size(); ++a) {
    if (idx[a] == 0 || idx[a] + 1 == axes_[a].count) w *= 0.5;
  }
  return w;
}

std::size_t GridSpec::flat_index(const std::array<std::size_t, 3>& idx) const {
  std::size_t f = 0;
  for (std::size_t a = 0; a < axes_.size(); ++a) f += idx[a] * strides_[a];
  return f;
}

std::array<std::size_t, 3> GridSpec::unravel(std::size_t flat) const {
  std::array<std::size_t, 3> idx{0, 0, 0};
  for (std::size_t a = 0; a < axes_.size(); ++a) {
    idx[a] = flat / strides_[a];
    flat -= idx[a] * strides_[a];
  }
  return idx;
}

void GridSpec::point(std::size_t flat, double* out) const {
  const auto idx = unravel(flat);
  for (std::size_t a = 0; a < axes_.size(); ++a) out[a] = coord(a, idx[a]);
}

bool GridSpec::on_boundary(std::size_t flat) const {
  const auto idx = unravel(flat);
  for (std::size_t a = 0; a < axes_.size(); ++a) {
    if (idx[a] == 0 || idx[a] + 1 == axes_[a].count) return true;
  }
  return false;
}

std::size_t GridSpec::locate(const double* x) const {
  std::size_t flat = 0;
  for (std::size_t a = 0; a < axes_.size(); ++a) {
    const Axis& ax = axes_[a];
    if (!(x[a] >= ax.lower && x[a] <= ax.upper)) return size_;
    const double h = spacing(a);
    const double s = (x[a] - ax.lower) / h;
    auto i = static_cast<std::size_t>(centering_ == Centering::node ? std::floor(s + 0.5)
                                                                   : std::floor(s));
    if (i >= ax.count) i = ax.count - 1;
    flat += i * strides_[a];
  }
  return flat;
}

GridSpec GridSpec::cell_centres_as_nodes() const {
  if (centering_ != Centering::cell) throw ConfigError("cell_centres_as_nodes needs a cell grid");
  std::vector<Axis> axes;
  for (std::size_t a = 0; a < axes_.size(); ++a) {
    axes.push_back({coord(a, 0), coord(a, axes_[a].count - 1), axes_[a].count});
  }
  return GridSpec(std::move(axes), Centering::node);
}

GridSpec GridSpec::nodes_as_cell_centres() const {
  if (centering_ != Centering::node) throw ConfigError("nodes_as_cell_centres needs a node grid");
  std::vector<Axis> axes;
  for (std::size_t a = 0; a < axes_.size(); ++a) {
    const double h = spacing(a);
    axes.push_back({axes_[a].lower - 0.5 * h, axes_[a].upper + 0.5 * h, axes_[a].count});
  }
  return GridSpec(std::move(axes), Centering::cell);
}

std::string to_string(Centering c) { return c == Centering::node ? "node" : "cell"; }

Centering centering_from_string(const std::string& s) {
  if (s == "node") return Centering::node;
  if (s == "cell") return Centering::cell;
  throw ConfigError("unknown grid centering '" + s + "'");
}

void require_same_grid(const GridSpec& a, const GridSpec& b, const std::string& context) {
  if (!(a == b)) throw GridMismatchError(context + ": grids differ");
}

ScalarFieldGrid::ScalarFieldGrid(GridSpec g, std::vector<double> v)
    : grid(std::move(g)), values(std::move(v)) {
  validate();
}

void ScalarFieldGrid::validate() const {
  if (values.size() != grid.size()) throw ConfigError("scalar field size does not match grid");
  for (double v : values) {
    if (!std::isfinite(v)) throw ConfigError("scalar field has non-finite values");
  }
}

void VectorFieldGrid::validate() const {
  if (components.size() != grid.dimension()) {
    throw ConfigError("vector field component count does not match grid dimension");
  }
  for (const auto& c : components) {
    if (c.size() != grid.size()) throw ConfigError("vector field size does not match grid");
    for (double v : c) {
      if (!std::isfinite(v)) throw ConfigError("vector field has non-finite values");
    }
  }
}

double inner_product(const VectorFieldGrid& a, const VectorFieldGrid& b) {
  require_same_grid(a.grid, b.grid, "inner_product");
  double s = 0.0;
  for (std::size_t p = 0; p < a.grid.size(); ++p) {
    double dot = 0.0;
    for (std::size_t c = 0; c < a.dimension(); ++c) dot += a.components[c][p] * b.components[c][p];
    s += a.grid.weight(p) * dot;
  }
  return s;
}

double l2_norm(const VectorFieldGrid& a) { return std::sqrt(inner_product(a, a)); }

double max_norm(const VectorFieldGrid& a) {
  double m = 0.0;
  for (const auto& c : a.components) {
    for (double v : c) m = std::max(m, std::abs(v));
  }
  return m;
}

namespace {
template <typename Op>
VectorFieldGrid combine(const VectorFieldGrid& a, const VectorFieldGrid& b, Op op) {
  require_same_grid(a.grid, b.grid, "vector field arithmetic");
  VectorFieldGrid out(a.grid);
  for (std::size_t c = 0; c < a.dimension(); ++c) {
    for (std::size_t p = 0; p < a.grid.size(); ++p) {
      out.components[c][p] = op(a.components[c][p], b.components[c][p]);
    }
  }
  return out;
}
}  // namespace

VectorFieldGrid operator+(const VectorFieldGrid& a, const VectorFieldGrid& b) {
  return combine(a, b, [](double x, double y) { return x + y; });
}

VectorFieldGrid operator-(const VectorFieldGrid& a, const VectorFieldGrid& b) {
  return combine(a, b, [](double x, double y) { return x - y; });
}

}  // namespace cle
