#include "stdml/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stdml/errors.hpp"

namespace stdml {

Grid::Grid(int rows, int cols, double spacing, Point2 origin)
    : rows_(rows), cols_(cols), spacing_(spacing), origin_(origin) {
  if (rows < 1 || cols < 1)
    throw ConfigError("grid dimensions must be >= 1, got " + std::to_string(rows) + "x" +
                      std::to_string(cols));
  if (!(spacing > 0.0) || !std::isfinite(spacing))
    throw ConfigError("grid spacing must be positive and finite");
  if (!std::isfinite(origin.x) || !std::isfinite(origin.y))
    throw ConfigError("grid origin must be finite");
}

std::size_t Grid::index(int row, int col) const {
  if (row < 0 || row >= rows_ || col < 0 || col >= cols_)
    throw ShapeError("pixel (" + std::to_string(row) + "," + std::to_string(col) +
                     ") outside grid");
  return static_cast<std::size_t>(row) * cols_ + col;
}

Grid build_grid(int rows, int cols, double spacing, Point2 origin) {
  return Grid(rows, cols, spacing, origin);
}

Neighborhood build_neighborhood(const Grid& grid, NeighborScheme scheme) {
  Neighborhood nb;
  nb.scheme = scheme;
  nb.lists.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const int r = grid.row_of(i);
    const int c = grid.col_of(i);
    auto& list = nb.lists[i];
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        if (dr == 0 && dc == 0) continue;
        if (scheme == NeighborScheme::rook4 && dr != 0 && dc != 0) continue;
        const int rr = r + dr;
        const int cc = c + dc;
        if (rr < 0 || rr >= grid.rows() || cc < 0 || cc >= grid.cols()) continue;
        list.push_back(grid.index(rr, cc));
      }
    }
  }
  return nb;
}

NeighborMeans neighbor_mean(std::span<const double> values, const Neighborhood& nb) {
  if (values.size() != nb.lists.size())
    throw ShapeError("neighbor_mean: " + std::to_string(values.size()) + " values for " +
                     std::to_string(nb.lists.size()) + " pixels");
  NeighborMeans out;
  out.values.assign(values.size(), 0.0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t j : nb.lists[i]) {
      if (std::isnan(values[j])) continue;
      sum += values[j];
      ++used;
    }
    if (used == 0)
      out.isolated.push_back(i);
    else
      out.values[i] = sum / static_cast<double>(used);
  }
  return out;
}

std::vector<std::vector<std::size_t>> BlockPartition::members() const {
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= 0) out[labels[i]].push_back(i);
  return out;
}

BlockPartition make_partition(std::vector<int> labels) {
  BlockPartition p;
  int max_label = -1;
  for (int g : labels) {
    if (g < kUnassignedBlock) throw ConfigError("block labels must be nonnegative");
    max_label = std::max(max_label, g);
  }
  p.count = max_label + 1;
  if (p.count == 0) throw ConfigError("partition has no blocks");
  std::vector<char> seen(static_cast<std::size_t>(p.count), 0);
  for (int g : labels)
    if (g >= 0) seen[g] = 1;
  for (int g = 0; g < p.count; ++g)
    if (!seen[g]) throw ConfigError("block " + std::to_string(g) + " has no pixels");
  p.labels = std::move(labels);
  return p;
}

BlockPartition rectangular_blocks(const Grid& grid, int block_rows, int block_cols) {
  if (block_rows < 1 || block_cols < 1) throw ConfigError("block dimensions must be >= 1");
  if (grid.rows() % block_rows != 0 || grid.cols() % block_cols != 0)
    throw ConfigError("blocks of " + std::to_string(block_rows) + "x" +
                      std::to_string(block_cols) + " do not tile a " +
                      std::to_string(grid.rows()) + "x" + std::to_string(grid.cols()) + " grid");
  const int per_row = grid.cols() / block_cols;
  std::vector<int> labels(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    labels[i] = (grid.row_of(i) / block_rows) * per_row + grid.col_of(i) / block_cols;
  return make_partition(std::move(labels));
}

double wendland_value(double d) {
  if (std::isnan(d) || d < 0.0) throw DomainError("wendland_value: distance must be >= 0");
  if (d >= 1.0) return 0.0;
  const double u = 1.0 - d;
  const double u2 = u * u;
  return u2 * u2 * u2 * (36.0 * d * d + 18.0 * d + 3.0) / 3.0;
}

BasisExpansion build_basis(const Grid& grid, int knots_per_side) {
  if (knots_per_side < 2) throw ConfigError("build_basis: knots_per_side must be >= 2");
  const Point2 lo = grid.origin();
  const Point2 hi = grid.coord(grid.size() - 1);
  const double width = hi.x - lo.x;
  const double height = hi.y - lo.y;
  if (!(width > 0.0) || !(height > 0.0))
    throw ConfigError("build_basis: grid must extend in both directions");

  BasisExpansion basis;
  const double step_x = width / (knots_per_side - 1);
  const double step_y = height / (knots_per_side - 1);
  basis.knot_spacing = std::max(step_x, step_y);
  basis.bandwidth = kWendlandBandwidthFactor * basis.knot_spacing;
  basis.knots.reserve(static_cast<std::size_t>(knots_per_side) * knots_per_side);
  for (int r = 0; r < knots_per_side; ++r)
    for (int c = 0; c < knots_per_side; ++c)
      basis.knots.push_back({lo.x + step_x * c, lo.y + step_y * r});

  const auto n = static_cast<Eigen::Index>(grid.size());
  const auto L = static_cast<Eigen::Index>(basis.knots.size());
  basis.features.setZero(n, L);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Point2 s = grid.coord(static_cast<std::size_t>(i));
    for (Eigen::Index l = 0; l < L; ++l)
      basis.features(i, l) = wendland_value(distance(s, basis.knots[l]) / basis.bandwidth);
  }
  return basis;
}

int knots_per_side_for(int basis_size) {
  const int k = static_cast<int>(std::lround(std::sqrt(static_cast<double>(basis_size))));
  if (basis_size < 4 || k * k != basis_size)
    throw ConfigError("basis size L=" + std::to_string(basis_size) +
                      " must be a perfect square >= 4");
  return k;
}

}  // namespace stdml
