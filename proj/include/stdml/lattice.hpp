#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace stdml {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

inline double distance(const Point2& a, const Point2& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

/// Regular raster of m_rows x m_cols pixels. Pixels are indexed row-major
/// from 0; pixel (row, col) sits at origin + spacing * (col, row).
class Grid {
 public:
  Grid(int rows, int cols, double spacing, Point2 origin = {});

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  double spacing() const noexcept { return spacing_; }
  Point2 origin() const noexcept { return origin_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(rows_) * cols_; }

  std::size_t index(int row, int col) const;
  int row_of(std::size_t i) const noexcept { return static_cast<int>(i / cols_); }
  int col_of(std::size_t i) const noexcept { return static_cast<int>(i % cols_); }
  Point2 coord(std::size_t i) const noexcept {
    return {origin_.x + spacing_ * col_of(i), origin_.y + spacing_ * row_of(i)};
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int rows_;
  int cols_;
  double spacing_;
  Point2 origin_;
};

Grid build_grid(int rows, int cols, double spacing, Point2 origin = {});

enum class NeighborScheme { queen8, rook4 };

struct Neighborhood {
  NeighborScheme scheme = NeighborScheme::queen8;
  std::vector<std::vector<std::size_t>> lists;

  std::size_t count(std::size_t i) const { return lists[i].size(); }
};

Neighborhood build_neighborhood(const Grid& grid, NeighborScheme scheme);

struct NeighborMeans {
  std::vector<double> values;
  /// Pixels with no observed neighbor; their value is set to 0.
  std::vector<std::size_t> isolated;
};

/// Mean of each pixel's neighbors. NaN entries are treated as missing and
/// excluded from both the sum and the count.
NeighborMeans neighbor_mean(std::span<const double> values, const Neighborhood& nb);

/// Label of pixels outside the analysis region.
inline constexpr int kUnassignedBlock = -1;

/// Block labels 0..G-1, one per pixel (kUnassignedBlock for pixels that are
/// not analysed).
struct BlockPartition {
  std::vector<int> labels;
  int count = 0;

  std::vector<std::vector<std::size_t>> members() const;
};

/// Validates labels in [0, count) (or unassigned) with every block nonempty.
BlockPartition make_partition(std::vector<int> labels);

/// Contiguous block_rows x block_cols rectangles tiling the grid exactly,
/// numbered row-major over the block lattice.
BlockPartition rectangular_blocks(const Grid& grid, int block_rows, int block_cols);

/// Compactly supported Wendland function of scaled distance d:
/// (1-d)^6 (36 d^2 + 18 d + 3) / 3 on [0, 1], zero beyond.
double wendland_value(double d);

struct BasisExpansion {
  std::vector<Point2> knots;
  double knot_spacing = 0.0;
  double bandwidth = 0.0;
  Eigen::MatrixXd features;  // n x L

  std::size_t size() const noexcept { return knots.size(); }
};

/// Bandwidth as a multiple of the knot spacing.
inline constexpr double kWendlandBandwidthFactor = 2.5;

/// knots_per_side^2 knots on a square lattice spanning the grid's bounding box
/// (edges included) and the Wendland features of every pixel.
BasisExpansion build_basis(const Grid& grid, int knots_per_side);

/// Knots per side for a requested basis size L; L must be a perfect square.
int knots_per_side_for(int basis_size);

}  // namespace stdml
