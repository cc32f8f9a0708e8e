#pragma once

#include <iosfwd>
#include <string>

#include "stdml/dgp.hpp"
#include "stdml/dml.hpp"

namespace stdml {

/// Columnar grid file: comma-separated, header row with row, col, Y0, Y1, D,
/// an optional block column, and one column per covariate. "NA" marks a
/// missing outcome. Leading '#' lines carry metadata; the grid.* keys
/// (rows, cols, spacing, origin_x, origin_y) restore the exact geometry.
/// Cells absent from the file are inactive.
void write_grid_file(std::ostream& out, const GridDataset& data, const std::string& header_comments = "");

GridDataset read_grid_file(std::istream& in, const std::string& source = "<input>");
GridDataset ingest(const std::string& path);

/// Per-pixel truth: all covariate fields, propensity, conditional means and
/// block effects, in the same row/col layout.
void write_truth_file(std::ostream& out, const GridDataset& data, const SimTruth& truth,
                      const std::string& header_comments = "");

/// Pixel count, treated share, missing share per period, covariate list.
std::string dataset_summary(const GridDataset& data);

}  // namespace stdml
