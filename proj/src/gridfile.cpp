#include "stdml/gridfile.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "stdml/errors.hpp"

namespace stdml {
namespace {

constexpr std::size_t kMaxReportedErrors = 100;

std::string fmt_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <class T>
bool parse(const std::string& text, T& v) {
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  return ec == std::errc() && ptr == end && !text.empty();
}

struct Cell {
  int row = 0;
  int col = 0;
  double y0 = 0.0, y1 = 0.0;
  bool obs0 = false, obs1 = false;
  int d = 0;
  long block = -1;
  std::vector<double> x;
};

void write_comments(std::ostream& out, const std::string& comments) {
  std::stringstream ss(comments);
  for (std::string line; std::getline(ss, line);) out << (line.rfind('#', 0) == 0 ? "" : "# ") << line << '\n';
}

void write_geometry(std::ostream& out, const Grid& g) {
  out << "# grid.rows=" << g.rows() << '\n';
  out << "# grid.cols=" << g.cols() << '\n';
  out << "# grid.spacing=" << fmt_full(g.spacing()) << '\n';
  out << "# grid.origin_x=" << fmt_full(g.origin().x) << '\n';
  out << "# grid.origin_y=" << fmt_full(g.origin().y) << '\n';
}

}  // namespace

void write_grid_file(std::ostream& out, const GridDataset& data, const std::string& header_comments) {
  data.validate();
  write_comments(out, header_comments);
  write_geometry(out, data.grid);
  out << "row,col,Y0,Y1,D";
  if (data.blocks) out << ",block";
  for (const auto& nm : data.covariate_names) out << ',' << nm;
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data.active[i]) continue;
    out << data.grid.row_of(i) << ',' << data.grid.col_of(i) << ',';
    out << (data.observed0[i] ? fmt_full(data.y0[i]) : "NA") << ',';
    out << (data.observed1[i] ? fmt_full(data.y1[i]) : "NA") << ',' << data.d[i];
    if (data.blocks) out << ',' << data.blocks->labels[i];
    for (Eigen::Index j = 0; j < data.x.cols(); ++j) out << ',' << fmt_full(data.x(static_cast<Eigen::Index>(i), j));
    out << '\n';
  }
}

GridDataset read_grid_file(std::istream& in, const std::string& source) {
  std::vector<std::string> errors;
  auto fail = [&](int lineno, const std::string& msg) {
    if (errors.size() < kMaxReportedErrors) errors.push_back(source + ":" + std::to_string(lineno) + ": " + msg);
  };

  std::map<std::string, std::string> meta;
  std::vector<std::string> columns;
  std::vector<Cell> cells;
  std::vector<int> cell_lines;
  std::map<std::pair<int, int>, int> first_seen;
  int lineno = 0;
  int header_line = 0;
  int c_row = -1, c_col = -1, c_y0 = -1, c_y1 = -1, c_d = -1, c_block = -1;
  std::vector<int> c_cov;
  std::vector<std::string> cov_names;

  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq != std::string::npos) {
        auto key = line.substr(1, eq - 1);
        key.erase(0, key.find_first_not_of(' '));
        if (key.rfind("grid.", 0) == 0) meta[key] = line.substr(eq + 1);
      }
      continue;
    }
    if (columns.empty()) {
      header_line = lineno;
      columns = split_csv(line);
      std::set<std::string> seen;
      for (int c = 0; c < static_cast<int>(columns.size()); ++c) {
        const std::string& nm = columns[static_cast<std::size_t>(c)];
        if (nm.empty()) fail(lineno, "empty column name in position " + std::to_string(c + 1));
        if (!seen.insert(nm).second) fail(lineno, "duplicate column '" + nm + "'");
        if (nm == "row") c_row = c;
        else if (nm == "col") c_col = c;
        else if (nm == "Y0") c_y0 = c;
        else if (nm == "Y1") c_y1 = c;
        else if (nm == "D") c_d = c;
        else if (nm == "block") c_block = c;
        else {
          c_cov.push_back(c);
          cov_names.push_back(nm);
        }
      }
      for (const char* req : {"row", "col", "Y0", "Y1", "D"})
        if (!seen.count(req)) fail(lineno, std::string("missing required column '") + req + "'");
      if (!errors.empty()) throw ValidationError(errors);
      continue;
    }

    const auto f = split_csv(line);
    if (f.size() != columns.size()) {
      fail(lineno, "expected " + std::to_string(columns.size()) + " fields, found " + std::to_string(f.size()));
      continue;
    }
    Cell cell;
    bool ok = true;
    auto field = [&](int c) -> const std::string& { return f[static_cast<std::size_t>(c)]; };
    if (!parse(field(c_row), cell.row) || cell.row < 0) {
      fail(lineno, "row must be a non-negative integer, got '" + field(c_row) + "'");
      ok = false;
    }
    if (!parse(field(c_col), cell.col) || cell.col < 0) {
      fail(lineno, "col must be a non-negative integer, got '" + field(c_col) + "'");
      ok = false;
    }
    if (ok) {
      const auto [it, fresh] = first_seen.emplace(std::pair{cell.row, cell.col}, lineno);
      if (!fresh) {
        fail(lineno, "duplicate cell (" + std::to_string(cell.row) + ", " + std::to_string(cell.col) +
                         "), first seen on line " + std::to_string(it->second));
        ok = false;
      }
    }
    auto outcome = [&](int c, const char* nm, double& v, bool& obs) {
      if (field(c) == "NA") return;
      if (!parse(field(c), v) || !std::isfinite(v)) {
        fail(lineno, std::string(nm) + " is not a finite number or NA: '" + field(c) + "'");
        ok = false;
        return;
      }
      obs = true;
    };
    outcome(c_y0, "Y0", cell.y0, cell.obs0);
    outcome(c_y1, "Y1", cell.y1, cell.obs1);
    if (!parse(field(c_d), cell.d) || (cell.d != 0 && cell.d != 1)) {
      fail(lineno, "D must be 0 or 1, got '" + field(c_d) + "'");
      ok = false;
    }
    if (c_block >= 0 && (!parse(field(c_block), cell.block) || cell.block < 0)) {
      fail(lineno, "block must be a non-negative integer, got '" + field(c_block) + "'");
      ok = false;
    }
    for (std::size_t j = 0; j < c_cov.size(); ++j) {
      double v = 0.0;
      if (!parse(field(c_cov[j]), v) || !std::isfinite(v)) {
        fail(lineno, "covariate " + cov_names[j] + " is not a finite number: '" + field(c_cov[j]) + "'");
        ok = false;
      }
      cell.x.push_back(v);
    }
    if (ok) {
      cells.push_back(std::move(cell));
      cell_lines.push_back(lineno);
    }
  }
  if (columns.empty()) throw ValidationError({source + ": no header row"});
  if (cells.empty() && errors.empty()) fail(header_line, "no data rows");
  if (!errors.empty()) throw ValidationError(errors);

  int rows = 0, cols = 0;
  for (const auto& c : cells) {
    rows = std::max(rows, c.row + 1);
    cols = std::max(cols, c.col + 1);
  }
  double spacing = 1.0;
  Point2 origin{};
  auto meta_int = [&](const char* key, int& v) {
    if (!meta.count(key)) return;
    int parsed = 0;
    if (!parse(meta[key], parsed)) throw ValidationError({source + ": bad metadata " + key});
    if (parsed < v) throw ValidationError({source + ": " + key + "=" + meta[key] + " is smaller than the data"});
    v = parsed;
  };
  auto meta_double = [&](const char* key, double& v) {
    if (meta.count(key) && !parse(meta[key], v)) throw ValidationError({source + ": bad metadata " + key});
  };
  meta_int("grid.rows", rows);
  meta_int("grid.cols", cols);
  meta_double("grid.spacing", spacing);
  meta_double("grid.origin_x", origin.x);
  meta_double("grid.origin_y", origin.y);
  if (!(spacing > 0.0)) throw ValidationError({source + ": grid.spacing must be positive"});

  const Grid grid = build_grid(rows, cols, spacing, origin);
  const std::size_t n = grid.size();
  GridDataset ds;
  ds.grid = grid;
  ds.y0.assign(n, std::numeric_limits<double>::quiet_NaN());
  ds.y1.assign(n, std::numeric_limits<double>::quiet_NaN());
  ds.observed0.assign(n, 0);
  ds.observed1.assign(n, 0);
  ds.d.assign(n, 0);
  ds.active.assign(n, 0);
  ds.x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cov_names.size()));
  ds.covariate_names = cov_names;

  std::vector<long> raw_block(n, -1);
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const Cell& c = cells[k];
    const std::size_t i = grid.index(c.row, c.col);
    ds.active[i] = 1;
    ds.observed0[i] = c.obs0;
    ds.observed1[i] = c.obs1;
    if (c.obs0) ds.y0[i] = c.y0;
    if (c.obs1) ds.y1[i] = c.y1;
    ds.d[i] = c.d;
    raw_block[i] = c.block;
    for (std::size_t j = 0; j < c.x.size(); ++j) ds.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c.x[j];
  }
  if (!errors.empty()) throw ValidationError(errors);

  if (c_block >= 0) {
    // Dense relabelling by sorted label value; labels already 0..G-1 are kept.
    std::set<long> distinct;
    for (std::size_t i = 0; i < n; ++i)
      if (ds.active[i]) distinct.insert(raw_block[i]);
    std::map<long, int> rank;
    for (long b : distinct) rank.emplace(b, static_cast<int>(rank.size()));
    std::vector<int> labels(n, kUnassignedBlock);
    for (std::size_t i = 0; i < n; ++i)
      if (ds.active[i]) labels[i] = rank[raw_block[i]];
    ds.blocks = make_partition(std::move(labels));
  }
  ds.validate();
  return ds;
}

GridDataset ingest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError({"cannot read data file " + path});
  return read_grid_file(in, path);
}

void write_truth_file(std::ostream& out, const GridDataset& data, const SimTruth& truth,
                      const std::string& header_comments) {
  write_comments(out, header_comments);
  write_geometry(out, data.grid);
  out << "# gamma=" << fmt_full(truth.gamma) << '\n';
  out << "# treatment_regenerations=" << truth.regenerations << '\n';
  out << "row,col";
  for (Eigen::Index j = 0; j < truth.fields.cols(); ++j) out << ",F" << j + 1;
  out << ",propensity,mean0,mean1";
  const bool blocks = data.blocks && !truth.block_effects.empty();
  if (blocks) out << ",block,block_effect";
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.grid.row_of(i) << ',' << data.grid.col_of(i);
    for (Eigen::Index j = 0; j < truth.fields.cols(); ++j)
      out << ',' << fmt_full(truth.fields(static_cast<Eigen::Index>(i), j));
    out << ',' << fmt_full(truth.propensity[i]) << ',' << fmt_full(truth.mean0[i]) << ','
        << fmt_full(truth.mean1[i]);
    if (blocks) {
      const int g = data.blocks->labels[i];
      out << ',' << g << ',' << fmt_full(truth.block_effects[static_cast<std::size_t>(g)]);
    }
    out << '\n';
  }
}

std::string dataset_summary(const GridDataset& data) {
  std::size_t active = 0, treated = 0, miss0 = 0, miss1 = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data.active[i]) continue;
    ++active;
    treated += static_cast<std::size_t>(data.d[i]);
    miss0 += data.observed0[i] ? 0 : 1;
    miss1 += data.observed1[i] ? 0 : 1;
  }
  const double a = static_cast<double>(active);
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "pixels: %zu active of %d x %d\ntreated fraction: %.3f\nmissing Y0: %.3f  missing Y1: %.3f\n",
                active, data.grid.rows(), data.grid.cols(), treated / a, miss0 / a, miss1 / a);
  std::string out = buf;
  out += "covariates:";
  for (const auto& nm : data.covariate_names) out += " " + nm;
  out += "\n";
  if (data.blocks) out += "blocks: " + std::to_string(data.blocks->count) + "\n";
  return out;
}

}  // namespace stdml
