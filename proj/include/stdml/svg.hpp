#pragma once

#include <string>
#include <vector>

namespace stdml {

struct BoxGroup {
  std::string label;
  std::vector<double> values;
};

/// Horizontal-axis groups, vertical value axis; whiskers at min/max, box at
/// the quartiles. `reference` draws a dashed line (NaN to omit).
std::string box_plot_svg(const std::string& title, const std::vector<BoxGroup>& groups, double reference);

struct IntervalPoint {
  std::string label;
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

std::string interval_plot_svg(const std::string& title, const std::string& x_label,
                              const std::vector<IntervalPoint>& points);

/// Linear-interpolation quantile (type 7) of unsorted values.
double sample_quantile(std::vector<double> values, double q);

}  // namespace stdml
