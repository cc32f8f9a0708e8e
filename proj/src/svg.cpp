#include "stdml/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "stdml/errors.hpp"

namespace stdml {
namespace {

constexpr double kWidth = 720;
constexpr double kHeight = 420;
constexpr double kLeft = 70;
constexpr double kRight = 20;
constexpr double kTop = 40;
constexpr double kBottom = 90;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Axis {
  double lo, hi;
  double y(double v) const { return kTop + (hi - v) / (hi - lo) * (kHeight - kTop - kBottom); }
};

Axis make_axis(double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) return {-1, 1};
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

std::string header(const std::string& title, const Axis& axis) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
                  num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) +
       "</text>\n";
  s += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) + "\" y2=\"" +
       num(kHeight - kBottom) + "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = axis.lo + (axis.hi - axis.lo) * k / 4.0;
    const double y = axis.y(v);
    s += "<line x1=\"" + num(kLeft - 4) + "\" y1=\"" + num(y) + "\" x2=\"" + num(kLeft) + "\" y2=\"" + num(y) +
         "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(y + 4) + "\" text-anchor=\"end\">" + num(v) + "</text>\n";
  }
  return s;
}

std::string slot_label(double x, const std::string& label) {
  const double y = kHeight - kBottom + 14;
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"end\" transform=\"rotate(-35 " + num(x) +
         " " + num(y) + ")\">" + escape(label) + "</text>\n";
}

std::string hline(const Axis& axis, double v, const char* style) {
  return "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(axis.y(v)) + "\" x2=\"" + num(kWidth - kRight) +
         "\" y2=\"" + num(axis.y(v)) + "\" " + style + "/>\n";
}

}  // namespace

double sample_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ShapeError("sample_quantile: no values");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::string box_plot_svg(const std::string& title, const std::vector<BoxGroup>& groups, double reference) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& g : groups)
    for (double v : g.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (std::isfinite(reference)) {
    lo = std::min(lo, reference);
    hi = std::max(hi, reference);
  }
  const Axis axis = make_axis(lo, hi);
  std::string s = header(title, axis);
  if (std::isfinite(reference)) s += hline(axis, reference, "stroke=\"gray\" stroke-dasharray=\"4 3\"");
  const double slot = (kWidth - kLeft - kRight) / std::max<std::size_t>(groups.size(), 1);
  for (std::size_t k = 0; k < groups.size(); ++k) {
    const double cx = kLeft + slot * (static_cast<double>(k) + 0.5);
    s += slot_label(cx, groups[k].label);
    const auto& v = groups[k].values;
    if (v.empty()) continue;
    const double q1 = sample_quantile(v, 0.25), med = sample_quantile(v, 0.5), q3 = sample_quantile(v, 0.75);
    const double vmin = *std::min_element(v.begin(), v.end()), vmax = *std::max_element(v.begin(), v.end());
    const double half = std::min(18.0, slot * 0.3);
    s += "<line x1=\"" + num(cx) + "\" y1=\"" + num(axis.y(vmax)) + "\" x2=\"" + num(cx) + "\" y2=\"" +
         num(axis.y(vmin)) + "\" stroke=\"black\"/>\n";
    s += "<rect x=\"" + num(cx - half) + "\" y=\"" + num(axis.y(q3)) + "\" width=\"" + num(2 * half) +
         "\" height=\"" + num(axis.y(q1) - axis.y(q3)) + "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + num(cx - half) + "\" y1=\"" + num(axis.y(med)) + "\" x2=\"" + num(cx + half) +
         "\" y2=\"" + num(axis.y(med)) + "\" stroke=\"black\" stroke-width=\"2\"/>\n";
  }
  return s + "</svg>\n";
}

std::string interval_plot_svg(const std::string& title, const std::string& x_label,
                              const std::vector<IntervalPoint>& points) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& p : points) {
    lo = std::min({lo, p.lower, p.estimate});
    hi = std::max({hi, p.upper, p.estimate});
  }
  const Axis axis = make_axis(lo, hi);
  std::string s = header(title, axis);
  if (axis.lo < 0 && axis.hi > 0) s += hline(axis, 0.0, "stroke=\"gray\" stroke-dasharray=\"4 3\"");
  const double slot = (kWidth - kLeft - kRight) / std::max<std::size_t>(points.size(), 1);
  for (std::size_t k = 0; k < points.size(); ++k) {
    const double cx = kLeft + slot * (static_cast<double>(k) + 0.5);
    const auto& p = points[k];
    s += slot_label(cx, p.label);
    s += "<line x1=\"" + num(cx) + "\" y1=\"" + num(axis.y(p.upper)) + "\" x2=\"" + num(cx) + "\" y2=\"" +
         num(axis.y(p.lower)) + "\" stroke=\"black\"/>\n";
    s += "<circle cx=\"" + num(cx) + "\" cy=\"" + num(axis.y(p.estimate)) + "\" r=\"4\" fill=\"black\"/>\n";
  }
  s += "<text x=\"" + num((kLeft + kWidth - kRight) / 2) + "\" y=\"" + num(kHeight - 10) +
       "\" text-anchor=\"middle\">" + escape(x_label) + "</text>\n";
  return s + "</svg>\n";
}

}  // namespace stdml
