#pragma once

// Minimal deterministic SVG rendering of percentile bands and flow traces.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "zapq/aggregate.hpp"
#include "zapq/error.hpp"
#include "zapq/odelab.hpp"

namespace zapq::plot {

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
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

constexpr double kWidth = 640, kHeight = 400, kLeft = 70, kRight = 20, kTop = 30, kBottom = 50;

struct Axes {
  double x0, x1, y0, y1;
  bool log_y;

  double fy(double y) const { return log_y ? std::log10(std::max(y, 1e-300)) : y; }
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (fy(y) - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

inline Axes make_axes(const std::vector<double>& xs, const std::vector<double>& ys) {
  bool positive = true;
  for (double y : ys)
    if (!(y > 0.0)) positive = false;
  Axes a{0, 1, 0, 1, positive};
  a.x0 = *std::min_element(xs.begin(), xs.end());
  a.x1 = *std::max_element(xs.begin(), xs.end());
  double lo = a.fy(*std::min_element(ys.begin(), ys.end()));
  double hi = a.fy(*std::max_element(ys.begin(), ys.end()));
  if (a.x1 == a.x0) {
    a.x0 -= 0.5;
    a.x1 += 0.5;
  }
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  a.y0 = lo;
  a.y1 = hi;
  return a;
}

inline void frame(std::ostringstream& out, const Axes& a, const std::string& title, const std::string& xlabel,
                  const std::string& ylabel) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kWidth) << "\" height=\"" << num(kHeight)
      << "\" viewBox=\"0 0 " << num(kWidth) << ' ' << num(kHeight) << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const double xl = kLeft, xr = kWidth - kRight, yt = kTop, yb = kHeight - kBottom;
  out << "<path d=\"M" << num(xl) << ',' << num(yt) << " L" << num(xl) << ',' << num(yb) << " L" << num(xr) << ','
      << num(yb) << "\" stroke=\"black\" fill=\"none\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = a.x0 + (a.x1 - a.x0) * k / 4.0;
    const double fyv = a.y0 + (a.y1 - a.y0) * k / 4.0;
    const double x = a.px(fx), y = kHeight - kBottom - (kHeight - kTop - kBottom) * k / 4.0;
    out << "<text x=\"" << num(x) << "\" y=\"" << num(yb + 16) << "\" font-size=\"11\" text-anchor=\"middle\">"
        << label(fx) << "</text>\n";
    out << "<text x=\"" << num(xl - 6) << "\" y=\"" << num(y + 4) << "\" font-size=\"11\" text-anchor=\"end\">"
        << label(a.log_y ? std::pow(10.0, fyv) : fyv) << "</text>\n";
  }
  out << "<text x=\"" << num((xl + xr) / 2) << "\" y=\"" << num(kHeight - 10)
      << "\" font-size=\"13\" text-anchor=\"middle\">" << escape(xlabel) << "</text>\n";
  out << "<text x=\"16\" y=\"" << num((yt + yb) / 2) << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << num((yt + yb) / 2) << ")\">" << escape(ylabel + (a.log_y ? " (log scale)" : "")) << "</text>\n";
  out << "<text x=\"" << num((xl + xr) / 2) << "\" y=\"18\" font-size=\"14\" text-anchor=\"middle\">" << escape(title)
      << "</text>\n";
}

inline void polyline(std::ostringstream& out, const Axes& a, const std::vector<double>& xs,
                     const std::vector<double>& ys, const std::string& color) {
  if (xs.size() == 1) {
    out << "<circle cx=\"" << num(a.px(xs[0])) << "\" cy=\"" << num(a.py(ys[0])) << "\" r=\"3\" fill=\"" << color
        << "\"/>\n";
    return;
  }
  out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) out << (i ? " " : "") << num(a.px(xs[i])) << ',' << num(a.py(ys[i]));
  out << "\"/>\n";
}

inline void band(std::ostringstream& out, const Axes& a, const std::vector<double>& xs, const std::vector<double>& lo,
                 const std::vector<double>& hi, const std::string& color) {
  if (xs.size() < 2) return;
  out << "<polygon fill=\"" << color << "\" stroke=\"none\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) out << (i ? " " : "") << num(a.px(xs[i])) << ',' << num(a.py(hi[i]));
  for (std::size_t i = xs.size(); i-- > 0;) out << ' ' << num(a.px(xs[i])) << ',' << num(a.py(lo[i]));
  out << "\"/>\n";
}

}  // namespace detail

/// Percentile bands (10-90, 25-75) and the median against n.
inline std::string svg(const AggregateResult& agg) {
  require(!agg.empty(), ErrorCode::EmptyInput, "plot: aggregate result has no checkpoints");
  std::vector<double> xs, all;
  std::vector<std::vector<double>> cols(percentile_levels().size());
  for (std::size_t k = 0; k < agg.n.size(); ++k) {
    xs.push_back(static_cast<double>(agg.n[k]));
    for (std::size_t j = 0; j < cols.size(); ++j) {
      cols[j].push_back(agg.percentiles[k][j]);
      all.push_back(agg.percentiles[k][j]);
    }
  }
  const auto a = detail::make_axes(xs, all);
  std::ostringstream out;
  detail::frame(out, a, agg.metric + " by percentile", "iteration n", agg.metric);
  detail::band(out, a, xs, cols[0], cols[4], "#c6dbef");
  detail::band(out, a, xs, cols[1], cols[3], "#6baed6");
  detail::polyline(out, a, xs, cols[2], "#08306b");
  out << "</svg>\n";
  return out.str();
}

/// |fbar(w_t)| against t.
inline std::string svg(const FlowTrace& tr) {
  require(tr.size() > 0, ErrorCode::EmptyInput, "plot: flow trace is empty");
  const auto a = detail::make_axes(tr.times, tr.f_norms);
  std::ostringstream out;
  detail::frame(out, a, "flow", "t", "|fbar(w_t)|");
  detail::polyline(out, a, tr.times, tr.f_norms, "#08306b");
  out << "</svg>\n";
  return out.str();
}

}  // namespace zapq::plot
