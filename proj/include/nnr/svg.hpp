#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "nnr/csv.hpp"
#include "nnr/harness.hpp"

namespace nnr {

struct SvgSeries {
  std::string label;
  std::vector<double> x, y, err;  // err optional (same length as y)
};

namespace detail {

inline const char* series_color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                  "#8c564b", "#17becf", "#7f7f7f", "#bcbd22", "#e377c2"};
  return palette[i % 10];
}

inline std::vector<double> axis_ticks(double lo, double hi, bool log_scale) {
  std::vector<double> ticks;
  if (log_scale) {
    const int e0 = static_cast<int>(std::floor(std::log10(lo)));
    const int e1 = static_cast<int>(std::ceil(std::log10(hi)));
    for (int e = e0; e <= e1; ++e) {
      const double v = std::pow(10.0, e);
      if (v >= lo * 0.999 && v <= hi * 1.001) ticks.push_back(v);
    }
    if (ticks.size() < 2) ticks = {lo, hi};
  } else {
    const double span = hi - lo;
    const double step = std::pow(10.0, std::floor(std::log10(span / 4.0)));
    const double mult = span / step > 8.0 ? 2.0 : 1.0;
    for (double v = std::ceil(lo / (step * mult)) * step * mult; v <= hi + 1e-12 * span;
         v += step * mult)
      ticks.push_back(v);
  }
  return ticks;
}

}  // namespace detail

//! Minimal self-contained SVG line chart. Log axes follow the usual MSE
//! presentation; series with error data get vertical bars.
inline void write_svg_chart(std::ostream& os, const std::string& title,
                            const std::string& x_label, const std::string& y_label,
                            const std::vector<SvgSeries>& series, bool log_x, bool log_y) {
  const double width = 720, height = 480;
  const double ml = 70, mr = 180, mt = 40, mb = 55;

  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double y_lo = x_lo, y_hi = -x_lo;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (log_x && s.x[i] <= 0.0) continue;
      if (log_y && s.y[i] <= 0.0) continue;
      x_lo = std::min(x_lo, s.x[i]);
      x_hi = std::max(x_hi, s.x[i]);
      y_lo = std::min(y_lo, s.y[i]);
      y_hi = std::max(y_hi, s.y[i]);
    }
  if (!(x_lo < x_hi)) x_hi = x_lo + 1.0;
  if (!(y_lo < y_hi)) y_hi = y_lo + 1.0;
  if (!log_y) {
    const double pad = 0.08 * (y_hi - y_lo);
    y_lo -= pad;
    y_hi += pad;
  }

  auto tx = [&](double v) {
    const double t = log_x ? (std::log(v) - std::log(x_lo)) / (std::log(x_hi) - std::log(x_lo))
                           : (v - x_lo) / (x_hi - x_lo);
    return ml + t * (width - ml - mr);
  };
  auto ty = [&](double v) {
    const double t = log_y ? (std::log(v) - std::log(y_lo)) / (std::log(y_hi) - std::log(y_lo))
                           : (v - y_lo) / (y_hi - y_lo);
    return height - mb - t * (height - mt - mb);
  };

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << (ml + (width - ml - mr) / 2) << "\" y=\"24\" text-anchor=\"middle\" "
     << "font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";

  // axes
  os << "<line x1=\"" << ml << "\" y1=\"" << (height - mb) << "\" x2=\"" << (width - mr)
     << "\" y2=\"" << (height - mb) << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
     << (height - mb) << "\" stroke=\"black\"/>\n";

  for (double v : detail::axis_ticks(x_lo, x_hi, log_x)) {
    const double px = tx(v);
    os << "<line x1=\"" << px << "\" y1=\"" << (height - mb) << "\" x2=\"" << px << "\" y2=\""
       << (height - mb + 5) << "\" stroke=\"black\"/>\n"
       << "<text x=\"" << px << "\" y=\"" << (height - mb + 20)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
       << format_double(v) << "</text>\n";
  }
  for (double v : detail::axis_ticks(y_lo, y_hi, log_y)) {
    const double py = ty(v);
    os << "<line x1=\"" << (ml - 5) << "\" y1=\"" << py << "\" x2=\"" << ml << "\" y2=\"" << py
       << "\" stroke=\"black\"/>\n"
       << "<text x=\"" << (ml - 9) << "\" y=\"" << (py + 4)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
       << format_double(v) << "</text>\n";
  }
  os << "<text x=\"" << (ml + (width - ml - mr) / 2) << "\" y=\"" << (height - 12)
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << x_label
     << "</text>\n"
     << "<text x=\"18\" y=\"" << (mt + (height - mt - mb) / 2)
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
     << "transform=\"rotate(-90 18 " << (mt + (height - mt - mb) / 2) << ")\">" << y_label
     << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = detail::series_color(si);
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i]) || (log_y && s.y[i] <= 0.0)) continue;
      pts += format_double(tx(s.x[i])) + "," + format_double(ty(s.y[i])) + " ";
      if (!s.err.empty() && std::isfinite(s.err[i])) {
        const double y_top = log_y ? std::max(s.y[i] - s.err[i], y_lo) : s.y[i] - s.err[i];
        os << "<line x1=\"" << tx(s.x[i]) << "\" y1=\"" << ty(std::max(y_top, y_lo)) << "\" x2=\""
           << tx(s.x[i]) << "\" y2=\"" << ty(std::min(s.y[i] + s.err[i], y_hi)) << "\" stroke=\""
           << color << "\" stroke-width=\"1\" opacity=\"0.6\"/>\n";
      }
    }
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.6\" points=\""
       << pts << "\"/>\n";
    const double ly = mt + 16.0 * static_cast<double>(si);
    os << "<line x1=\"" << (width - mr + 10) << "\" y1=\"" << ly << "\" x2=\"" << (width - mr + 34)
       << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
       << "<text x=\"" << (width - mr + 40) << "\" y=\"" << (ly + 4)
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.label << "</text>\n";
  }
  os << "</svg>\n";
}

//! Chart assembly for a finished benchmark: series keyed by the group
//! structure, axes chosen by the config's plot hints.
inline void write_figure_svg(std::ostream& os, const ExperimentSpec& spec,
                             const std::vector<SummaryRow>& summaries) {
  struct Key {
    std::size_t d;
    std::string rest;
    bool operator<(const Key& o) const { return std::tie(d, rest) < std::tie(o.d, o.rest); }
  };

  auto parse_d = [](const std::string& group) {
    return static_cast<std::size_t>(std::stoul(group.substr(1)));
  };

  const bool x_is_n = spec.plot.x != "k";
  const bool y_is_mean = spec.plot.y == "mean";

  std::map<std::string, std::size_t> param_counts;
  for (const auto& e : spec.estimators) {
    std::string name = estimator_name(e.kind);
    param_counts[name] = std::max(param_counts[name], e.params());
  }

  std::map<Key, SvgSeries> series_map;
  std::vector<Key> order;
  for (const auto& s : summaries) {
    if (s.trials == 0) continue;
    const std::size_t d = parse_d(s.group);
    const std::string param_tag = s.group.substr(s.group.rfind('/') + 1);

    Key key;
    key.d = d;
    std::string label;
    double x;
    if (x_is_n) {
      const bool tuned = param_counts[s.estimator] > 6;
      key.rest = s.estimator + (tuned ? "" : "/" + param_tag);
      label = s.estimator + (tuned ? " (tuned)" : " " + param_tag);
      x = static_cast<double>(s.n);
    } else {
      key.rest = "n" + std::to_string(s.n) + "/" + s.estimator;
      label = s.estimator + " n=" + std::to_string(s.n);
      x = s.param;
    }
    if (spec.d_values.size() > 1) label = "d=" + std::to_string(d) + " " + label;

    auto [it, inserted] = series_map.try_emplace(key);
    if (inserted) {
      it->second.label = label;
      order.push_back(key);
    }
    auto& sd = it->second;
    const double y = y_is_mean ? s.mean : s.mse;
    bool merged = false;
    if (x_is_n && param_counts[s.estimator] > 6) {
      // tuned series: keep the best value per x
      for (std::size_t i = 0; i < sd.x.size() && !merged; ++i) {
        if (sd.x[i] == x) {
          if (y < sd.y[i]) sd.y[i] = y;
          merged = true;
        }
      }
    }
    if (!merged) {
      sd.x.push_back(x);
      sd.y.push_back(y);
      if (y_is_mean) sd.err.push_back(s.stddev);
    }
  }

  std::vector<SvgSeries> series;
  for (const auto& k : order) series.push_back(series_map[k]);

  write_svg_chart(os, spec.name + " — " + spec.divergence.name(), x_is_n ? "N" : "k",
                  y_is_mean ? "mean estimate" : "MSE", series, true, !y_is_mean);
}

}  // namespace nnr
