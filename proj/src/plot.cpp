#include "otcrf/plot.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "otcrf/analysis.hpp"
#include "otcrf/error.hpp"

namespace otcrf {

namespace {

constexpr double kWidth = 720, kHeight = 440, kLeft = 80, kRight = 20, kTop = 40, kBottom = 90;

std::optional<DecayFit> try_fit(const std::vector<double>& t, const std::vector<double>& v, double t0) {
  std::vector<double> tt, vv;
  for (std::size_t k = 0; k < t.size(); ++k)
    if (v[k] > 0.0) {
      tt.push_back(t[k]);
      vv.push_back(v[k]);
    }
  try {
    return fit_decay(tt, vv, t0, t.back());
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

}  // namespace

std::vector<double> series_column(const std::vector<ObservableRecord>& records, const std::string& name) {
  const auto& names = ObservableRecord::names();
  std::size_t col = names.size();
  for (std::size_t k = 0; k < names.size(); ++k)
    if (names[k] == name) col = k;
  if (col == names.size()) throw Error(ErrorCode::UnknownSeries, fmt::format("unknown series '{}'", name));
  std::vector<double> out;
  for (const auto& r : records) out.push_back(r.values()[col]);
  return out;
}

std::string plot_caption(const std::vector<ObservableRecord>& records, const PlotSpec& spec, double window_start) {
  const auto v = series_column(records, spec.series);
  if (!spec.log_y) return fmt::format("{}: min {:.6g}, max {:.6g}", spec.series, *std::min_element(v.begin(), v.end()),
                                      *std::max_element(v.begin(), v.end()));
  const auto t = series_column(records, "t");
  const auto fit = try_fit(t, v, window_start);
  if (!fit) return fmt::format("{}: no decay fit on [{:g}, {:g}]", spec.series, window_start, t.back());
  std::string cap = fmt::format("{}: fitted rate {:.6f} on [{:g}, {:g}]", spec.series, fit->rate, fit->t0, fit->t1);
  for (double s : spec.slopes) cap += fmt::format(", gap to slope {:g}: {:.3g}", s, std::abs(-fit->rate - s));
  return cap;
}

void write_svg(std::ostream& out, const std::vector<ObservableRecord>& records, const PlotSpec& spec,
               double window_start) {
  if (records.empty()) throw Error(ErrorCode::MissingInput, "time series has no records");
  const auto v = series_column(records, spec.series);
  const auto t = series_column(records, "t");
  const std::string caption = plot_caption(records, spec, window_start);

  std::vector<double> xs, ys;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (spec.log_y && !(v[k] > 0.0)) continue;
    xs.push_back(t[k]);
    ys.push_back(spec.log_y ? std::log10(v[k]) : v[k]);
  }
  const double tmin = t.front(), tmax = std::max(t.back(), t.front() + 1e-12);
  double ymin = 0.0, ymax = 1.0;
  if (!ys.empty()) {
    ymin = *std::min_element(ys.begin(), ys.end());
    ymax = *std::max_element(ys.begin(), ys.end());
  }
  if (spec.log_y) {
    ymin = std::floor(ymin);
    ymax = std::ceil(ymax);
  }
  if (ymax - ymin < 1e-12) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + pw * (x - tmin) / (tmax - tmin); };
  auto py = [&](double y) { return kTop + ph * (1.0 - (y - ymin) / (ymax - ymin)); };

  fmt::print(out, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
  fmt::print(out,
             "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0:g}\" height=\"{1:g}\" viewBox=\"0 0 {0:g} {1:g}\">\n",
             kWidth, kHeight);
  fmt::print(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
  fmt::print(out, "<text x=\"{:g}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\">{}{}</text>\n", kLeft,
             escape(spec.series), spec.log_y ? " (log scale)" : "");
  fmt::print(out, "<rect x=\"{:g}\" y=\"{:g}\" width=\"{:g}\" height=\"{:g}\" fill=\"none\" stroke=\"black\"/>\n", kLeft,
             kTop, pw, ph);

  const int xticks = 6;
  for (int k = 0; k <= xticks; ++k) {
    const double x = tmin + (tmax - tmin) * k / xticks;
    fmt::print(out, "<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{0:.2f}\" y2=\"{2:.2f}\" stroke=\"#ccc\"/>\n", px(x), kTop,
               kTop + ph);
    fmt::print(out,
               "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"11\" "
               "text-anchor=\"middle\">{:g}</text>\n",
               px(x), kTop + ph + 16, x);
  }
  const int span = spec.log_y ? static_cast<int>(ymax - ymin) : 5;
  const int ystep = spec.log_y ? std::max(1, span / 8) : 1;
  for (int k = 0; k <= span; k += ystep) {
    const double y = spec.log_y ? ymin + k : ymin + (ymax - ymin) * k / span;
    const std::string label = spec.log_y ? fmt::format("1e{}", static_cast<int>(std::lround(y))) : fmt::format("{:.4g}", y);
    fmt::print(out, "<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"#ccc\"/>\n", kLeft, py(y),
               kLeft + pw, py(y));
    fmt::print(out,
               "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"11\" "
               "text-anchor=\"end\">{}</text>\n",
               kLeft - 6, py(y) + 4, label);
  }
  fmt::print(out,
             "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"12\" "
             "text-anchor=\"middle\">flow time t</text>\n",
             kLeft + pw / 2, kTop + ph + 36);

  if (!xs.empty()) {
    fmt::print(out, "<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"2\" points=\"");
    for (std::size_t k = 0; k < xs.size(); ++k) fmt::print(out, "{}{:.2f},{:.2f}", k ? " " : "", px(xs[k]), py(ys[k]));
    fmt::print(out, "\"/>\n");
  }

  if (spec.log_y) {
    if (const auto fit = try_fit(t, v, window_start)) {
      const double y0 = std::log10(fit->C) - fit->rate * fit->t0 / std::log(10.0);
      const char* colors[] = {"#c0392b", "#27ae60", "#8e44ad", "#d35400"};
      for (std::size_t k = 0; k < spec.slopes.size(); ++k) {
        const double s = spec.slopes[k] / std::log(10.0);
        const double y1 = y0 + s * (tmax - fit->t0);
        fmt::print(out,
                   "<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"{}\" "
                   "stroke-dasharray=\"6,4\"/>\n",
                   px(fit->t0), py(y0), px(tmax), py(y1), colors[k % 4]);
        fmt::print(out, "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{}\">slope {:g}</text>\n",
                   px(tmax) - 60, py(y1) - 6, colors[k % 4], spec.slopes[k]);
      }
    }
  }
  fmt::print(out, "<text x=\"{:g}\" y=\"{:g}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n", kLeft,
             kHeight - 18, escape(caption));
  fmt::print(out, "</svg>\n");
}

}  // namespace otcrf
