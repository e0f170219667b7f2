#include "eertrack/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "eertrack/csv_io.hpp"
#include "eertrack/errors.hpp"

namespace eertrack {

namespace {

std::string fmt(double v, int digits = 2) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string svg_header(int w, int h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) + "\" height=\"" +
         std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " + std::to_string(h) +
         "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

/// Round-number tick spacing giving roughly `target` ticks over [0, span].
double tick_step(double span, int target) {
  const double raw = span / std::max(target, 1);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (raw <= m * mag) return m * mag;
  }
  return 10.0 * mag;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out << text;
}

}  // namespace

std::vector<Band> unobserved_bands(const std::vector<StepRecord>& records) {
  std::vector<Band> bands;
  auto kind_of = [](const StepRecord& r) -> std::optional<BandKind> {
    if (r.observed()) return std::nullopt;
    return r.occluded ? BandKind::kOccluded : BandKind::kOutOfFov;
  };
  for (std::size_t i = 0; i < records.size();) {
    const auto kind = kind_of(records[i]);
    if (!kind) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < records.size() && kind_of(records[j]) == kind) ++j;
    const double end = j < records.size() ? records[j].t : records.back().t;
    bands.push_back({*kind, records[i].t, end});
    i = j;
  }
  return bands;
}

std::string estimation_error_svg(const std::vector<StepRecord>& records) {
  if (records.empty()) throw ConfigError("episode log has no records to plot");
  const int width = 900, height = 360, left = 60, right = 20, top = 30, bottom = 50;
  const double t0 = records.front().t;
  const double t1 = std::max(records.back().t, t0 + 1e-9);
  double y_max = 0.0;
  for (const auto& r : records) y_max = std::max(y_max, r.e_est);
  y_max = y_max > 0.0 ? y_max * 1.05 : 1.0;
  const double pw = width - left - right, ph = height - top - bottom;
  auto sx = [&](double t) { return left + (t - t0) / (t1 - t0) * pw; };
  auto sy = [&](double v) { return top + ph - v / y_max * ph; };

  std::ostringstream s;
  s << svg_header(width, height);
  s << "<text x=\"" << width / 2 << "\" y=\"18\" text-anchor=\"middle\">Estimation error over time</text>\n";
  for (const Band& b : unobserved_bands(records)) {
    const bool occ = b.kind == BandKind::kOccluded;
    s << "<rect class=\"" << (occ ? "band-occluded" : "band-out-of-fov") << "\" x=\"" << fmt(sx(b.t_begin))
      << "\" y=\"" << top << "\" width=\"" << fmt(std::max(sx(b.t_end) - sx(b.t_begin), 1.0)) << "\" height=\""
      << ph << "\" fill=\"" << (occ ? "#e66" : "#999") << "\" fill-opacity=\"0.3\"/>\n";
  }
  s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  const double ty = tick_step(y_max, 5);
  for (double v = 0.0; v <= y_max + 1e-12; v += ty) {
    s << "<text x=\"" << left - 6 << "\" y=\"" << fmt(sy(v) + 4) << "\" text-anchor=\"end\">" << fmt(v) << "</text>\n";
  }
  const double tx = tick_step(t1 - t0, 10);
  for (double t = 0.0; t0 + t <= t1 + 1e-9; t += tx) {
    s << "<text x=\"" << fmt(sx(t0 + t)) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">"
      << fmt(t0 + t, 0) << "</text>\n";
  }
  s << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">time (s)</text>\n";
  s << "<text x=\"14\" y=\"" << top + ph / 2 << "\" transform=\"rotate(-90 14 " << top + ph / 2
    << ")\" text-anchor=\"middle\">estimation error (m)</text>\n";
  s << "<polyline class=\"series\" fill=\"none\" stroke=\"#1f5fbf\" stroke-width=\"1.5\" points=\"";
  for (const auto& r : records) s << fmt(sx(r.t)) << ',' << fmt(sy(r.e_est)) << ' ';
  s << "\"/>\n";
  s << "<rect x=\"" << width - 250 << "\" y=\"" << top + 6
    << "\" width=\"12\" height=\"12\" fill=\"#e66\" fill-opacity=\"0.3\"/><text x=\"" << width - 232 << "\" y=\""
    << top + 16 << "\">occluded</text>\n";
  s << "<rect x=\"" << width - 160 << "\" y=\"" << top + 6
    << "\" width=\"12\" height=\"12\" fill=\"#999\" fill-opacity=\"0.3\"/><text x=\"" << width - 142 << "\" y=\""
    << top + 16 << "\">outside FOV</text>\n";
  s << "</svg>\n";
  return s.str();
}

std::string comparison_svg(const std::vector<CompareRow>& rows) {
  std::vector<CompareRow> agg;
  for (const auto& r : rows) {
    if (r.seed == "mean") agg.push_back(r);
  }
  if (agg.empty()) throw ConfigError("comparison table has no aggregate rows to plot");
  struct Metric {
    const char* label;
    double CompareRow::*field;
  };
  const Metric metrics[] = {{"mean e (m)", &CompareRow::mean_e},
                            {"mean estimation error (m)", &CompareRow::mean_e_est},
                            {"mean det(Sigma) (m^4)", &CompareRow::mean_det_cov}};
  const char* colors[] = {"#1f5fbf", "#d9822b", "#3a9a4a", "#8e44ad", "#666666"};
  const int panel_w = 260, gap = 30, left = 50, top = 40, ph = 220, bottom = 60;
  const int width = left + 3 * panel_w + 2 * gap + 20, height = top + ph + bottom;
  std::ostringstream s;
  s << svg_header(width, height);
  s << "<text x=\"" << width / 2 << "\" y=\"18\" text-anchor=\"middle\">Policy comparison (mean over seeds)</text>\n";
  for (int m = 0; m < 3; ++m) {
    const double x0 = left + m * (panel_w + gap);
    double vmax = 0.0;
    for (const auto& r : agg) vmax = std::max(vmax, r.*(metrics[m].field));
    vmax = vmax > 0.0 ? vmax * 1.1 : 1.0;
    s << "<g class=\"group\">\n";
    s << "<rect x=\"" << x0 << "\" y=\"" << top << "\" width=\"" << panel_w << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    s << "<text x=\"" << x0 + panel_w / 2 << "\" y=\"" << top + ph + 40 << "\" text-anchor=\"middle\">"
      << metrics[m].label << "</text>\n";
    const double bw = static_cast<double>(panel_w) / (static_cast<double>(agg.size()) + 1.0);
    for (std::size_t i = 0; i < agg.size(); ++i) {
      const double v = agg[i].*(metrics[m].field);
      const double h = v / vmax * ph;
      const double bx = x0 + bw * (static_cast<double>(i) + 0.5);
      s << "<rect class=\"bar\" x=\"" << fmt(bx) << "\" y=\"" << fmt(top + ph - h) << "\" width=\"" << fmt(bw * 0.9)
        << "\" height=\"" << fmt(h) << "\" fill=\"" << colors[i % 5] << "\"/>\n";
      s << "<text x=\"" << fmt(bx + bw * 0.45) << "\" y=\"" << fmt(top + ph - h - 4)
        << "\" text-anchor=\"middle\" font-size=\"10\">" << fmt(v, v < 0.01 ? 6 : 3) << "</text>\n";
      s << "<text x=\"" << fmt(bx + bw * 0.45) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">"
        << to_string(agg[i].policy) << "</text>\n";
    }
    s << "</g>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::vector<std::string> plot_file(const std::string& csv_path, const std::string& out_dir) {
  const std::string header = read_header_line(csv_path);
  std::string svg;
  std::string name;
  if (header == kEpisodeLogHeader) {
    svg = estimation_error_svg(read_episode_log(csv_path));
    name = "estimation_error.svg";
  } else if (header == kCompareHeader) {
    svg = comparison_svg(read_compare(csv_path));
    name = "comparison.svg";
  } else {
    throw ConfigError("'" + csv_path + "' is neither an episode log nor a comparison table");
  }
  std::filesystem::create_directories(out_dir);
  const std::string path = (std::filesystem::path(out_dir) / name).string();
  write_text(path, svg);
  return {path};
}

}  // namespace eertrack
