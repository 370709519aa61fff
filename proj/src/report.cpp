#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "icl/experiment.hpp"

namespace icl {

std::string format_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void write_rows_csv(const std::string& path, const std::string& axis_name,
                    const std::vector<SweepRow>& rows) {
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot open output file: " + path);
  out << "axis,value,mc_mean,mc_stderr,theory,theory_valid,z\n";
  for (const auto& r : rows) {
    const bool ok = r.status == "ok";
    out << axis_name << ',' << format_g17(r.value) << ','
        << format_g17(ok ? r.estimate.mean : std::nan("")) << ','
        << format_g17(ok ? r.estimate.std_error : std::nan("")) << ','
        << format_g17(r.theory.valid ? r.theory.value : std::nan("")) << ','
        << (r.theory.valid ? 1 : 0) << ',' << format_g17(r.z) << '\n';
  }
  if (!out)
    throw std::runtime_error("failed writing: " + path);
}

namespace {

struct Mapper {
  double lo, hi;
  double px0, px1;
  bool log_scale;
  double operator()(double x) const {
    const double t = log_scale ? (std::log(x) - std::log(lo)) /
                                     (std::log(hi) - std::log(lo))
                               : (x - lo) / (hi - lo);
    return px0 + t * (px1 - px0);
  }
};

}  // namespace

// Self-contained line plot: theory curve, MC points with 1-sigma bars.
void write_svg_plot(const std::string& path, const std::string& axis_name,
                    const std::vector<SweepRow>& rows, bool log_x,
                    bool log_y) {
  std::vector<const SweepRow*> ok;
  for (const auto& r : rows)
    if (r.status == "ok") ok.push_back(&r);
  if (ok.empty()) return;

  double xlo = 1e300, xhi = -1e300, ylo = 1e300, yhi = -1e300;
  for (const auto* r : ok) {
    xlo = std::min(xlo, r->value);
    xhi = std::max(xhi, r->value);
    auto take = [&](double y) {
      if (!std::isfinite(y)) return;
      if (log_y && y <= 0) return;
      ylo = std::min(ylo, y);
      yhi = std::max(yhi, y);
    };
    take(r->estimate.mean - r->estimate.std_error);
    take(r->estimate.mean + r->estimate.std_error);
    if (r->theory.valid) take(r->theory.value);
  }
  if (!(xhi > xlo)) { xlo -= 0.5; xhi += 0.5; }
  if (!(yhi > ylo)) { ylo = ylo - 0.5; yhi = yhi + 0.5; }
  if (log_x && xlo <= 0) log_x = false;
  if (log_y && ylo <= 0) log_y = false;

  const double W = 640, H = 440, ML = 70, MR = 20, MT = 20, MB = 50;
  Mapper mx{xlo, xhi, ML, W - MR, log_x};
  Mapper my{ylo, yhi, H - MB, MT, log_y};  // y axis points up

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W
      << "' height='" << H << "' viewBox='0 0 " << W << ' ' << H << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<line x1='" << ML << "' y1='" << H - MB << "' x2='" << W - MR
      << "' y2='" << H - MB << "' stroke='black'/>\n";
  out << "<line x1='" << ML << "' y1='" << MT << "' x2='" << ML << "' y2='"
      << H - MB << "' stroke='black'/>\n";
  out << "<text x='" << (ML + W - MR) / 2 << "' y='" << H - 12
      << "' text-anchor='middle' font-size='14'>" << axis_name << "</text>\n";
  out << "<text x='16' y='" << (MT + H - MB) / 2
      << "' text-anchor='middle' font-size='14' transform='rotate(-90 16 "
      << (MT + H - MB) / 2 << ")'>prediction loss</text>\n";

  // theory polyline over valid rows
  bool first = true;
  std::string pts;
  for (const auto* r : ok) {
    if (!r->theory.valid || !std::isfinite(r->theory.value)) continue;
    if (log_y && r->theory.value <= 0) continue;
    pts += (first ? "" : " ") + std::to_string(mx(r->value)) + "," +
           std::to_string(my(r->theory.value));
    first = false;
  }
  if (!pts.empty())
    out << "<polyline points='" << pts
        << "' fill='none' stroke='#1f77b4' stroke-width='1.5'/>\n";

  // MC points with 1-sigma error bars
  for (const auto* r : ok) {
    const double m = r->estimate.mean, s = r->estimate.std_error;
    if (!std::isfinite(m) || (log_y && m <= 0)) continue;
    const double x = mx(r->value);
    double y0 = m - s, y1 = m + s;
    if (log_y) y0 = std::max(y0, ylo);
    out << "<line x1='" << x << "' y1='" << my(y0) << "' x2='" << x
        << "' y2='" << my(y1) << "' stroke='#d62728'/>\n";
    out << "<circle cx='" << x << "' cy='" << my(m)
        << "' r='3' fill='#d62728'/>\n";
  }

  // axis end labels
  out << "<text x='" << ML << "' y='" << H - MB + 18
      << "' font-size='11' text-anchor='middle'>" << format_g17(xlo).substr(0, 8)
      << "</text>\n";
  out << "<text x='" << W - MR << "' y='" << H - MB + 18
      << "' font-size='11' text-anchor='middle'>" << format_g17(xhi).substr(0, 8)
      << "</text>\n";
  out << "<text x='" << ML - 6 << "' y='" << my(ylo)
      << "' font-size='11' text-anchor='end'>" << format_g17(ylo).substr(0, 8)
      << "</text>\n";
  out << "<text x='" << ML - 6 << "' y='" << my(yhi) + 8
      << "' font-size='11' text-anchor='end'>" << format_g17(yhi).substr(0, 8)
      << "</text>\n";
  out << "</svg>\n";
}

}  // namespace icl
