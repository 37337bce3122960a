#include "ebca_cli/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace ebca::cli {

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 440.0;
constexpr double kLeft = 72.0;
constexpr double kRight = 24.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 52.0;

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

struct Bounds {
  double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;

  void include(const Vector& xs, const Vector& ys, bool first) {
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (first && i == 0) {
        x_min = x_max = xs[0];
        y_min = y_max = ys[0];
      }
      x_min = std::min(x_min, xs[i]);
      x_max = std::max(x_max, xs[i]);
      y_min = std::min(y_min, ys[i]);
      y_max = std::max(y_max, ys[i]);
    }
  }

  void pad() {
    if (x_max == x_min) {
      x_min -= 1.0;
      x_max += 1.0;
    }
    if (y_max == y_min) {
      y_min -= 1.0;
      y_max += 1.0;
    }
    const double yr = y_max - y_min;
    y_min -= 0.05 * yr;
    y_max += 0.05 * yr;
  }
};

}  // namespace

LinePlot::LinePlot(std::string title, std::string x_label, std::string y_label)
    : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

void LinePlot::add_series(std::string label, Vector xs, Vector ys, std::string color) {
  if (xs.size() != ys.size() || xs.empty()) {
    throw std::invalid_argument("LinePlot: series needs matching nonempty xs/ys");
  }
  series_.push_back({std::move(label), std::move(xs), std::move(ys), std::move(color)});
}

void LinePlot::add_band(Vector xs, Vector lo, Vector hi, std::string color) {
  if (xs.size() != lo.size() || xs.size() != hi.size() || xs.empty()) {
    throw std::invalid_argument("LinePlot: band needs matching nonempty xs/lo/hi");
  }
  bands_.push_back({std::move(xs), std::move(lo), std::move(hi), std::move(color)});
}

void LinePlot::write(const std::string& path) const {
  if (series_.empty()) throw std::invalid_argument("LinePlot: nothing to draw");
  Bounds b;
  bool first = true;
  for (const Series& s : series_) {
    b.include(s.xs, s.ys, first);
    first = false;
  }
  for (const Band& band : bands_) {
    b.include(band.xs, band.lo, first);
    b.include(band.xs, band.hi, false);
  }
  b.pad();

  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - b.x_min) / (b.x_max - b.x_min) * plot_w; };
  auto py = [&](double y) { return kTop + (b.y_max - y) / (b.y_max - b.y_min) * plot_h; };

  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write plot: " + path);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
     << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" "
     << "font-family=\"sans-serif\" font-size=\"15\">" << title_ << "</text>\n";

  for (const Band& band : bands_) {
    os << "<polygon fill=\"" << band.color << "\" fill-opacity=\"0.18\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < band.xs.size(); ++i) {
      os << num(px(band.xs[i])) << ',' << num(py(band.hi[i])) << ' ';
    }
    for (std::size_t i = band.xs.size(); i-- > 0;) {
      os << num(px(band.xs[i])) << ',' << num(py(band.lo[i])) << ' ';
    }
    os << "\"/>\n";
  }

  // Axes with five ticks each.
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w
     << "\" y2=\"" << kTop + plot_h << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
     << kTop + plot_h << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = b.x_min + (b.x_max - b.x_min) * i / 4.0;
    const double fy = b.y_min + (b.y_max - b.y_min) * i / 4.0;
    os << "<line x1=\"" << num(px(fx)) << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << num(px(fx))
       << "\" y2=\"" << kTop + plot_h + 5 << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << num(px(fx)) << "\" y=\"" << kTop + plot_h + 20
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << num(fx)
       << "</text>\n";
    os << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << num(py(fy)) << "\" x2=\"" << kLeft
       << "\" y2=\"" << num(py(fy)) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << kLeft - 8 << "\" y=\"" << num(py(fy) + 4)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << num(fy)
       << "</text>\n";
  }
  os << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 14
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << x_label_
     << "</text>\n";
  os << "<text x=\"16\" y=\"" << kTop + plot_h / 2
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
     << "transform=\"rotate(-90 16 " << kTop + plot_h / 2 << ")\">" << y_label_ << "</text>\n";

  for (const Series& s : series_) {
    os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      os << num(px(s.xs[i])) << ',' << num(py(s.ys[i])) << ' ';
    }
    os << "\"/>\n";
  }

  double legend_y = kTop + 14;
  for (const Series& s : series_) {
    os << "<line x1=\"" << kLeft + plot_w - 150 << "\" y1=\"" << legend_y - 4 << "\" x2=\""
       << kLeft + plot_w - 126 << "\" y2=\"" << legend_y - 4 << "\" stroke=\"" << s.color
       << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << kLeft + plot_w - 120 << "\" y=\"" << legend_y
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.label << "</text>\n";
    legend_y += 16;
  }
  os << "</svg>\n";
}

}  // namespace ebca::cli
