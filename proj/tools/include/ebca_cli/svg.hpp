#pragma once

#include <string>
#include <vector>

#include "ebca/matrix.hpp"

namespace ebca::cli {

// Minimal SVG line-plot writer. CSV files remain the normative artifacts;
// these plots exist for eyeballing runs.
class LinePlot {
 public:
  LinePlot(std::string title, std::string x_label, std::string y_label);

  void add_series(std::string label, Vector xs, Vector ys, std::string color);
  // Shaded band between lo and hi, e.g. mean +- std.
  void add_band(Vector xs, Vector lo, Vector hi, std::string color);

  void write(const std::string& path) const;

 private:
  struct Series {
    std::string label;
    Vector xs, ys;
    std::string color;
  };
  struct Band {
    Vector xs, lo, hi;
    std::string color;
  };

  std::string title_, x_label_, y_label_;
  std::vector<Series> series_;
  std::vector<Band> bands_;
};

}  // namespace ebca::cli
