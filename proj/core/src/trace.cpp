#include "ebca/trace.hpp"

#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "ebca/matrix.hpp"

namespace ebca {

std::string variant_name(Variant v) {
  return v == Variant::baseline ? "baseline" : "ebcu";
}

Variant variant_from_name(const std::string& name) {
  if (name == "baseline") return Variant::baseline;
  if (name == "ebcu") return Variant::ebcu;
  throw std::domain_error("unknown variant: " + name);
}

void write_trace_csv(const EnergyTrace& trace, std::ostream& os) {
  os << "t,layer,variant,e_cond,e_prior\n";
  for (const EnergyRecord& r : trace) {
    os << r.t << ',' << r.layer << ',' << variant_name(r.variant) << ','
       << format_double(r.e_cond) << ',' << format_double(r.e_prior) << '\n';
  }
}

void write_trace_csv(const EnergyTrace& trace, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  write_trace_csv(trace, os);
}

EnergyTrace read_trace_csv(std::istream& is) {
  EnergyTrace trace;
  std::string line;
  if (!std::getline(is, line) || line != "t,layer,variant,e_cond,e_prior") {
    throw std::domain_error("trace CSV: bad header");
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f;
    EnergyRecord r;
    std::getline(ss, f, ',');
    r.t = std::stol(f);
    std::getline(ss, f, ',');
    r.layer = std::stol(f);
    std::getline(ss, f, ',');
    r.variant = variant_from_name(f);
    std::getline(ss, f, ',');
    r.e_cond = parse_double(f);
    std::getline(ss, f, ',');
    r.e_prior = parse_double(f);
    trace.push_back(r);
  }
  return trace;
}

EnergyTrace read_trace_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  return read_trace_csv(is);
}

}  // namespace ebca
