#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ebca {

enum class Variant { baseline, ebcu };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

// One energy observation per (sampling step, layer) taken at layer entry,
// before any context update. e_cond is the query-conditional energy of the
// main context with alpha = 0; e_prior is the context prior energy.
struct EnergyRecord {
  long t = 0;
  long layer = 0;
  Variant variant = Variant::baseline;
  double e_cond = 0.0;
  double e_prior = 0.0;
};

using EnergyTrace = std::vector<EnergyRecord>;

// CSV schema: header "t,layer,variant,e_cond,e_prior", floats with 17
// significant digits.
void write_trace_csv(const EnergyTrace& trace, std::ostream& os);
void write_trace_csv(const EnergyTrace& trace, const std::string& path);
EnergyTrace read_trace_csv(std::istream& is);
EnergyTrace read_trace_csv(const std::string& path);

}  // namespace ebca
