#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ebca {

struct GradCheckOptions {
  int seeds = 100;
  std::size_t max_keys = 8;     // key tokens per draw
  std::size_t max_queries = 16; // query tokens per draw
  std::size_t max_dim = 8;      // embedding width per draw
  double tol = 1e-6;
  double fd_step = 1e-5;
  std::uint64_t seed = 42;
  // Negates the analytic key gradient so the harness must flag a failure;
  // exists to prove the checks can fail.
  bool inject_sign_flip = false;
};

struct CheckResult {
  std::string name;
  int seeds_run = 0;
  double max_rel_err = 0.0;
  std::uint64_t worst_seed = 0;
  bool passed = false;
};

// Central finite differences against every analytic gradient exported by the
// library. Each named check draws random shapes and parameters per seed and
// records the worst relative error:
//   max_abs_diff(fd, analytic) / max(inf_norm(fd), inf_norm(analytic), 1e-12)
std::vector<CheckResult> run_gradient_checks(const GradCheckOptions& opt);

}  // namespace ebca
