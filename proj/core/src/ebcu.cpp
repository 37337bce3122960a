#include "ebca/ebcu.hpp"

#include <cmath>
#include <stdexcept>

#include "ebca/numerics.hpp"
#include "ebca/summation.hpp"

namespace ebca {

void validate_schedule(const ScheduleSpec& spec) {
  if (spec.gamma0 < 0.0) throw std::domain_error("schedule: gamma0 must be nonnegative");
  if (spec.kind == ScheduleKind::step && spec.tau < 0) {
    throw std::domain_error("schedule: tau must be nonnegative");
  }
  if (spec.kind == ScheduleKind::exp_decay &&
      !(spec.lambda > 0.0 && spec.lambda <= 1.0)) {
    throw std::domain_error("schedule: lambda must be in (0, 1]");
  }
}

double schedule_profile(const ScheduleSpec& spec, long t) {
  if (t < 0) throw std::domain_error("schedule: t must be nonnegative");
  validate_schedule(spec);
  switch (spec.kind) {
    case ScheduleKind::constant:
      return 1.0;
    case ScheduleKind::step:
      return t > spec.tau ? 1.0 : 0.0;
    case ScheduleKind::exp_decay:
      return std::pow(spec.lambda, static_cast<double>(t));
  }
  return 1.0;
}

double schedule_rate(const ScheduleSpec& spec, long t) {
  return spec.gamma0 * schedule_profile(spec, t);
}

UpdateConfig UpdateConfig::uniform(double beta, double gamma_attn, double gamma_reg) {
  UpdateConfig cfg;
  cfg.beta = beta;
  cfg.gamma_attn = Vector{gamma_attn};
  cfg.gamma_reg = Vector{gamma_reg};
  return cfg;
}

void validate_update_config(const UpdateConfig& cfg) {
  if (!(cfg.beta > 0.0)) throw std::domain_error("UpdateConfig: beta must be positive");
  if (cfg.alpha < 0.0) throw std::domain_error("UpdateConfig: alpha must be nonnegative");
  if (cfg.gamma_attn.empty() || cfg.gamma_reg.empty()) {
    throw ShapeError("UpdateConfig: gamma vectors must be nonempty");
  }
  for (double g : cfg.gamma_attn) {
    if (g < 0.0) throw std::domain_error("UpdateConfig: negative gamma_attn");
  }
  for (double g : cfg.gamma_reg) {
    if (g < 0.0) throw std::domain_error("UpdateConfig: negative gamma_reg");
  }
  validate_schedule(cfg.schedule);
  if (cfg.mask) {
    for (double m : *cfg.mask) {
      if (m != 0.0 && m != 1.0) {
        throw std::domain_error("UpdateConfig: mask entries must be 0 or 1");
      }
    }
  }
}

double cond_energy_given_scores(const Matrix& s, const Matrix& k, double alpha,
                                double beta) {
  if (s.cols() != k.rows()) throw ShapeError("cond_energy: score/key count mismatch");
  if (!(beta > 0.0)) throw std::domain_error("cond_energy: beta must be positive");
  if (alpha < 0.0) throw std::domain_error("cond_energy: alpha must be nonnegative");
  Neumaier acc;
  Vector col(s.rows());
  for (std::size_t i = 0; i < s.cols(); ++i) {
    for (std::size_t r = 0; r < s.rows(); ++r) col[r] = s(r, i);
    acc.add(-lse(col, beta));
  }
  if (alpha != 0.0) acc.add(0.5 * alpha * sq_norm_sum(k));
  return acc.value();
}

double cond_energy(const Matrix& q, const Matrix& k, double alpha, double beta) {
  if (q.cols() != k.cols()) throw ShapeError("cond_energy: query/key width mismatch");
  return cond_energy_given_scores(matmul_nt(q, k), k, alpha, beta);
}

double prior_energy(const Matrix& k) {
  Vector half_norms = row_sq_norms(k);
  for (double& x : half_norms) x *= 0.5;
  return lse(half_norms, 1.0);
}

Matrix grad_log_posterior_given_scores(const Matrix& s, const Matrix& q,
                                       const Matrix& k, double alpha,
                                       double beta) {
  if (s.rows() != q.rows() || s.cols() != k.rows()) {
    throw ShapeError("grad_log_posterior: score shape mismatch");
  }
  // Attention pull toward aligned queries: row_softmax(beta * K Q^T) Q.
  const Matrix attn = matmul(row_softmax(transpose(s), beta), q);
  // Shrinkage of keys weighted by their share of the prior.
  Vector w = row_sq_norms(k);
  for (double& x : w) x *= 0.5;
  w = softmax(w);
  if (alpha != 0.0) {
    for (double& x : w) x += alpha;
  }
  return subtract(attn, scale_rows(k, w));
}

Matrix grad_log_posterior(const Matrix& q, const Matrix& k, double alpha,
                          double beta) {
  if (q.cols() != k.cols()) throw ShapeError("grad_log_posterior: query/key width mismatch");
  if (!(beta > 0.0)) throw std::domain_error("grad_log_posterior: beta must be positive");
  if (alpha < 0.0) throw std::domain_error("grad_log_posterior: alpha must be nonnegative");
  return grad_log_posterior_given_scores(matmul_nt(q, k), q, k, alpha, beta);
}

namespace {

// Expands a per-token rate vector (or single broadcast entry) into effective
// rates at step t.
Vector effective_rates(const Vector& gamma, double profile, std::size_t tokens,
                       const char* what) {
  Vector out(tokens);
  if (gamma.size() == 1) {
    for (double& x : out) x = gamma[0] * profile;
  } else if (gamma.size() == tokens) {
    for (std::size_t i = 0; i < tokens; ++i) out[i] = gamma[i] * profile;
  } else {
    throw ShapeError(std::string(what) + ": per-token rate length mismatch");
  }
  return out;
}

bool all_zero(const Vector& v) {
  for (double x : v) {
    if (x != 0.0) return false;
  }
  return true;
}

}  // namespace

Matrix context_update_given_scores(const Matrix& c, const Matrix& q,
                                   const Matrix& s, const Matrix& k,
                                   const Matrix& w_k, const UpdateConfig& cfg,
                                   long t) {
  validate_update_config(cfg);
  if (k.rows() != c.rows()) throw ShapeError("context_update: key/context row mismatch");
  const double profile = schedule_profile(cfg.schedule, t);
  const Vector ga = effective_rates(cfg.gamma_attn, profile, k.rows(), "gamma_attn");
  const Vector gr = effective_rates(cfg.gamma_reg, profile, k.rows(), "gamma_reg");
  if (all_zero(ga) && all_zero(gr)) return c;

  Matrix delta(k.rows(), k.cols());
  if (!all_zero(ga)) {
    if (cfg.mask && cfg.mask->size() != q.rows()) {
      throw ShapeError("context_update: mask length must match query rows");
    }
    const Matrix weights = row_softmax(transpose(s), cfg.beta);
    const Matrix attn =
        cfg.mask ? matmul(weights, scale_rows(q, *cfg.mask)) : matmul(weights, q);
    delta = scale_rows(attn, ga);
  }
  if (!all_zero(gr)) {
    Vector w = row_sq_norms(k);
    for (double& x : w) x *= 0.5;
    w = softmax(w);
    if (cfg.alpha != 0.0) {
      for (double& x : w) x += cfg.alpha;
    }
    for (std::size_t i = 0; i < w.size(); ++i) w[i] *= gr[i];
    delta = subtract(delta, scale_rows(k, w));
  }
  return add(c, matmul_nt(delta, w_k));
}

Matrix context_update(const Matrix& c, const Matrix& q, const Matrix& w_k,
                      const UpdateConfig& cfg, long t) {
  if (c.cols() != w_k.rows()) throw ShapeError("context_update: context/projection mismatch");
  const Matrix k = matmul(c, w_k);
  if (q.cols() != k.cols()) throw ShapeError("context_update: query/key width mismatch");
  return context_update_given_scores(c, q, matmul_nt(q, k), k, w_k, cfg, t);
}

}  // namespace ebca
