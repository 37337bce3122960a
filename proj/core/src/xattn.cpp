#include "ebca/xattn.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

#include "ebca/numerics.hpp"

namespace ebca {

namespace {

std::atomic<std::uint64_t> g_similarity_evals{0};

Matrix similarity(const Matrix& q, const Matrix& k) {
  g_similarity_evals.fetch_add(1, std::memory_order_relaxed);
  return matmul_nt(q, k);
}

bool rates_active(const Vector& gamma, double profile) {
  if (profile == 0.0) return false;
  for (double g : gamma) {
    if (g != 0.0) return true;
  }
  return false;
}

Variant derive_variant(const UpdateConfig& cfg) {
  for (double g : cfg.gamma_attn) {
    if (g != 0.0) return Variant::ebcu;
  }
  for (double g : cfg.gamma_reg) {
    if (g != 0.0) return Variant::ebcu;
  }
  return Variant::baseline;
}

}  // namespace

std::uint64_t similarity_eval_count() {
  return g_similarity_evals.load(std::memory_order_relaxed);
}

void reset_similarity_eval_count() {
  g_similarity_evals.store(0, std::memory_order_relaxed);
}

LayerWeights::LayerWeights(Matrix q, Matrix k, Matrix v)
    : w_q(std::move(q)), w_k(std::move(k)), w_v(std::move(v)) {
  if (w_q.cols() != w_k.cols() || w_k.cols() != w_v.cols()) {
    throw ShapeError("LayerWeights: projections must share the head width");
  }
  if (w_k.rows() != w_v.rows()) {
    throw ShapeError("LayerWeights: key/value projections must share input width");
  }
}

TokenMixer::TokenMixer(Matrix w1_, Vector b1_, Matrix w2_, Vector b2_)
    : w1(std::move(w1_)), b1(std::move(b1_)), w2(std::move(w2_)), b2(std::move(b2_)) {
  if (w1.cols() != b1.size() || w1.cols() != w2.rows()) {
    throw ShapeError("TokenMixer: hidden width mismatch");
  }
  if (w2.cols() != w1.rows() || w2.cols() != b2.size()) {
    throw ShapeError("TokenMixer: output width must match input width");
  }
}

TokenMixer TokenMixer::zero(std::size_t d_model, std::size_t hidden) {
  return TokenMixer(Matrix(d_model, hidden), Vector(hidden, 0.0),
                    Matrix(hidden, d_model), Vector(d_model, 0.0));
}

Matrix TokenMixer::apply(const Matrix& h) const { return apply_cached(h, nullptr); }

Matrix TokenMixer::apply_cached(const Matrix& h, Matrix* z_cache) const {
  if (h.cols() != w1.rows()) throw ShapeError("TokenMixer: input width mismatch");
  Matrix u = matmul(h, w1);
  for (std::size_t i = 0; i < u.rows(); ++i) {
    for (std::size_t j = 0; j < u.cols(); ++j) u(i, j) = std::tanh(u(i, j) + b1[j]);
  }
  Matrix out = matmul(u, w2);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += h(i, j) + b2[j];
  }
  out.ensure_finite("TokenMixer");
  if (z_cache) *z_cache = std::move(u);
  return out;
}

LayerResult layer_forward(const Matrix& latent, const ContextSet& set,
                          const LayerWeights& w, const UpdateConfig& cfg, long t,
                          long layer_index) {
  validate_update_config(cfg);
  if (latent.cols() != w.w_q.rows()) throw ShapeError("layer_forward: latent width mismatch");
  if (set.embed_dim() != w.w_k.rows()) throw ShapeError("layer_forward: context width mismatch");

  const Matrix q = matmul(latent, w.w_q);
  const double profile = schedule_profile(cfg.schedule, t);
  const bool update_active =
      rates_active(cfg.gamma_attn, profile) || rates_active(cfg.gamma_reg, profile);

  Matrix acc(1, 1);
  std::vector<Matrix> new_contexts;
  new_contexts.reserve(set.size());
  EnergyRecord record;
  for (std::size_t s = 0; s < set.size(); ++s) {
    const Matrix keys = matmul(set.contexts[s], w.w_k);
    const Matrix values = matmul(set.contexts[s], w.w_v);
    const Matrix scores = similarity(q, keys);
    if (s == 0) {
      record.t = t;
      record.layer = layer_index;
      record.variant = derive_variant(cfg);
      record.e_cond = cond_energy_given_scores(scores, keys, 0.0, cfg.beta);
      record.e_prior = prior_energy(keys);
    }
    const Matrix attn = matmul(row_softmax(scores, cfg.beta), values);
    const Matrix weighted = scale(attn, set.alphas[s]);
    acc = s == 0 ? weighted : add(acc, weighted);
    if (update_active) {
      new_contexts.push_back(context_update_given_scores(set.contexts[s], q, scores,
                                                         keys, w.w_k, cfg, t));
    } else {
      new_contexts.push_back(set.contexts[s]);
    }
  }
  Matrix output = scale(acc, 1.0 / static_cast<double>(set.size()));
  return LayerResult{std::move(output),
                     ContextSet(std::move(new_contexts), set.alphas, set.labels),
                     record};
}

CascadeResult cascade_step(const Matrix& latent, const ContextSet& init_contexts,
                           const LayerStack& stack, const UpdateConfig& cfg,
                           long t) {
  if (stack.layers.empty()) throw std::domain_error("cascade_step: empty stack");
  ContextSet contexts = init_contexts;
  Matrix h = latent;
  EnergyTrace records;
  records.reserve(stack.depth());
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    LayerResult res = layer_forward(h, contexts, stack.layers[l].attn, cfg, t,
                                    static_cast<long>(l + 1));
    contexts = std::move(res.contexts);
    h = stack.layers[l].mixer.apply(add(h, res.output));
    records.push_back(res.record);
  }
  return CascadeResult{std::move(h), std::move(records)};
}

ContextSet multi_step_update(const Matrix& latent, const ContextSet& set,
                             const LayerWeights& w, const UpdateConfig& cfg,
                             long k, long t) {
  if (k < 1) throw std::domain_error("multi_step_update: k must be at least 1");
  UpdateConfig scaled = cfg;
  const double inv_k = 1.0 / static_cast<double>(k);
  for (double& g : scaled.gamma_attn) g *= inv_k;
  for (double& g : scaled.gamma_reg) g *= inv_k;
  const Matrix q = matmul(latent, w.w_q);
  ContextSet out = set;
  for (long step = 0; step < k; ++step) {
    std::vector<Matrix> updated;
    updated.reserve(out.size());
    for (std::size_t s = 0; s < out.size(); ++s) {
      updated.push_back(context_update(out.contexts[s], q, w.w_k, scaled, t));
    }
    out = ContextSet(std::move(updated), out.alphas, out.labels);
  }
  return out;
}

}  // namespace ebca
