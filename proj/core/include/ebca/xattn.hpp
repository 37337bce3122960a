#pragma once

#include <cstdint>
#include <vector>

#include "ebca/ebcq.hpp"
#include "ebca/ebcu.hpp"
#include "ebca/matrix.hpp"
#include "ebca/trace.hpp"

namespace ebca {

// Projections of one cross-attention layer. w_q: d_model x d_h,
// w_k / w_v: d_ctx x d_h.
struct LayerWeights {
  Matrix w_q;
  Matrix w_k;
  Matrix w_v;

  LayerWeights(Matrix q, Matrix k, Matrix v);
};

// Per-token feed-forward with a residual connection:
//   h + tanh(h W1 + b1) W2 + b2
// Zero weights make it the identity.
struct TokenMixer {
  Matrix w1;
  Vector b1;
  Matrix w2;
  Vector b2;

  TokenMixer(Matrix w1_, Vector b1_, Matrix w2_, Vector b2_);
  static TokenMixer zero(std::size_t d_model, std::size_t hidden);

  Matrix apply(const Matrix& h) const;
  Matrix apply_cached(const Matrix& h, Matrix* z_cache) const;
};

struct StackLayer {
  LayerWeights attn;
  TokenMixer mixer;
};

struct LayerStack {
  std::vector<StackLayer> layers;

  std::size_t depth() const { return layers.size(); }
};

struct LayerResult {
  Matrix output;
  ContextSet contexts;
  EnergyRecord record;
};

// One cross-attention layer pass:
//  1. project queries Q = latent W_q and per-context keys/values,
//  2. compute similarities S_s = Q K_s^T once per context (instrumented),
//  3. record the main context's conditional and prior energies (pre-update),
//  4. output the weighted attention mixture over contexts,
//  5. ascend each context along its key log-posterior (skipped bit-exactly
//     when every effective rate is zero).
// The returned output is the raw attention mixture; residual wiring belongs
// to the caller. layer_index is only stamped into the energy record.
LayerResult layer_forward(const Matrix& latent, const ContextSet& set,
                          const LayerWeights& w, const UpdateConfig& cfg, long t,
                          long layer_index = 1);

struct CascadeResult {
  Matrix latent;
  EnergyTrace records;
};

// One denoising-step pass through the whole stack. Contexts start from
// init_contexts (the frozen encoder embeddings), are threaded through the
// layers and discarded at exit. Per layer the latent is updated as
//   latent <- mixer(latent + layer_forward(latent, ...))
CascadeResult cascade_step(const Matrix& latent, const ContextSet& init_contexts,
                           const LayerStack& stack, const UpdateConfig& cfg,
                           long t);

// k context-update applications within one layer, each with rates gamma / k.
// The query projection stays fixed; contexts evolve.
ContextSet multi_step_update(const Matrix& latent, const ContextSet& set,
                             const LayerWeights& w, const UpdateConfig& cfg,
                             long k, long t);

// Instrumentation: number of Q K^T similarity evaluations performed by
// layer_forward since the last reset.
std::uint64_t similarity_eval_count();
void reset_similarity_eval_count();

}  // namespace ebca
