#include "ebca/diffusion.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "ebca/numerics.hpp"
#include "ebca/summation.hpp"

namespace ebca {

NoiseSchedule NoiseSchedule::linear(long T, double beta_start, double beta_end) {
  if (T < 1) throw std::domain_error("NoiseSchedule: T must be at least 1");
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) {
    throw std::domain_error("NoiseSchedule: betas must satisfy 0 < b1 <= bT < 1");
  }
  NoiseSchedule s;
  s.T = T;
  s.beta.resize(T);
  s.alpha.resize(T);
  s.alpha_bar.resize(T);
  s.sigma.resize(T);
  double prod = 1.0;
  for (long t = 0; t < T; ++t) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(T - 1);
    s.beta[t] = beta_start + frac * (beta_end - beta_start);
    s.alpha[t] = 1.0 - s.beta[t];
    prod *= s.alpha[t];
    s.alpha_bar[t] = prod;
    s.sigma[t] = std::sqrt(s.beta[t]);
  }
  return s;
}

void NoiseSchedule::check_range(long t) const {
  if (t < 1 || t > T) throw std::domain_error("NoiseSchedule: t out of range");
}

double NoiseSchedule::alpha_bar_at(long t) const {
  if (t == 0) return 1.0;
  check_range(t);
  return alpha_bar[t - 1];
}

namespace {

constexpr int kGridP = 8;
constexpr int kChannels = 2;
constexpr int kWalsh[3] = {1, 2, 4};
constexpr int kPosFeatures = 15;  // 6 single Walsh + 9 products
constexpr int kTimeFeatures = 4;

double walsh(int k, int j) { return (std::popcount(static_cast<unsigned>(k & j)) & 1) ? -1.0 : 1.0; }

struct ChannelPattern {
  int row_k;
  int col_k;
};

// Distinct separable Walsh assignments per concept and channel; distinct
// pairs are orthogonal over the grid, so templates are mutually orthogonal.
ChannelPattern pattern_for(int concept_id, int channel) {
  static constexpr ChannelPattern kPairs[9] = {
      {1, 1}, {1, 2}, {1, 4}, {2, 1}, {2, 2}, {2, 4}, {4, 1}, {4, 2}, {4, 4}};
  const int idx = channel == 0 ? concept_id : (concept_id + 1) % 9;
  return kPairs[idx];
}

void check_concept(int c, int n_concepts) {
  if (c < 0 || c >= n_concepts) throw std::domain_error("concept id out of range");
}

void axpy_into(Matrix& dst, const Matrix& src) {
  for (std::size_t i = 0; i < dst.data().size(); ++i) dst.data()[i] += src.data()[i];
}

void axpy_into(Vector& dst, const Vector& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Matrix concept_template(int c) {
  check_concept(c, 8);
  Matrix t(kGridP * kGridP, kChannels);
  for (int cell = 0; cell < kGridP * kGridP; ++cell) {
    const int r = cell / kGridP;
    const int col = cell % kGridP;
    for (int ch = 0; ch < kChannels; ++ch) {
      const ChannelPattern p = pattern_for(c, ch);
      t(cell, ch) = walsh(p.row_k, r) * walsh(p.col_k, col);
    }
  }
  return t;
}

Matrix half_template(int c, bool left_half) {
  Matrix t = concept_template(c);
  for (int cell = 0; cell < kGridP * kGridP; ++cell) {
    const int col = cell % kGridP;
    const bool in_left = col < kGridP / 2;
    if (in_left != left_half) {
      for (int ch = 0; ch < kChannels; ++ch) t(cell, ch) = 0.0;
    }
  }
  return t;
}

Dataset make_two_concept_dataset(const DatasetConfig& cfg) {
  if (cfg.grid_p != kGridP || cfg.channels != kChannels) {
    throw std::domain_error("dataset templates are defined for an 8x8 grid with 2 channels");
  }
  if (cfg.n_concepts < 2 || cfg.n_concepts > 8) {
    throw std::domain_error("dataset supports 2..8 concepts");
  }
  if (!(cfg.amplitude > 0.0 && cfg.amplitude <= 1.0)) {
    throw std::domain_error("dataset amplitude must be in (0, 1]");
  }
  Dataset data;
  for (int copy = 0; copy < cfg.single_copies; ++copy) {
    for (int c = 0; c < cfg.n_concepts; ++c) {
      data.samples.push_back({scale(concept_template(c), cfg.amplitude), {c}});
    }
  }
  for (int copy = 0; copy < cfg.pair_copies; ++copy) {
    for (int a = 0; a < cfg.n_concepts; ++a) {
      for (int b = a + 1; b < cfg.n_concepts; ++b) {
        Matrix grid = add(half_template(a, true), half_template(b, false));
        data.samples.push_back({scale(grid, cfg.amplitude), {a, b}});
      }
    }
  }
  if (cfg.shuffle_labels) {
    // Rotate the concept lists by one sample so every grid carries the wrong
    // prompt; the marginal label distribution is unchanged.
    const std::size_t n = data.samples.size();
    std::vector<std::vector<int>> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = data.samples[(i + 1) % n].concepts;
    for (std::size_t i = 0; i < n; ++i) data.samples[i].concepts = std::move(labels[i]);
  }
  return data;
}

double template_correlation(const Matrix& grid, const Matrix& tmpl) {
  if (!grid.same_shape(tmpl)) throw ShapeError("template_correlation: shape mismatch");
  const std::size_t n = grid.data().size();
  const double dot = cascade_dot(grid.data().data(), 1, tmpl.data().data(), 1, n);
  const double ng = cascade_dot(grid.data().data(), 1, grid.data().data(), 1, n);
  const double nt = cascade_dot(tmpl.data().data(), 1, tmpl.data().data(), 1, n);
  if (ng <= 0.0 || nt <= 0.0) return 0.0;
  return dot / std::sqrt(ng * nt);
}

double min_pair_correlation(const Matrix& grid, int a, int b) {
  const int lo = std::min(a, b);
  const int hi = std::max(a, b);
  const double c_left = template_correlation(grid, half_template(lo, true));
  const double c_right = template_correlation(grid, half_template(hi, false));
  return std::min(c_left, c_right);
}

ContextSet ToyDenoiser::contexts_for_prompt(std::span<const int> prompt) const {
  if (prompt.empty()) throw std::domain_error("prompt must name at least one concept");
  Matrix ctx(prompt.size() + 1, embeddings.cols());
  for (std::size_t j = 0; j < embeddings.cols(); ++j) ctx(0, j) = embeddings(0, j);
  for (std::size_t i = 0; i < prompt.size(); ++i) {
    check_concept(prompt[i], cfg.n_concepts);
    for (std::size_t j = 0; j < embeddings.cols(); ++j) {
      ctx(i + 1, j) = embeddings(prompt[i] + 1, j);
    }
  }
  return ContextSet::single(std::move(ctx));
}

Matrix ToyDenoiser::input_features(const Matrix& x, long t, long T) const {
  if (x.rows() != cells() || x.cols() != static_cast<std::size_t>(cfg.channels)) {
    throw ShapeError("input_features: grid shape mismatch");
  }
  const int width = cfg.channels + kPosFeatures + kTimeFeatures;
  Matrix f(cells(), width);
  const double phase = 2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(T);
  const double tf[kTimeFeatures] = {std::sin(phase), std::cos(phase),
                                    std::sin(2.0 * phase), std::cos(2.0 * phase)};
  for (std::size_t cell = 0; cell < cells(); ++cell) {
    const int r = static_cast<int>(cell) / kGridP;
    const int col = static_cast<int>(cell) % kGridP;
    std::size_t j = 0;
    for (int ch = 0; ch < cfg.channels; ++ch) f(cell, j++) = x(cell, ch);
    for (int k : kWalsh) f(cell, j++) = walsh(k, r);
    for (int k : kWalsh) f(cell, j++) = walsh(k, col);
    for (int ka : kWalsh) {
      for (int kb : kWalsh) f(cell, j++) = walsh(ka, r) * walsh(kb, col);
    }
    for (double v : tf) f(cell, j++) = v;
  }
  return f;
}

Matrix ToyDenoiser::embed_input(const Matrix& x, long t, long T) const {
  Matrix h = matmul(input_features(x, t, T), w_in);
  for (std::size_t i = 0; i < h.rows(); ++i) {
    for (std::size_t j = 0; j < h.cols(); ++j) h(i, j) += b_in[j];
  }
  return h;
}

Matrix ToyDenoiser::project_output(const Matrix& h) const {
  Matrix out = matmul(h, w_out);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += b_out[j];
  }
  return out;
}

double ToyDenoiser::beta_default() const {
  return 1.0 / std::sqrt(static_cast<double>(cfg.d_h));
}

std::pair<Matrix, EnergyTrace> ToyDenoiser::eps_forward(
    const Matrix& x_t, long t, const ContextSet& contexts,
    const UpdateConfig& cfg_update, const NoiseSchedule& schedule) const {
  const Matrix h0 = embed_input(x_t, t, schedule.T);
  CascadeResult cr = cascade_step(h0, contexts, stack, cfg_update, t);
  return {project_output(cr.latent), std::move(cr.records)};
}

ToyDenoiser make_denoiser(const DenoiserConfig& cfg) {
  if (cfg.grid_p != kGridP || cfg.channels != kChannels) {
    throw std::domain_error("denoiser is defined for an 8x8 grid with 2 channels");
  }
  if (cfg.n_layers < 1) throw std::domain_error("denoiser needs at least one layer");
  if (cfg.n_concepts < 2 || cfg.n_concepts > 8) {
    throw std::domain_error("denoiser supports 2..8 concepts");
  }
  Rng rng(cfg.init_seed);
  const int feat = cfg.channels + kPosFeatures + kTimeFeatures;
  ToyDenoiser m{
      cfg,
      rng.normal_matrix(feat, cfg.d_model, 1.0 / std::sqrt(static_cast<double>(feat))),
      Vector(cfg.d_model, 0.0),
      LayerStack{},
      Matrix(cfg.d_model, cfg.channels),
      Vector(cfg.channels, 0.0),
      Matrix(cfg.n_concepts + 1, cfg.d_ctx),
      false};
  for (int l = 0; l < cfg.n_layers; ++l) {
    LayerWeights w(
        rng.normal_matrix(cfg.d_model, cfg.d_h, 1.0 / std::sqrt(static_cast<double>(cfg.d_model))),
        rng.normal_matrix(cfg.d_ctx, cfg.d_h, 1.0 / std::sqrt(static_cast<double>(cfg.d_ctx))),
        rng.normal_matrix(cfg.d_ctx, cfg.d_h, 1.0 / std::sqrt(static_cast<double>(cfg.d_ctx))));
    // The second mixer projection starts at zero so every layer begins as the
    // identity map plus attention.
    TokenMixer mixer(
        rng.normal_matrix(cfg.d_model, cfg.mixer_hidden,
                          1.0 / std::sqrt(static_cast<double>(cfg.d_model))),
        Vector(cfg.mixer_hidden, 0.0), Matrix(cfg.mixer_hidden, cfg.d_model),
        Vector(cfg.d_model, 0.0));
    m.stack.layers.push_back(StackLayer{std::move(w), std::move(mixer)});
  }
  m.w_out = rng.normal_matrix(cfg.d_model, cfg.channels,
                              1.0 / std::sqrt(static_cast<double>(cfg.d_model)));
  // Frozen embedding table: unit-ish random directions with a linear norm
  // spread so some concepts start with systematically stronger keys.
  for (int row = 0; row < cfg.n_concepts + 1; ++row) {
    Vector v = rng.normal_vector(cfg.d_ctx);
    double norm = std::sqrt(cascade_dot(v.data(), 1, v.data(), 1, v.size()));
    if (norm == 0.0) norm = 1.0;
    double target = 1.0;
    if (row > 0 && cfg.n_concepts > 1) {
      const double frac = static_cast<double>(row - 1) / static_cast<double>(cfg.n_concepts - 1);
      target = cfg.embed_norm_min + frac * (cfg.embed_norm_max - cfg.embed_norm_min);
    }
    for (int j = 0; j < cfg.d_ctx; ++j) m.embeddings(row, j) = v[j] / norm * target;
  }
  return m;
}

DenoiserGrads zero_grads(const ToyDenoiser& model) {
  DenoiserGrads g{Matrix(model.w_in.rows(), model.w_in.cols()),
                  Vector(model.b_in.size(), 0.0),
                  {},
                  Matrix(model.w_out.rows(), model.w_out.cols()),
                  Vector(model.b_out.size(), 0.0)};
  for (const StackLayer& layer : model.stack.layers) {
    g.layers.push_back(LayerGrads{
        Matrix(layer.attn.w_q.rows(), layer.attn.w_q.cols()),
        Matrix(layer.attn.w_k.rows(), layer.attn.w_k.cols()),
        Matrix(layer.attn.w_v.rows(), layer.attn.w_v.cols()),
        Matrix(layer.mixer.w1.rows(), layer.mixer.w1.cols()),
        Matrix(layer.mixer.w2.rows(), layer.mixer.w2.cols()),
        Vector(layer.mixer.b1.size(), 0.0),
        Vector(layer.mixer.b2.size(), 0.0)});
  }
  return g;
}

std::vector<ParamView> param_views(ToyDenoiser& m) {
  std::vector<ParamView> v;
  v.push_back({m.w_in.data().data(), m.w_in.data().size()});
  v.push_back({m.b_in.data(), m.b_in.size()});
  for (StackLayer& layer : m.stack.layers) {
    v.push_back({layer.attn.w_q.data().data(), layer.attn.w_q.data().size()});
    v.push_back({layer.attn.w_k.data().data(), layer.attn.w_k.data().size()});
    v.push_back({layer.attn.w_v.data().data(), layer.attn.w_v.data().size()});
    v.push_back({layer.mixer.w1.data().data(), layer.mixer.w1.data().size()});
    v.push_back({layer.mixer.b1.data(), layer.mixer.b1.size()});
    v.push_back({layer.mixer.w2.data().data(), layer.mixer.w2.data().size()});
    v.push_back({layer.mixer.b2.data(), layer.mixer.b2.size()});
  }
  v.push_back({m.w_out.data().data(), m.w_out.data().size()});
  v.push_back({m.b_out.data(), m.b_out.size()});
  return v;
}

std::vector<ParamView> grad_views(DenoiserGrads& g) {
  std::vector<ParamView> v;
  v.push_back({g.w_in.data().data(), g.w_in.data().size()});
  v.push_back({g.b_in.data(), g.b_in.size()});
  for (LayerGrads& layer : g.layers) {
    v.push_back({layer.w_q.data().data(), layer.w_q.data().size()});
    v.push_back({layer.w_k.data().data(), layer.w_k.data().size()});
    v.push_back({layer.w_v.data().data(), layer.w_v.data().size()});
    v.push_back({layer.w1.data().data(), layer.w1.data().size()});
    v.push_back({layer.b1.data(), layer.b1.size()});
    v.push_back({layer.w2.data().data(), layer.w2.data().size()});
    v.push_back({layer.b2.data(), layer.b2.size()});
  }
  v.push_back({g.w_out.data().data(), g.w_out.data().size()});
  v.push_back({g.b_out.data(), g.b_out.size()});
  return v;
}

namespace {

struct LayerCache {
  Matrix h_in{1, 1};
  Matrix q{1, 1};
  Matrix keys{1, 1};
  Matrix values{1, 1};
  Matrix weights{1, 1};
  Matrix hres{1, 1};
  Matrix z{1, 1};
};

// Training-path forward up to the final latent. Mirrors the sampling cascade
// with context updates disabled: every primitive is invoked in the same order
// as cascade_step, so the two paths agree bit for bit.
Matrix forward_train(const ToyDenoiser& m, const Matrix& x_t, long t, long T,
                     const ContextSet& contexts, std::vector<LayerCache>* caches) {
  const double beta = m.beta_default();
  const Matrix& ctx = contexts.contexts.front();
  Matrix h = m.embed_input(x_t, t, T);
  for (const StackLayer& layer : m.stack.layers) {
    LayerCache cache;
    cache.h_in = h;
    cache.q = matmul(h, layer.attn.w_q);
    cache.keys = matmul(ctx, layer.attn.w_k);
    cache.values = matmul(ctx, layer.attn.w_v);
    cache.weights = row_softmax(matmul_nt(cache.q, cache.keys), beta);
    const Matrix attn = matmul(cache.weights, cache.values);
    cache.hres = add(h, attn);
    h = layer.mixer.apply_cached(cache.hres, caches ? &cache.z : nullptr);
    if (caches) caches->push_back(std::move(cache));
  }
  return h;
}

}  // namespace

double example_loss(const ToyDenoiser& model, const TrainExample& ex,
                    const NoiseSchedule& schedule) {
  const Matrix eps_hat = model.project_output(
      forward_train(model, ex.x_t, ex.t, schedule.T, ex.contexts, nullptr));
  Neumaier acc;
  for (std::size_t i = 0; i < eps_hat.data().size(); ++i) {
    const double d = eps_hat.data()[i] - ex.eps.data()[i];
    acc.add(d * d);
  }
  return acc.value() / static_cast<double>(eps_hat.data().size());
}

double loss_and_grads(const ToyDenoiser& m, const TrainExample& ex,
                      const NoiseSchedule& schedule, DenoiserGrads& grads) {
  std::vector<LayerCache> caches;
  caches.reserve(m.stack.layers.size());
  const Matrix h_top = forward_train(m, ex.x_t, ex.t, schedule.T, ex.contexts, &caches);
  const Matrix eps_hat = m.project_output(h_top);
  const double beta = m.beta_default();
  const Matrix& ctx = ex.contexts.contexts.front();

  const double inv_n = 1.0 / static_cast<double>(eps_hat.data().size());
  Neumaier acc;
  Matrix d_eps(eps_hat.rows(), eps_hat.cols());
  for (std::size_t i = 0; i < eps_hat.data().size(); ++i) {
    const double d = eps_hat.data()[i] - ex.eps.data()[i];
    acc.add(d * d);
    d_eps.data()[i] = 2.0 * inv_n * d;
  }
  const double loss = acc.value() * inv_n;

  axpy_into(grads.w_out, matmul_tn(h_top, d_eps));
  axpy_into(grads.b_out, column_sums(d_eps));
  Matrix dh = matmul_nt(d_eps, m.w_out);

  for (std::size_t li = m.stack.layers.size(); li-- > 0;) {
    const StackLayer& layer = m.stack.layers[li];
    const LayerCache& c = caches[li];
    // Mixer backward: h_out = hres + tanh(hres W1 + b1) W2 + b2.
    Matrix dhres = dh;
    const Matrix dz = matmul_nt(dh, layer.mixer.w2);
    axpy_into(grads.layers[li].w2, matmul_tn(c.z, dh));
    axpy_into(grads.layers[li].b2, column_sums(dh));
    Matrix du(dz.rows(), dz.cols());
    for (std::size_t i = 0; i < du.data().size(); ++i) {
      const double zv = c.z.data()[i];
      du.data()[i] = dz.data()[i] * (1.0 - zv * zv);
    }
    axpy_into(grads.layers[li].w1, matmul_tn(c.hres, du));
    axpy_into(grads.layers[li].b1, column_sums(du));
    axpy_into(dhres, matmul_nt(du, layer.mixer.w1));
    // Attention backward: hres = h_in + row_softmax(beta Q K^T) V.
    const Matrix& da = dhres;  // gradient wrt attention output
    Matrix dh_in = dhres;
    const Matrix dv = matmul_tn(c.weights, da);
    const Matrix dw = matmul_nt(da, c.values);
    // Softmax backward per row.
    Matrix ds(dw.rows(), dw.cols());
    for (std::size_t i = 0; i < dw.rows(); ++i) {
      double rowdot = 0.0;
      for (std::size_t j = 0; j < dw.cols(); ++j) rowdot += dw(i, j) * c.weights(i, j);
      for (std::size_t j = 0; j < dw.cols(); ++j) {
        ds(i, j) = beta * c.weights(i, j) * (dw(i, j) - rowdot);
      }
    }
    const Matrix dq = matmul(ds, c.keys);
    const Matrix dk = matmul_tn(ds, c.q);
    axpy_into(grads.layers[li].w_q, matmul_tn(c.h_in, dq));
    axpy_into(grads.layers[li].w_k, matmul_tn(ctx, dk));
    axpy_into(grads.layers[li].w_v, matmul_tn(ctx, dv));
    axpy_into(dh_in, matmul_nt(dq, layer.attn.w_q));
    dh = std::move(dh_in);
  }

  axpy_into(grads.w_in, matmul_tn(m.input_features(ex.x_t, ex.t, schedule.T), dh));
  axpy_into(grads.b_in, column_sums(dh));
  return loss;
}

Matrix forward_noising_with(const Matrix& x0, long t, const NoiseSchedule& schedule,
                            const Matrix& z) {
  if (t == 0) return x0;
  schedule.check_range(t);
  if (!x0.same_shape(z)) throw ShapeError("forward_noising: noise shape mismatch");
  const double abar = schedule.alpha_bar_at(t);
  return add(scale(x0, std::sqrt(abar)), scale(z, std::sqrt(1.0 - abar)));
}

Matrix forward_noising(const Matrix& x0, long t, const NoiseSchedule& schedule,
                       Rng& rng) {
  if (t == 0) return x0;
  schedule.check_range(t);
  return forward_noising_with(x0, t, schedule, rng.normal_matrix(x0.rows(), x0.cols()));
}

TrainResult train(const Dataset& data, ToyDenoiser model,
                  const NoiseSchedule& schedule, const TrainConfig& cfg) {
  if (data.samples.empty()) throw std::domain_error("train: empty dataset");
  if (cfg.steps < 0) throw std::domain_error("train: negative step count");
  if (!(cfg.lr > 0.0)) throw std::domain_error("train: lr must be positive");
  if (cfg.batch < 1) throw std::domain_error("train: batch must be at least 1");

  // Held-out examples come from their own stream and are never trained on.
  std::vector<TrainExample> heldout;
  {
    Rng hrng(cfg.seed, 999);
    heldout.reserve(cfg.heldout);
    for (int i = 0; i < cfg.heldout; ++i) {
      const ToySample& s = data.samples[hrng.uniform_index(data.samples.size())];
      const long t = 1 + static_cast<long>(hrng.uniform_index(schedule.T));
      Matrix eps = hrng.normal_matrix(s.grid.rows(), s.grid.cols());
      Matrix x_t = forward_noising_with(s.grid, t, schedule, eps);
      heldout.push_back(TrainExample{std::move(x_t), t, std::move(eps),
                                     model.contexts_for_prompt(s.concepts)});
    }
  }
  auto heldout_loss = [&](const ToyDenoiser& m) {
    Neumaier acc;
    for (const TrainExample& ex : heldout) acc.add(example_loss(m, ex, schedule));
    return acc.value() / static_cast<double>(heldout.size());
  };

  TrainResult result{std::move(model), {}, 0.0, 0.0};
  result.heldout_initial = heldout_loss(result.model);
  result.loss_curve.reserve(cfg.steps);

  std::vector<ParamView> params = param_views(result.model);
  std::size_t total = 0;
  for (const ParamView& p : params) total += p.size;
  Vector adam_m(total, 0.0), adam_v(total, 0.0);
  const double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;

  Rng rng(cfg.seed, 0);
  for (long step = 0; step < cfg.steps; ++step) {
    DenoiserGrads grads = zero_grads(result.model);
    Neumaier batch_acc;
    for (int b = 0; b < cfg.batch; ++b) {
      const ToySample& s = data.samples[rng.uniform_index(data.samples.size())];
      const long t = 1 + static_cast<long>(rng.uniform_index(schedule.T));
      Matrix eps = rng.normal_matrix(s.grid.rows(), s.grid.cols());
      Matrix x_t = forward_noising_with(s.grid, t, schedule, eps);
      TrainExample ex{std::move(x_t), t, std::move(eps),
                      result.model.contexts_for_prompt(s.concepts)};
      batch_acc.add(loss_and_grads(result.model, ex, schedule, grads));
    }
    result.loss_curve.push_back(batch_acc.value() / cfg.batch);

    std::vector<ParamView> gv = grad_views(grads);
    const double inv_batch = 1.0 / static_cast<double>(cfg.batch);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < params.size(); ++p) {
      for (std::size_t i = 0; i < params[p].size; ++i) {
        const double g = gv[p].data[i] * inv_batch;
        if (cfg.optimizer == Optimizer::sgd) {
          params[p].data[i] -= cfg.lr * g;
        } else {
          const std::size_t k = offset + i;
          adam_m[k] = b1 * adam_m[k] + (1.0 - b1) * g;
          adam_v[k] = b2 * adam_v[k] + (1.0 - b2) * g * g;
          const double mh = adam_m[k] / (1.0 - std::pow(b1, static_cast<double>(step + 1)));
          const double vh = adam_v[k] / (1.0 - std::pow(b2, static_cast<double>(step + 1)));
          params[p].data[i] -= cfg.lr * mh / (std::sqrt(vh) + adam_eps);
        }
      }
      offset += params[p].size;
    }
  }
  if (cfg.steps > 0) result.model.trained = true;
  result.heldout_final = heldout_loss(result.model);
  return result;
}

Matrix reverse_step(const Matrix& x_t, long t, const ToyDenoiser& model,
                    const ContextSet& contexts, const NoiseSchedule& schedule,
                    const UpdateConfig& cfg_update, Rng& rng, EnergyTrace* trace) {
  schedule.check_range(t);
  auto [eps_hat, records] = model.eps_forward(x_t, t, contexts, cfg_update, schedule);
  if (trace) trace->insert(trace->end(), records.begin(), records.end());
  const double alpha_t = schedule.alpha[t - 1];
  const double abar_t = schedule.alpha_bar[t - 1];
  const double coef = (1.0 - alpha_t) / std::sqrt(1.0 - abar_t);
  Matrix x = scale(subtract(x_t, scale(eps_hat, coef)), 1.0 / std::sqrt(alpha_t));
  if (t > 1) {
    x = add(x, scale(rng.normal_matrix(x.rows(), x.cols()), schedule.sigma[t - 1]));
  }
  return x;
}

SampleResult sample_with_contexts(const ToyDenoiser& model, const ContextSet& contexts,
                                  const NoiseSchedule& schedule,
                                  const UpdateConfig& cfg_update, std::uint64_t seed) {
  if (!model.trained) {
    std::cerr << "warning: sampling from an untrained denoiser\n";
  }
  Rng rng(seed, 0);
  Matrix x = rng.normal_matrix(model.cells(), model.cfg.channels);
  EnergyTrace trace;
  trace.reserve(schedule.T * model.stack.depth());
  for (long t = schedule.T; t >= 1; --t) {
    x = reverse_step(x, t, model, contexts, schedule, cfg_update, rng, &trace);
  }
  return SampleResult{std::move(x), std::move(trace)};
}

SampleResult sample(const ToyDenoiser& model, std::span<const int> prompt,
                    const NoiseSchedule& schedule, const UpdateConfig& cfg_update,
                    std::uint64_t seed) {
  return sample_with_contexts(model, model.contexts_for_prompt(prompt), schedule,
                              cfg_update, seed);
}

SampleResult inpaint(const ToyDenoiser& model, const Matrix& known,
                     const Vector& mask, std::span<const int> prompt,
                     const NoiseSchedule& schedule, UpdateConfig cfg_update,
                     std::uint64_t seed) {
  if (known.rows() != model.cells() ||
      known.cols() != static_cast<std::size_t>(model.cfg.channels)) {
    throw ShapeError("inpaint: known grid shape mismatch");
  }
  if (mask.size() != known.rows()) throw ShapeError("inpaint: mask length mismatch");
  std::size_t ones = 0;
  for (double m : mask) {
    if (m != 0.0 && m != 1.0) throw std::domain_error("inpaint: mask entries must be 0 or 1");
    if (m == 1.0) ++ones;
  }
  if (ones == 0) {
    std::cerr << "warning: inpaint mask selects nothing to generate; returning known grid\n";
    return SampleResult{known, {}};
  }
  cfg_update.mask = mask;  // focus context updates on the cells being filled
  const bool all_ones = ones == mask.size();
  if (!model.trained) {
    std::cerr << "warning: sampling from an untrained denoiser\n";
  }
  Rng rng(seed, 0);
  Matrix x = rng.normal_matrix(model.cells(), model.cfg.channels);
  const ContextSet contexts = model.contexts_for_prompt(prompt);
  EnergyTrace trace;
  for (long t = schedule.T; t >= 1; --t) {
    x = reverse_step(x, t, model, contexts, schedule, cfg_update, rng, &trace);
    if (!all_ones) {
      const Matrix known_t = forward_noising(known, t - 1, schedule, rng);
      for (std::size_t cell = 0; cell < mask.size(); ++cell) {
        if (mask[cell] == 0.0) {
          for (std::size_t ch = 0; ch < x.cols(); ++ch) x(cell, ch) = known_t(cell, ch);
        }
      }
    }
  }
  return SampleResult{std::move(x), std::move(trace)};
}

namespace {

void write_named_matrix(std::ostream& os, const std::string& name, const Matrix& m) {
  os << "matrix " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  write_csv(m, os);
}

Matrix read_named_matrix(std::istream& is, const std::string& expected) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("checkpoint: truncated");
  std::stringstream ss(line);
  std::string tag, name;
  std::size_t rows = 0, cols = 0;
  ss >> tag >> name >> rows >> cols;
  if (tag != "matrix" || name != expected) {
    throw std::runtime_error("checkpoint: expected matrix " + expected + ", got " + line);
  }
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!std::getline(is, line)) throw std::runtime_error("checkpoint: truncated matrix");
    std::stringstream rowss(line);
    std::string field;
    for (std::size_t c = 0; c < cols; ++c) {
      if (!std::getline(rowss, field, ',')) {
        throw std::runtime_error("checkpoint: short row in " + expected);
      }
      m(r, c) = parse_double(field);
    }
  }
  m.ensure_finite("checkpoint");
  return m;
}

Vector matrix_to_vector(const Matrix& m) { return m.data(); }

Matrix vector_to_matrix(const Vector& v) {
  return Matrix(1, v.size(), v);
}

}  // namespace

void save_denoiser(const ToyDenoiser& m, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "ebca-denoiser v1\n";
  os << "grid_p=" << m.cfg.grid_p << '\n';
  os << "channels=" << m.cfg.channels << '\n';
  os << "d_model=" << m.cfg.d_model << '\n';
  os << "d_h=" << m.cfg.d_h << '\n';
  os << "d_ctx=" << m.cfg.d_ctx << '\n';
  os << "n_layers=" << m.cfg.n_layers << '\n';
  os << "n_concepts=" << m.cfg.n_concepts << '\n';
  os << "mixer_hidden=" << m.cfg.mixer_hidden << '\n';
  os << "embed_norm_min=" << format_double(m.cfg.embed_norm_min) << '\n';
  os << "embed_norm_max=" << format_double(m.cfg.embed_norm_max) << '\n';
  os << "init_seed=" << m.cfg.init_seed << '\n';
  os << "trained=" << (m.trained ? 1 : 0) << '\n';
  write_named_matrix(os, "w_in", m.w_in);
  write_named_matrix(os, "b_in", vector_to_matrix(m.b_in));
  for (std::size_t l = 0; l < m.stack.layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    const StackLayer& layer = m.stack.layers[l];
    write_named_matrix(os, p + "w_q", layer.attn.w_q);
    write_named_matrix(os, p + "w_k", layer.attn.w_k);
    write_named_matrix(os, p + "w_v", layer.attn.w_v);
    write_named_matrix(os, p + "w1", layer.mixer.w1);
    write_named_matrix(os, p + "b1", vector_to_matrix(layer.mixer.b1));
    write_named_matrix(os, p + "w2", layer.mixer.w2);
    write_named_matrix(os, p + "b2", vector_to_matrix(layer.mixer.b2));
  }
  write_named_matrix(os, "w_out", m.w_out);
  write_named_matrix(os, "b_out", vector_to_matrix(m.b_out));
  write_named_matrix(os, "embeddings", m.embeddings);
}

ToyDenoiser load_denoiser(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(is, line) || line != "ebca-denoiser v1") {
    throw std::runtime_error("checkpoint: bad magic");
  }
  DenoiserConfig cfg;
  bool trained = false;
  auto read_kv = [&](const std::string& key) {
    if (!std::getline(is, line)) throw std::runtime_error("checkpoint: truncated header");
    const auto pos = line.find('=');
    if (pos == std::string::npos || line.substr(0, pos) != key) {
      throw std::runtime_error("checkpoint: expected key " + key);
    }
    return line.substr(pos + 1);
  };
  cfg.grid_p = std::stoi(read_kv("grid_p"));
  cfg.channels = std::stoi(read_kv("channels"));
  cfg.d_model = std::stoi(read_kv("d_model"));
  cfg.d_h = std::stoi(read_kv("d_h"));
  cfg.d_ctx = std::stoi(read_kv("d_ctx"));
  cfg.n_layers = std::stoi(read_kv("n_layers"));
  cfg.n_concepts = std::stoi(read_kv("n_concepts"));
  cfg.mixer_hidden = std::stoi(read_kv("mixer_hidden"));
  cfg.embed_norm_min = parse_double(read_kv("embed_norm_min"));
  cfg.embed_norm_max = parse_double(read_kv("embed_norm_max"));
  cfg.init_seed = std::stoull(read_kv("init_seed"));
  trained = std::stoi(read_kv("trained")) != 0;

  ToyDenoiser m = make_denoiser(cfg);
  m.trained = trained;
  m.w_in = read_named_matrix(is, "w_in");
  m.b_in = matrix_to_vector(read_named_matrix(is, "b_in"));
  for (std::size_t l = 0; l < m.stack.layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    StackLayer& layer = m.stack.layers[l];
    layer.attn.w_q = read_named_matrix(is, p + "w_q");
    layer.attn.w_k = read_named_matrix(is, p + "w_k");
    layer.attn.w_v = read_named_matrix(is, p + "w_v");
    layer.mixer.w1 = read_named_matrix(is, p + "w1");
    layer.mixer.b1 = matrix_to_vector(read_named_matrix(is, p + "b1"));
    layer.mixer.w2 = read_named_matrix(is, p + "w2");
    layer.mixer.b2 = matrix_to_vector(read_named_matrix(is, p + "b2"));
  }
  m.w_out = read_named_matrix(is, "w_out");
  m.b_out = matrix_to_vector(read_named_matrix(is, "b_out"));
  m.embeddings = read_named_matrix(is, "embeddings");
  return m;
}

}  // namespace ebca
