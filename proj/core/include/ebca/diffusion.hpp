#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ebca/ebcq.hpp"
#include "ebca/ebcu.hpp"
#include "ebca/matrix.hpp"
#include "ebca/rng.hpp"
#include "ebca/trace.hpp"
#include "ebca/xattn.hpp"

namespace ebca {

// Discrete noising schedule with strictly increasing beta_t in (0, 1).
// Index convention: t runs 1..T; alpha_bar_at(0) == 1 is the clean limit.
struct NoiseSchedule {
  long T;
  Vector beta;       // beta[t-1]
  Vector alpha;      // 1 - beta
  Vector alpha_bar;  // prod_{s<=t} alpha_s
  Vector sigma;      // sqrt(beta)

  static NoiseSchedule linear(long T, double beta_start, double beta_end);

  double alpha_bar_at(long t) const;
  void check_range(long t) const;
};

// One training example: a clean 64x2 grid and the concept ids it renders.
struct ToySample {
  Matrix grid;
  std::vector<int> concepts;
};

struct DatasetConfig {
  int n_concepts = 8;
  int grid_p = 8;
  int channels = 2;
  double amplitude = 0.9;
  int single_copies = 2;
  int pair_copies = 1;
  bool shuffle_labels = false;
};

struct Dataset {
  std::vector<ToySample> samples;
};

// Fixed orthogonal +-1 pattern pair (one per channel) for each concept,
// built from separable Walsh products on the 8x8 grid.
Matrix concept_template(int c);

// Template with one spatial half zeroed out; pair samples place the smaller
// concept id on the left half (columns 0..3) and the larger on the right.
Matrix half_template(int c, bool left_half);

// All single-concept grids plus all two-concept half-superpositions.
Dataset make_two_concept_dataset(const DatasetConfig& cfg);

// Cosine similarity between a generated grid and a template.
double template_correlation(const Matrix& grid, const Matrix& tmpl);

// min over the two prompted concepts of the half-restricted template
// correlation; low values flag a neglected concept.
double min_pair_correlation(const Matrix& grid, int a, int b);

struct DenoiserConfig {
  int grid_p = 8;
  int channels = 2;
  int d_model = 32;
  int d_h = 32;
  int d_ctx = 16;
  int n_layers = 4;
  int n_concepts = 8;
  int mixer_hidden = 32;
  double embed_norm_min = 0.8;
  double embed_norm_max = 1.3;
  std::uint64_t init_seed = 2024;
};

// Toy conditional noise predictor: input projection of per-cell features,
// a stack of cross-attention + feed-forward layers attending to a frozen
// concept-embedding table, and a linear output head. Only the projections,
// mixers and heads are trained; the embedding table stays frozen.
struct ToyDenoiser {
  DenoiserConfig cfg;
  Matrix w_in;
  Vector b_in;
  LayerStack stack;
  Matrix w_out;
  Vector b_out;
  Matrix embeddings;  // (n_concepts + 1) x d_ctx; row 0 is the background token
  bool trained = false;

  std::size_t cells() const { return static_cast<std::size_t>(cfg.grid_p) * cfg.grid_p; }

  // Context for a prompt: background token followed by one embedding row per
  // prompted concept.
  ContextSet contexts_for_prompt(std::span<const int> prompt) const;

  // Per-cell features: grid channels, Walsh positional features, sinusoidal
  // step features.
  Matrix input_features(const Matrix& x, long t, long T) const;

  Matrix embed_input(const Matrix& x, long t, long T) const;
  Matrix project_output(const Matrix& h) const;

  // Noise prediction through the cross-attention cascade; context updates and
  // multi-context mixing follow cfg_update.
  std::pair<Matrix, EnergyTrace> eps_forward(const Matrix& x_t, long t,
                                             const ContextSet& contexts,
                                             const UpdateConfig& cfg_update,
                                             const NoiseSchedule& schedule) const;

  double beta_default() const;
};

ToyDenoiser make_denoiser(const DenoiserConfig& cfg);

// Gradients for the trainable tensors, in the same layout as the model.
struct LayerGrads {
  Matrix w_q, w_k, w_v, w1, w2;
  Vector b1, b2;
};

struct DenoiserGrads {
  Matrix w_in;
  Vector b_in;
  std::vector<LayerGrads> layers;
  Matrix w_out;
  Vector b_out;
};

DenoiserGrads zero_grads(const ToyDenoiser& model);

struct ParamView {
  double* data;
  std::size_t size;
};

// Trainable tensors in a fixed order (shared between model and gradients) so
// optimizers and finite-difference probes can walk them uniformly.
std::vector<ParamView> param_views(ToyDenoiser& model);
std::vector<ParamView> grad_views(DenoiserGrads& grads);

struct TrainExample {
  Matrix x_t;
  long t;
  Matrix eps;
  ContextSet contexts;
};

// Mean squared error of the noise prediction over one example; gradients are
// accumulated into grads.
double loss_and_grads(const ToyDenoiser& model, const TrainExample& ex,
                      const NoiseSchedule& schedule, DenoiserGrads& grads);
double example_loss(const ToyDenoiser& model, const TrainExample& ex,
                    const NoiseSchedule& schedule);

enum class Optimizer { sgd, adam };

struct TrainConfig {
  long steps = 2000;
  double lr = 1e-3;
  int batch = 4;
  std::uint64_t seed = 17;
  int heldout = 64;
  Optimizer optimizer = Optimizer::adam;
};

struct TrainResult {
  ToyDenoiser model;
  Vector loss_curve;
  double heldout_initial = 0.0;
  double heldout_final = 0.0;

  double heldout_ratio() const { return heldout_final / heldout_initial; }
};

TrainResult train(const Dataset& data, ToyDenoiser model,
                  const NoiseSchedule& schedule, const TrainConfig& cfg);

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) z. t = 0 returns x0 unchanged.
Matrix forward_noising(const Matrix& x0, long t, const NoiseSchedule& schedule,
                       Rng& rng);
Matrix forward_noising_with(const Matrix& x0, long t, const NoiseSchedule& schedule,
                            const Matrix& z);

// x_{t-1} = (x_t - (1 - alpha_t)/sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t)
//           + sigma_t * z, with the noise term suppressed at t = 1.
Matrix reverse_step(const Matrix& x_t, long t, const ToyDenoiser& model,
                    const ContextSet& contexts, const NoiseSchedule& schedule,
                    const UpdateConfig& cfg_update, Rng& rng, EnergyTrace* trace);

struct SampleResult {
  Matrix grid;
  EnergyTrace trace;
};

SampleResult sample_with_contexts(const ToyDenoiser& model, const ContextSet& contexts,
                                  const NoiseSchedule& schedule,
                                  const UpdateConfig& cfg_update, std::uint64_t seed);
SampleResult sample(const ToyDenoiser& model, std::span<const int> prompt,
                    const NoiseSchedule& schedule, const UpdateConfig& cfg_update,
                    std::uint64_t seed);

// Known-region compositing each step: mask entry 1 marks a cell to generate,
// 0 keeps the known value (re-noised to the current step). An all-ones mask
// reproduces sample_with_contexts exactly; an all-zero mask returns the known
// grid unchanged with a warning.
SampleResult inpaint(const ToyDenoiser& model, const Matrix& known,
                     const Vector& mask, std::span<const int> prompt,
                     const NoiseSchedule& schedule, UpdateConfig cfg_update,
                     std::uint64_t seed);

void save_denoiser(const ToyDenoiser& model, const std::string& path);
ToyDenoiser load_denoiser(const std::string& path);

}  // namespace ebca
