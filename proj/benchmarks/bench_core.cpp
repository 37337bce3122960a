#include <benchmark/benchmark.h>

#include "ebca/diffusion.hpp"
#include "ebca/ebcu.hpp"
#include "ebca/hopfield.hpp"
#include "ebca/rng.hpp"
#include "ebca/xattn.hpp"

namespace {

using namespace ebca;

void BM_AttentionForward(benchmark::State& state) {
  Rng rng(11, 0);
  const std::size_t n_keys = static_cast<std::size_t>(state.range(0));
  const Matrix q = rng.normal_matrix(64, 32);
  const Matrix k = rng.normal_matrix(n_keys, 32);
  const Matrix v = rng.normal_matrix(n_keys, 32);
  for (auto _ : state) {
    benchmark::DoNotOptimize(attention_forward(q, k, v, 0.25));
  }
}
BENCHMARK(BM_AttentionForward)->Arg(4)->Arg(64);

void BM_HopfieldUpdate(benchmark::State& state) {
  Rng rng(12, 0);
  const PatternStore store(rng.normal_matrix(64, static_cast<std::size_t>(state.range(0))), 1.0);
  const Vector zeta = rng.normal_vector(64);
  for (auto _ : state) {
    benchmark::DoNotOptimize(hopfield_update(zeta, store));
  }
}
BENCHMARK(BM_HopfieldUpdate)->Arg(16)->Arg(256);

void BM_GradLogPosterior(benchmark::State& state) {
  Rng rng(13, 0);
  const Matrix q = rng.normal_matrix(64, 32);
  const Matrix k = rng.normal_matrix(static_cast<std::size_t>(state.range(0)), 32);
  for (auto _ : state) {
    benchmark::DoNotOptimize(grad_log_posterior(q, k, 0.0, 0.25));
  }
}
BENCHMARK(BM_GradLogPosterior)->Arg(4)->Arg(64);

void BM_ContextUpdate(benchmark::State& state) {
  Rng rng(14, 0);
  const Matrix c = rng.normal_matrix(static_cast<std::size_t>(state.range(0)), 16);
  const Matrix q = rng.normal_matrix(64, 32);
  const Matrix w_k = rng.normal_matrix(16, 32);
  const UpdateConfig cfg = UpdateConfig::uniform(0.25, 0.02, 0.02);
  for (auto _ : state) {
    benchmark::DoNotOptimize(context_update(c, q, w_k, cfg, 10));
  }
}
BENCHMARK(BM_ContextUpdate)->Arg(3)->Arg(9);

void BM_CascadeStep(benchmark::State& state) {
  const ToyDenoiser model = make_denoiser(DenoiserConfig{});
  Rng rng(15, 0);
  const Matrix x = rng.normal_matrix(model.cells(), model.cfg.channels);
  const Matrix h = model.embed_input(x, 25, 50);
  const ContextSet contexts = model.contexts_for_prompt(std::vector<int>{1, 3});
  const UpdateConfig cfg = UpdateConfig::uniform(model.beta_default(),
                                                 state.range(0) ? 0.02 : 0.0,
                                                 state.range(0) ? 0.02 : 0.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(cascade_step(h, contexts, model.stack, cfg, 25));
  }
}
BENCHMARK(BM_CascadeStep)->Arg(0)->Arg(1);

void BM_TrainExample(benchmark::State& state) {
  const ToyDenoiser model = make_denoiser(DenoiserConfig{});
  const NoiseSchedule schedule = NoiseSchedule::linear(50, 1e-4, 0.2);
  Rng rng(16, 0);
  const Matrix x0 = scale(concept_template(2), 0.9);
  const Matrix eps = rng.normal_matrix(x0.rows(), x0.cols());
  const TrainExample ex{forward_noising_with(x0, 25, schedule, eps), 25, eps,
                        model.contexts_for_prompt(std::vector<int>{2})};
  DenoiserGrads grads = zero_grads(model);
  for (auto _ : state) {
    benchmark::DoNotOptimize(loss_and_grads(model, ex, schedule, grads));
  }
}
BENCHMARK(BM_TrainExample);

}  // namespace

BENCHMARK_MAIN();
