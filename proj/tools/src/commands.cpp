#include "ebca_cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ebca/diffusion.hpp"
#include "ebca/ebcq.hpp"
#include "ebca/ebcu.hpp"
#include "ebca/gradcheck.hpp"
#include "ebca/hopfield.hpp"
#include "ebca/matrix.hpp"
#include "ebca/rng.hpp"
#include "ebca/summation.hpp"
#include "ebca/trace.hpp"
#include "ebca_cli/pool.hpp"
#include "ebca_cli/runconfig.hpp"
#include "ebca_cli/svg.hpp"

namespace fs = std::filesystem;

namespace ebca::cli {

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  unsigned jobs = default_jobs();
};

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  return os;
}

double inf_norm(const Matrix& a) {
  double m = 0.0;
  for (double x : a.data()) m = std::max(m, std::abs(x));
  return m;
}

ToyDenoiser model_from(const RunConfig& cfg) {
  const std::string& path = cfg.get_text("checkpoint");
  if (path.empty()) {
    DenoiserConfig mc;
    mc.init_seed = cfg.get_u64("init_seed");
    return make_denoiser(mc);
  }
  return load_denoiser(path);
}

NoiseSchedule schedule_from(const RunConfig& cfg, const std::string& steps_key) {
  return NoiseSchedule::linear(cfg.get_i64(steps_key), cfg.get_f64("beta_start"),
                               cfg.get_f64("beta_end"));
}

ScheduleSpec rate_schedule_from(const RunConfig& cfg) {
  ScheduleSpec spec;
  const std::string& kind = cfg.get_text("schedule");
  if (kind == "constant") spec.kind = ScheduleKind::constant;
  if (kind == "step") spec.kind = ScheduleKind::step;
  if (kind == "exp") spec.kind = ScheduleKind::exp_decay;
  spec.tau = cfg.get_i64("tau");
  spec.lambda = cfg.get_f64("lambda");
  return spec;
}

UpdateConfig update_config_from(const RunConfig& cfg, const ToyDenoiser& model,
                                bool updates_on) {
  UpdateConfig upd = UpdateConfig::uniform(
      model.beta_default(), updates_on ? cfg.get_f64("gamma_attn") : 0.0,
      updates_on ? cfg.get_f64("gamma_reg") : 0.0);
  upd.alpha = cfg.get_f64("alpha");
  upd.schedule = rate_schedule_from(cfg);
  return upd;
}

std::vector<int> prompt_from(const RunConfig& cfg, int n_concepts) {
  const std::vector<int> prompt = parse_int_list(cfg.get_text("prompt"), "prompt");
  for (int c : prompt) {
    if (c < 0 || c >= n_concepts) {
      throw ConfigError("prompt: concept id " + std::to_string(c) +
                        " out of range [0, " + std::to_string(n_concepts - 1) + "]");
    }
  }
  return prompt;
}

struct LabeledTrace {
  std::uint64_t seed = 0;
  std::string label;
  const EnergyTrace* trace = nullptr;
};

void write_seed_traces(const fs::path& path, const std::vector<LabeledTrace>& traces) {
  std::ofstream os = open_out(path);
  os << "seed,t,layer,variant,e_cond,e_prior\n";
  for (const LabeledTrace& lt : traces) {
    for (const EnergyRecord& rec : *lt.trace) {
      os << lt.seed << ',' << rec.t << ',' << rec.layer << ',' << lt.label << ','
         << format_double(rec.e_cond) << ',' << format_double(rec.e_prior) << '\n';
    }
  }
}

void append_correlation_rows(std::ostream& os, std::uint64_t seed,
                             const std::string& label, const Matrix& grid,
                             const std::vector<int>& prompt) {
  for (int c : prompt) {
    os << seed << ',' << label << ",corr_" << c << ','
       << format_double(template_correlation(grid, concept_template(c))) << '\n';
  }
  if (prompt.size() == 2 && prompt[0] != prompt[1]) {
    os << seed << ',' << label << ",min_pair,"
       << format_double(min_pair_correlation(grid, prompt[0], prompt[1])) << '\n';
  }
}

int cmd_gradcheck(const RunConfig& cfg, const CommonOpts& opts) {
  GradCheckOptions gopt;
  gopt.seeds = static_cast<int>(cfg.get_i64("seeds"));
  gopt.max_keys = static_cast<std::size_t>(cfg.get_i64("max_keys"));
  gopt.max_queries = static_cast<std::size_t>(cfg.get_i64("max_queries"));
  gopt.max_dim = static_cast<std::size_t>(cfg.get_i64("max_dim"));
  gopt.tol = cfg.get_f64("tol");
  gopt.fd_step = cfg.get_f64("fd_step");
  gopt.seed = cfg.get_u64("seed");
  gopt.inject_sign_flip = cfg.get_bool("inject_sign_flip");

  const std::vector<CheckResult> results = run_gradient_checks(gopt);
  {
    std::ofstream os = open_out(fs::path(opts.out_dir) / "gradcheck.csv");
    os << "check,seeds,max_rel_err,worst_seed,passed\n";
    for (const CheckResult& r : results) {
      os << r.name << ',' << r.seeds_run << ',' << format_double(r.max_rel_err) << ','
         << r.worst_seed << ',' << (r.passed ? 1 : 0) << '\n';
    }
  }
  bool all_passed = true;
  for (const CheckResult& r : results) {
    std::cout << "  " << r.name << ": max rel err " << format_double(r.max_rel_err)
              << " over " << r.seeds_run << " seeds" << (r.passed ? "" : "  FAILED")
              << '\n';
    all_passed = all_passed && r.passed;
  }
  if (!all_passed) {
    for (const CheckResult& r : results) {
      if (!r.passed) {
        std::cout << "gradient check '" << r.name << "' failed at seed " << r.worst_seed
                  << " (rel err " << format_double(r.max_rel_err) << ", tol "
                  << format_double(gopt.tol) << ")\n";
      }
    }
    return 1;
  }
  std::cout << "all gradient checks passed (tol " << format_double(gopt.tol) << ")\n";
  return 0;
}

int cmd_hopfield_demo(const RunConfig& cfg, const CommonOpts& opts) {
  Rng rng(cfg.get_u64("seed"), 0);
  const long dim = cfg.get_i64("dim");
  const long n_patterns = cfg.get_i64("n_patterns");
  const PatternStore store(rng.normal_matrix(dim, n_patterns), cfg.get_f64("beta"));
  Vector zeta = rng.normal_vector(dim);
  const double eta = cfg.get_f64("eta");
  const double tol = cfg.get_f64("tol");
  const long iters = cfg.get_i64("iters");

  std::ofstream os = open_out(fs::path(opts.out_dir) / "hopfield_trace.csv");
  os << "iter,energy,delta_inf\n";
  Vector energies{hopfield_energy(zeta, store)};
  os << 0 << ',' << format_double(energies.front()) << ',' << format_double(0.0) << '\n';
  long done = 0;
  bool converged = false;
  for (long i = 1; i <= iters; ++i) {
    const Vector next = hopfield_gd_step(zeta, store, eta);
    double delta = 0.0;
    for (std::size_t j = 0; j < next.size(); ++j) {
      delta = std::max(delta, std::abs(next[j] - zeta[j]));
    }
    zeta = next;
    const double energy = hopfield_energy(zeta, store);
    os << i << ',' << format_double(energy) << ',' << format_double(delta) << '\n';
    energies.push_back(energy);
    done = i;
    if (delta < tol) {
      converged = true;
      break;
    }
  }
  Vector xs(energies.size());
  for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = static_cast<double>(i);
  LinePlot plot("Hopfield retrieval energy", "iteration", "energy");
  plot.add_series("energy", xs, energies, "#1f77b4");
  plot.write((fs::path(opts.out_dir) / "hopfield_energy.svg").string());
  if (converged) {
    std::cout << "converged after " << done << " iterations\n";
  } else {
    std::cout << "did not converge within " << iters << " iterations\n";
  }
  return 0;
}

int cmd_train(const RunConfig& cfg, const CommonOpts& opts) {
  DatasetConfig dc;
  dc.n_concepts = static_cast<int>(cfg.get_i64("n_concepts"));
  dc.amplitude = cfg.get_f64("amplitude");
  dc.single_copies = static_cast<int>(cfg.get_i64("single_copies"));
  dc.pair_copies = static_cast<int>(cfg.get_i64("pair_copies"));
  dc.shuffle_labels = cfg.get_bool("shuffle_labels");
  const Dataset data = make_two_concept_dataset(dc);

  DenoiserConfig mc;
  mc.n_concepts = dc.n_concepts;
  mc.init_seed = cfg.get_u64("init_seed");

  const NoiseSchedule schedule = schedule_from(cfg, "T");
  TrainConfig tc;
  tc.steps = cfg.get_i64("steps");
  tc.lr = cfg.get_f64("lr");
  tc.batch = static_cast<int>(cfg.get_i64("batch"));
  tc.seed = cfg.get_u64("seed");
  tc.heldout = static_cast<int>(cfg.get_i64("heldout"));
  tc.optimizer = cfg.get_text("optimizer") == "sgd" ? Optimizer::sgd : Optimizer::adam;

  const TrainResult res = train(data, make_denoiser(mc), schedule, tc);

  {
    std::ofstream os = open_out(fs::path(opts.out_dir) / "loss_curve.csv");
    os << "step,loss\n";
    for (std::size_t i = 0; i < res.loss_curve.size(); ++i) {
      os << i << ',' << format_double(res.loss_curve[i]) << '\n';
    }
  }
  {
    std::ofstream os = open_out(fs::path(opts.out_dir) / "heldout.csv");
    os << "initial,final,ratio\n";
    os << format_double(res.heldout_initial) << ',' << format_double(res.heldout_final)
       << ',' << format_double(res.heldout_ratio()) << '\n';
  }
  save_denoiser(res.model, (fs::path(opts.out_dir) / cfg.get_text("checkpoint_out")).string());
  if (!res.loss_curve.empty()) {
    Vector xs(res.loss_curve.size());
    for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = static_cast<double>(i);
    LinePlot plot("Training loss", "step", "batch MSE");
    plot.add_series("loss", xs, res.loss_curve, "#1f77b4");
    plot.write((fs::path(opts.out_dir) / "loss_curve.svg").string());
  }
  std::cout << "trained " << tc.steps << " steps; heldout loss "
            << format_double(res.heldout_initial) << " -> "
            << format_double(res.heldout_final) << " (ratio "
            << format_double(res.heldout_ratio()) << ")\n";
  return 0;
}

int cmd_sample(const RunConfig& cfg, const CommonOpts& opts) {
  const ToyDenoiser model = model_from(cfg);
  const NoiseSchedule schedule = schedule_from(cfg, "steps");
  const std::vector<int> prompt = prompt_from(cfg, model.cfg.n_concepts);
  const std::string& variant = cfg.get_text("variant");
  std::vector<std::string> labels;
  if (variant == "baseline" || variant == "both") labels.push_back("baseline");
  if (variant == "ebcu" || variant == "both") labels.push_back("ebcu");

  const std::uint64_t base_seed = cfg.get_u64("seed");
  const std::size_t n_seeds = static_cast<std::size_t>(cfg.get_i64("n_seeds"));
  std::vector<std::vector<SampleResult>> results(n_seeds);
  parallel_for(n_seeds, opts.jobs, [&](std::size_t i) {
    std::vector<SampleResult> per_variant;
    for (const std::string& label : labels) {
      per_variant.push_back(sample(model, prompt, schedule,
                                   update_config_from(cfg, model, label == "ebcu"),
                                   base_seed + i));
    }
    results[i] = std::move(per_variant);
  });

  std::ofstream corr = open_out(fs::path(opts.out_dir) / "correlations.csv");
  corr << "seed,variant,metric,value\n";
  for (std::size_t v = 0; v < labels.size(); ++v) {
    std::vector<LabeledTrace> traces;
    for (std::size_t i = 0; i < n_seeds; ++i) {
      traces.push_back({base_seed + i, labels[v], &results[i][v].trace});
    }
    write_seed_traces(fs::path(opts.out_dir) / ("trace_" + labels[v] + ".csv"), traces);
  }
  for (std::size_t i = 0; i < n_seeds; ++i) {
    for (std::size_t v = 0; v < labels.size(); ++v) {
      const std::string name =
          "grid_" + labels[v] + "_s" + std::to_string(base_seed + i) + ".csv";
      write_csv(results[i][v].grid, (fs::path(opts.out_dir) / name).string());
      append_correlation_rows(corr, base_seed + i, labels[v], results[i][v].grid, prompt);
    }
  }
  std::cout << "wrote " << n_seeds * labels.size() << " grid(s) over " << labels.size()
            << " variant(s)\n";
  return 0;
}

ContextSet compose_contexts(const ToyDenoiser& model, const std::vector<int>& prompt,
                            const Vector& alphas) {
  std::vector<Matrix> contexts;
  std::vector<std::string> context_labels;
  for (int c : prompt) {
    Matrix ctx(2, model.embeddings.cols());
    for (std::size_t j = 0; j < model.embeddings.cols(); ++j) {
      ctx(0, j) = model.embeddings(0, j);
      ctx(1, j) = model.embeddings(c + 1, j);
    }
    contexts.push_back(std::move(ctx));
    context_labels.push_back("concept_" + std::to_string(c));
  }
  return ContextSet(std::move(contexts), alphas, std::move(context_labels));
}

int cmd_compose(const RunConfig& cfg, const CommonOpts& opts) {
  const ToyDenoiser model = model_from(cfg);
  const NoiseSchedule schedule = schedule_from(cfg, "steps");
  const std::vector<int> prompt = prompt_from(cfg, model.cfg.n_concepts);
  const Vector alphas = parse_real_list(cfg.get_text("alpha_s"), "alpha_s");
  if (alphas.size() != prompt.size()) {
    throw ConfigError("alpha_s needs one weight per prompt concept (got " +
                      std::to_string(alphas.size()) + " for " +
                      std::to_string(prompt.size()) + ")");
  }
  const ContextSet set = compose_contexts(model, prompt, alphas);
  const UpdateConfig upd = update_config_from(cfg, model, true);

  // Attention-mixture magnitude at the first layer, probed on a blank grid at
  // t = steps; opposite weights on identical contexts cancel to exactly zero.
  {
    const Matrix h0 = model.embed_input(Matrix(model.cells(), model.cfg.channels),
                                        schedule.T, schedule.T);
    const Matrix q = matmul(h0, model.stack.layers.front().attn.w_q);
    const Matrix mix = ebcq_forward(q, set, model.stack.layers.front().attn.w_k,
                                    model.stack.layers.front().attn.w_v,
                                    model.beta_default());
    write_csv(Matrix(1, 1, {inf_norm(mix)}),
              (fs::path(opts.out_dir) / "attention_mix.csv").string());
    std::cout << "first-layer attention mixture inf-norm: " << format_double(inf_norm(mix))
              << '\n';
  }

  const std::uint64_t base_seed = cfg.get_u64("seed");
  const std::size_t n_seeds = static_cast<std::size_t>(cfg.get_i64("n_seeds"));
  std::vector<std::optional<SampleResult>> results(n_seeds);
  parallel_for(n_seeds, opts.jobs, [&](std::size_t i) {
    results[i] = sample_with_contexts(model, set, schedule, upd, base_seed + i);
  });

  std::vector<LabeledTrace> traces;
  for (std::size_t i = 0; i < n_seeds; ++i) {
    traces.push_back({base_seed + i, "ebcq", &results[i]->trace});
  }
  write_seed_traces(fs::path(opts.out_dir) / "trace_ebcq.csv", traces);
  std::ofstream corr = open_out(fs::path(opts.out_dir) / "correlations.csv");
  corr << "seed,variant,metric,value\n";
  for (std::size_t i = 0; i < n_seeds; ++i) {
    const std::string name = "grid_s" + std::to_string(base_seed + i) + ".csv";
    write_csv(results[i]->grid, (fs::path(opts.out_dir) / name).string());
    append_correlation_rows(corr, base_seed + i, "ebcq", results[i]->grid, prompt);
  }
  std::cout << "wrote " << n_seeds << " composed grid(s) over " << set.size()
            << " context(s)\n";
  return 0;
}

int cmd_inpaint(const RunConfig& cfg, const CommonOpts& opts) {
  const ToyDenoiser model = model_from(cfg);
  const NoiseSchedule schedule = schedule_from(cfg, "steps");
  const std::vector<int> prompt = prompt_from(cfg, model.cfg.n_concepts);
  const Matrix mask_matrix = read_csv_matrix(cfg.get_text("mask"));
  if (mask_matrix.data().size() != model.cells()) {
    throw ConfigError("mask: expected " + std::to_string(model.cells()) +
                      " entries, got " + std::to_string(mask_matrix.data().size()));
  }
  const Vector mask = mask_matrix.data();
  const int known_concept = static_cast<int>(cfg.get_i64("known_concept"));
  const Matrix known = scale(concept_template(known_concept), cfg.get_f64("amplitude"));
  const bool updates_on = cfg.get_text("variant") == "ebcu";
  const UpdateConfig upd = update_config_from(cfg, model, updates_on);

  const std::uint64_t base_seed = cfg.get_u64("seed");
  const std::size_t n_seeds = static_cast<std::size_t>(cfg.get_i64("n_seeds"));
  std::vector<std::optional<SampleResult>> results(n_seeds);
  parallel_for(n_seeds, opts.jobs, [&](std::size_t i) {
    results[i] = inpaint(model, known, mask, prompt, schedule, upd, base_seed + i);
  });

  std::vector<LabeledTrace> traces;
  for (std::size_t i = 0; i < n_seeds; ++i) {
    traces.push_back({base_seed + i, cfg.get_text("variant"), &results[i]->trace});
  }
  write_seed_traces(fs::path(opts.out_dir) / ("trace_" + cfg.get_text("variant") + ".csv"),
                    traces);
  std::ofstream corr = open_out(fs::path(opts.out_dir) / "correlations.csv");
  corr << "seed,variant,metric,value\n";
  for (std::size_t i = 0; i < n_seeds; ++i) {
    const std::string name = "inpaint_s" + std::to_string(base_seed + i) + ".csv";
    write_csv(results[i]->grid, (fs::path(opts.out_dir) / name).string());
    append_correlation_rows(corr, base_seed + i, cfg.get_text("variant"), results[i]->grid,
                            prompt);
  }
  std::size_t fill = 0;
  for (double m : mask) fill += m == 1.0 ? 1 : 0;
  std::cout << "inpainted " << fill << "/" << mask.size() << " cells on " << n_seeds
            << " seed(s)\n";
  return 0;
}

int cmd_energy_trace(const RunConfig& cfg, const CommonOpts& opts) {
  if (cfg.get_text("checkpoint").empty()) {
    throw ConfigError("energy-trace requires checkpoint=<trained model file>");
  }
  const ToyDenoiser model = load_denoiser(cfg.get_text("checkpoint"));
  if (!model.trained) {
    throw ConfigError("energy-trace: checkpoint '" + cfg.get_text("checkpoint") +
                      "' holds an untrained model");
  }
  const NoiseSchedule schedule = schedule_from(cfg, "steps");
  const std::vector<int> prompt = prompt_from(cfg, model.cfg.n_concepts);
  const UpdateConfig upd_baseline = update_config_from(cfg, model, false);
  const UpdateConfig upd_ebcu = update_config_from(cfg, model, true);

  const std::uint64_t base_seed = cfg.get_u64("seed");
  const std::size_t n_seeds = static_cast<std::size_t>(cfg.get_i64("n_seeds"));
  std::vector<std::optional<std::pair<SampleResult, SampleResult>>> runs(n_seeds);
  parallel_for(n_seeds, opts.jobs, [&](std::size_t i) {
    runs[i].emplace(sample(model, prompt, schedule, upd_baseline, base_seed + i),
                    sample(model, prompt, schedule, upd_ebcu, base_seed + i));
  });

  std::vector<LabeledTrace> traces;
  for (std::size_t i = 0; i < n_seeds; ++i) {
    traces.push_back({base_seed + i, "baseline", &runs[i]->first.trace});
    traces.push_back({base_seed + i, "ebcu", &runs[i]->second.trace});
  }
  write_seed_traces(fs::path(opts.out_dir) / "trace_raw.csv", traces);

  const long T = schedule.T;
  const std::size_t layers = model.stack.depth();
  const std::size_t n_cells = static_cast<std::size_t>(T) * layers;
  auto cell_of = [&](const EnergyRecord& rec) {
    return static_cast<std::size_t>(T - rec.t) * layers +
           static_cast<std::size_t>(rec.layer - 1);
  };

  // Per (t, layer) cell: conditional-energy samples across seeds.
  std::vector<Vector> cond_baseline(n_cells), cond_ebcu(n_cells);
  Vector diff_by_step(static_cast<std::size_t>(T), 0.0);  // posterior, baseline - ebcu
  for (std::size_t i = 0; i < n_seeds; ++i) {
    const EnergyTrace& tb = runs[i]->first.trace;
    const EnergyTrace& te = runs[i]->second.trace;
    for (std::size_t r = 0; r < tb.size(); ++r) {
      const std::size_t cell = cell_of(tb[r]);
      cond_baseline[cell].push_back(tb[r].e_cond);
      cond_ebcu[cell].push_back(te[r].e_cond);
      const double post_b = tb[r].e_cond + tb[r].e_prior;
      const double post_e = te[r].e_cond + te[r].e_prior;
      diff_by_step[static_cast<std::size_t>(T - tb[r].t)] += post_b - post_e;
    }
  }

  auto mean_of = [](const Vector& v) {
    Neumaier acc;
    for (double x : v) acc.add(x);
    return acc.value() / static_cast<double>(v.size());
  };
  auto std_of = [&](const Vector& v, double mean) {
    if (v.size() < 2) return 0.0;
    Neumaier acc;
    for (double x : v) acc.add((x - mean) * (x - mean));
    return std::sqrt(acc.value() / static_cast<double>(v.size() - 1));
  };

  double cells_lower = 0.0;
  {
    std::ofstream os = open_out(fs::path(opts.out_dir) / "trace_cells.csv");
    os << "t,layer,mean_baseline,std_baseline,mean_ebcu,std_ebcu,frac_seeds_ebcu_lower\n";
    for (long t = T; t >= 1; --t) {
      for (std::size_t l = 1; l <= layers; ++l) {
        const std::size_t cell = static_cast<std::size_t>(T - t) * layers + (l - 1);
        const double mb = mean_of(cond_baseline[cell]);
        const double me = mean_of(cond_ebcu[cell]);
        double lower_seeds = 0.0;
        for (std::size_t i = 0; i < cond_baseline[cell].size(); ++i) {
          if (cond_ebcu[cell][i] < cond_baseline[cell][i]) {
            lower_seeds += 1.0;
          } else if (cond_ebcu[cell][i] == cond_baseline[cell][i]) {
            lower_seeds += 0.5;
          }
        }
        os << t << ',' << l << ',' << format_double(mb) << ','
           << format_double(std_of(cond_baseline[cell], mb)) << ',' << format_double(me)
           << ',' << format_double(std_of(cond_ebcu[cell], me)) << ','
           << format_double(lower_seeds / static_cast<double>(n_seeds)) << '\n';
        if (me < mb) {
          cells_lower += 1.0;
        } else if (me == mb) {
          cells_lower += 0.5;
        }
      }
    }
  }
  const double fraction = cells_lower / static_cast<double>(n_cells);

  double min_cum = 0.0;
  {
    std::ofstream os = open_out(fs::path(opts.out_dir) / "cumdiff.csv");
    os << "t,mean_posterior_diff,cumulative\n";
    double cum = 0.0;
    min_cum = 1e308;
    for (long t = T; t >= 1; --t) {
      const double diff = diff_by_step[static_cast<std::size_t>(T - t)] /
                          static_cast<double>(n_seeds * layers);
      cum += diff;
      min_cum = std::min(min_cum, cum);
      os << t << ',' << format_double(diff) << ',' << format_double(cum) << '\n';
    }
  }
  write_csv(Matrix(1, 1, {fraction}), (fs::path(opts.out_dir) / "fraction.csv").string());

  // Layer-averaged mean conditional energy per step, with +-std bands.
  {
    Vector xs, mb_curve, me_curve, mb_lo, mb_hi, me_lo, me_hi;
    for (long t = T; t >= 1; --t) {
      Vector pooled_b, pooled_e;
      for (std::size_t l = 1; l <= layers; ++l) {
        const std::size_t cell = static_cast<std::size_t>(T - t) * layers + (l - 1);
        pooled_b.insert(pooled_b.end(), cond_baseline[cell].begin(), cond_baseline[cell].end());
        pooled_e.insert(pooled_e.end(), cond_ebcu[cell].begin(), cond_ebcu[cell].end());
      }
      const double mb = mean_of(pooled_b);
      const double me = mean_of(pooled_e);
      const double sb = std_of(pooled_b, mb);
      const double se = std_of(pooled_e, me);
      xs.push_back(static_cast<double>(t));
      mb_curve.push_back(mb);
      me_curve.push_back(me);
      mb_lo.push_back(mb - sb);
      mb_hi.push_back(mb + sb);
      me_lo.push_back(me - se);
      me_hi.push_back(me + se);
    }
    LinePlot plot("Conditional energy by sampling step", "t", "mean e_cond");
    plot.add_band(xs, mb_lo, mb_hi, "#d62728");
    plot.add_band(xs, me_lo, me_hi, "#1f77b4");
    plot.add_series("baseline", xs, mb_curve, "#d62728");
    plot.add_series("context updates", xs, me_curve, "#1f77b4");
    plot.write((fs::path(opts.out_dir) / "energy_mean.svg").string());

    Vector cum_xs, cum_ys;
    double cum = 0.0;
    for (long t = T; t >= 1; --t) {
      cum += diff_by_step[static_cast<std::size_t>(T - t)] /
             static_cast<double>(n_seeds * layers);
      cum_xs.push_back(static_cast<double>(T - t));
      cum_ys.push_back(cum);
    }
    LinePlot cum_plot("Cumulative posterior-energy difference", "steps taken",
                      "cumulative (baseline - updated)");
    cum_plot.add_series("cumulative diff", cum_xs, cum_ys, "#2ca02c");
    cum_plot.write((fs::path(opts.out_dir) / "cumdiff.svg").string());
  }

  std::cout << "fraction of (t,layer) cells with lower mean conditional energy: "
            << format_double(fraction) << '\n';
  std::cout << "minimum cumulative posterior-energy difference: " << format_double(min_cum)
            << '\n';
  return 0;
}

using CommandFn = int (*)(const RunConfig&, const CommonOpts&);

const std::map<std::string, CommandFn>& command_table() {
  static const std::map<std::string, CommandFn> kTable = {
      {"gradcheck", cmd_gradcheck},   {"hopfield-demo", cmd_hopfield_demo},
      {"train", cmd_train},           {"sample", cmd_sample},
      {"compose", cmd_compose},       {"inpaint", cmd_inpaint},
      {"energy-trace", cmd_energy_trace},
  };
  return kTable;
}

struct SubBinding {
  CLI::App* sub = nullptr;
  CommonOpts common;
  std::map<std::string, std::string> raw;
  std::vector<std::pair<CLI::Option*, std::string>> value_flags;
  std::vector<std::pair<CLI::Option*, std::string>> presence_flags;

  void opt(const std::string& flag, const std::string& key, const std::string& desc) {
    value_flags.emplace_back(sub->add_option(flag, raw[key], desc), key);
  }
  void flag(const std::string& flag_name, const std::string& key, const std::string& desc,
            bool hidden = false) {
    CLI::Option* o = sub->add_flag(flag_name, desc);
    if (hidden) o->group("");
    presence_flags.emplace_back(o, key);
  }
  KeyValueMap overrides() const {
    KeyValueMap m;
    for (const auto& [o, key] : value_flags) {
      if (o->count() > 0) m[key] = raw.at(key);
    }
    for (const auto& [o, key] : presence_flags) {
      if (o->count() > 0) m[key] = "1";
    }
    return m;
  }
};

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"energy-based cross-attention experiments"};
  app.require_subcommand(1);

  std::map<std::string, SubBinding> bindings;
  for (const std::string& name : command_names()) {
    SubBinding& b = bindings[name];
    b.sub = app.add_subcommand(name, "");
    b.common.out_dir = "runs/" + name;
    b.sub->add_option("--config", b.common.config_path, "key=value config file");
    b.sub->add_option("--out", b.common.out_dir, "output directory");
    b.sub->add_option("--jobs", b.common.jobs, "worker threads for multi-seed runs");
    b.opt("--seed", "seed", "base RNG seed");
    if (name == "gradcheck") {
      b.opt("--seeds", "seeds", "instances per check");
      b.opt("--tol", "tol", "max allowed relative error");
      b.flag("--inject-sign-flip", "inject_sign_flip", "negate analytic gradients", true);
    } else if (name == "hopfield-demo") {
      b.opt("--n-patterns", "n_patterns", "stored patterns");
      b.opt("--dim", "dim", "pattern dimension");
      b.opt("--beta", "beta", "inverse temperature");
      b.opt("--eta", "eta", "step size");
      b.opt("--iters", "iters", "iteration budget");
      b.opt("--tol", "tol", "convergence threshold on the update inf-norm");
    } else if (name == "train") {
      b.opt("--steps", "steps", "optimizer steps");
      b.opt("--lr", "lr", "learning rate");
      b.opt("--batch", "batch", "examples per step");
      b.opt("--optimizer", "optimizer", "sgd or adam");
      b.flag("--shuffle-labels", "shuffle_labels", "train with rotated prompts");
    } else {
      b.opt("--steps", "steps", "denoising steps");
      b.opt("--prompt", "prompt", "comma-separated concept ids");
      b.opt("--checkpoint", "checkpoint", "denoiser checkpoint file");
      b.opt("--n-seeds", "n_seeds", "number of seeds, base seed first");
      b.opt("--gamma-attn", "gamma_attn", "attraction rate for context updates");
      b.opt("--gamma-reg", "gamma_reg", "regularization rate for context updates");
      b.opt("--schedule", "schedule", "rate profile: constant, step or exp");
      b.opt("--tau", "tau", "step-schedule threshold");
      b.opt("--lambda", "lambda", "exp-schedule decay");
      if (name == "sample" || name == "inpaint") {
        b.opt("--variant", "variant", "baseline, ebcu or both");
      }
      if (name == "compose") b.opt("--alpha-s", "alpha_s", "per-context weights");
      if (name == "inpaint") {
        b.opt("--mask", "mask", "CSV file, one 0/1 entry per cell; 1 = generate");
        b.opt("--known-concept", "known_concept", "template for the known region");
      }
    }
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    for (auto& [name, b] : bindings) {
      if (!b.sub->parsed()) continue;
      const KeyValueMap file_values =
          b.common.config_path.empty() ? KeyValueMap{} : read_config_file(b.common.config_path);
      const RunConfig cfg = resolve_config(name, file_values, b.overrides());
      fs::create_directories(b.common.out_dir);
      write_manifest(cfg, (fs::path(b.common.out_dir) / "manifest.txt").string());
      return command_table().at(name)(cfg, b.common);
    }
    throw ConfigError("no subcommand given");
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace ebca::cli
