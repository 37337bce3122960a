#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ebca_cli/commands.hpp"
#include "ebca_cli/runconfig.hpp"

namespace fs = std::filesystem;
using ebca::cli::run_cli;

namespace {

fs::path fresh_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("ebca_cli_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(std::initializer_list<std::string> args) {
  return run_cli(std::vector<std::string>(args));
}

std::size_t line_count(const std::string& text) {
  std::size_t n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

const fs::path& tiny_checkpoint() {
  static const fs::path ckpt = [] {
    const fs::path dir = fresh_dir("fixture_train");
    REQUIRE(run({"train", "--steps", "25", "--out", dir.string()}) == 0);
    return dir / "denoiser.ckpt";
  }();
  return ckpt;
}

}  // namespace

TEST_CASE("help succeeds and bad invocations exit with usage errors") {
  CHECK(run({"--help"}) == 0);
  CHECK(run({}) == 2);
  CHECK(run({"frobnicate"}) == 2);
  CHECK(run({"gradcheck", "--no-such-flag"}) == 2);
}

TEST_CASE("config files reject unknown keys, bad values and duplicates") {
  const fs::path dir = fresh_dir("badcfg");
  {
    std::ofstream cfg(dir / "unknown.txt");
    cfg << "command=gradcheck\nbanana=1\n";
  }
  CHECK(run({"gradcheck", "--config", (dir / "unknown.txt").string(),
             "--out", (dir / "a").string()}) == 2);
  {
    std::ofstream cfg(dir / "range.txt");
    cfg << "command=gradcheck\nseeds=0\n";
  }
  CHECK(run({"gradcheck", "--config", (dir / "range.txt").string(),
             "--out", (dir / "b").string()}) == 2);
  {
    std::ofstream cfg(dir / "dup.txt");
    cfg << "command=gradcheck\nseeds=3\nseeds=4\n";
  }
  CHECK(run({"gradcheck", "--config", (dir / "dup.txt").string(),
             "--out", (dir / "c").string()}) == 2);
  {
    std::ofstream cfg(dir / "wrongcmd.txt");
    cfg << "command=train\n";
  }
  CHECK(run({"gradcheck", "--config", (dir / "wrongcmd.txt").string(),
             "--out", (dir / "d").string()}) == 2);
}

TEST_CASE("gradcheck writes a verdict per check and honors the failure injector") {
  const fs::path dir = fresh_dir("gradcheck");
  CHECK(run({"gradcheck", "--seeds", "3", "--out", dir.string()}) == 0);
  const std::string csv = slurp(dir / "gradcheck.csv");
  CHECK(line_count(csv) == 8);
  CHECK(csv.find("check,seeds,max_rel_err,worst_seed,passed") == 0);
  CHECK(csv.find("key_posterior_grad") != std::string::npos);
  CHECK(csv.find("context_chain_rule") != std::string::npos);

  const fs::path flipped = fresh_dir("gradcheck_flip");
  CHECK(run({"gradcheck", "--seeds", "3", "--inject-sign-flip",
             "--out", flipped.string()}) == 1);
}

TEST_CASE("hopfield demo records a monotone energy trace") {
  const fs::path dir = fresh_dir("hopfield");
  CHECK(run({"hopfield-demo", "--n-patterns", "8", "--dim", "12",
             "--out", dir.string()}) == 0);
  std::ifstream in(dir / "hopfield_trace.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "iter,energy,delta_inf");
  double prev = 1e300;
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    const double energy = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    CHECK(energy <= prev + 1e-12);
    prev = energy;
    ++rows;
  }
  CHECK(rows >= 2);
  CHECK(fs::exists(dir / "hopfield_energy.svg"));
}

TEST_CASE("training writes curve, heldout summary and a loadable checkpoint") {
  const fs::path& ckpt = tiny_checkpoint();
  CHECK(fs::exists(ckpt));
  const fs::path dir = ckpt.parent_path();
  CHECK(line_count(slurp(dir / "loss_curve.csv")) == 26);
  CHECK(line_count(slurp(dir / "heldout.csv")) == 2);
  CHECK(fs::exists(dir / "loss_curve.svg"));
  const std::string manifest = slurp(dir / "manifest.txt");
  CHECK(manifest.rfind("command=train\n", 0) == 0);
  CHECK(manifest.find("steps=25\n") != std::string::npos);
  CHECK(manifest.find("\nout=") == std::string::npos);
  CHECK(manifest.find("\njobs=") == std::string::npos);
}

TEST_CASE("sampling from a checkpoint emits grids, traces and correlations") {
  const fs::path dir = fresh_dir("sample");
  CHECK(run({"sample", "--checkpoint", tiny_checkpoint().string(),
             "--variant", "both", "--n-seeds", "2", "--out", dir.string()}) == 0);
  CHECK(fs::exists(dir / "grid_baseline_s7.csv"));
  CHECK(fs::exists(dir / "grid_ebcu_s8.csv"));
  CHECK(fs::exists(dir / "trace_baseline.csv"));
  CHECK(fs::exists(dir / "trace_ebcu.csv"));
  const std::string corr = slurp(dir / "correlations.csv");
  CHECK(corr.find("seed,variant,metric,value") == 0);
  CHECK(corr.find("min_pair") != std::string::npos);
}

TEST_CASE("a manifest rerun reproduces sampling byte for byte") {
  const fs::path a = fresh_dir("rerun_a");
  CHECK(run({"sample", "--checkpoint", tiny_checkpoint().string(),
             "--n-seeds", "2", "--seed", "19", "--out", a.string()}) == 0);
  const fs::path b = fresh_dir("rerun_b");
  CHECK(run({"sample", "--config", (a / "manifest.txt").string(),
             "--out", b.string()}) == 0);
  for (const auto& entry : fs::directory_iterator(a)) {
    if (entry.path().extension() != ".csv") continue;
    CHECK(slurp(entry.path()) == slurp(b / entry.path().filename()));
  }
  CHECK(slurp(a / "manifest.txt") == slurp(b / "manifest.txt"));
}

TEST_CASE("command-line overrides beat config-file values") {
  const fs::path dir = fresh_dir("override");
  {
    std::ofstream cfg(dir / "cfg.txt");
    cfg << "command=sample\nseed=3\nn_seeds=1\n";
  }
  CHECK(run({"sample", "--config", (dir / "cfg.txt").string(), "--seed", "5",
             "--checkpoint", tiny_checkpoint().string(),
             "--out", (dir / "out").string()}) == 0);
  const std::string manifest = slurp(dir / "out" / "manifest.txt");
  CHECK(manifest.find("seed=5\n") != std::string::npos);
  CHECK(fs::exists(dir / "out" / "grid_baseline_s5.csv"));
}

TEST_CASE("composing a concept with its negation cancels the attention mixture") {
  const fs::path dir = fresh_dir("compose");
  CHECK(run({"compose", "--checkpoint", tiny_checkpoint().string(),
             "--prompt", "2,2", "--alpha-s", "1,-1", "--out", dir.string()}) == 0);
  const std::string mix = slurp(dir / "attention_mix.csv");
  CHECK(std::stod(mix) == 0.0);

  const fs::path bad = fresh_dir("compose_bad");
  CHECK(run({"compose", "--checkpoint", tiny_checkpoint().string(),
             "--prompt", "1,2,3", "--alpha-s", "1,1", "--out", bad.string()}) == 2);
}

TEST_CASE("inpaint requires a mask file of the right size") {
  const fs::path dir = fresh_dir("inpaint");
  CHECK(run({"inpaint", "--checkpoint", tiny_checkpoint().string(),
             "--out", dir.string()}) == 2);

  std::ofstream mask(dir / "mask.csv");
  for (int r = 0; r < 8; ++r) mask << "1,1,1,1,0,0,0,0\n";
  mask.close();
  CHECK(run({"inpaint", "--checkpoint", tiny_checkpoint().string(),
             "--mask", (dir / "mask.csv").string(),
             "--out", (dir / "out").string()}) == 0);
  CHECK(fs::exists(dir / "out" / "inpaint_s7.csv"));

  std::ofstream small(dir / "small.csv");
  small << "1,0\n";
  small.close();
  CHECK(run({"inpaint", "--checkpoint", tiny_checkpoint().string(),
             "--mask", (dir / "small.csv").string(),
             "--out", (dir / "out2").string()}) == 2);
}

TEST_CASE("energy tracing refuses to run without a trained checkpoint") {
  const fs::path dir = fresh_dir("etrace_bad");
  CHECK(run({"energy-trace", "--out", dir.string()}) == 2);

  const fs::path ok = fresh_dir("etrace");
  CHECK(run({"energy-trace", "--checkpoint", tiny_checkpoint().string(),
             "--n-seeds", "2", "--out", ok.string()}) == 0);
  CHECK(fs::exists(ok / "trace_raw.csv"));
  CHECK(fs::exists(ok / "trace_cells.csv"));
  CHECK(fs::exists(ok / "cumdiff.csv"));
  CHECK(fs::exists(ok / "fraction.csv"));
  CHECK(fs::exists(ok / "energy_mean.svg"));
  CHECK(line_count(slurp(ok / "trace_cells.csv")) == 1 + 50 * 4);
}
