#include <doctest.h>

#include "twolevel/pipeline.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

using namespace twolevel;
namespace fs = std::filesystem;

namespace {

const char* kSmall =
    "preset = example1\n"
    "[grid]\nnx = 8\nny = 4\nhx = 0.25\nhy = 0.25\n"
    "[fine]\nn = 8\nmax_iterations = 25\n";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("twolevel_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(TWOLEVEL_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("small run end to end, deterministic and resumable") {
  RunConfig config = parse_config(kSmall);
  config.output = scratch("small_a").string();
  const PipelineResult a = run_pipeline(config);

  for (const char* f : {"config.lock", "coarse_log.csv", "tractions.csv", "certificate.json", "cells_log.csv",
                        "image.pgm", "image.csv", "legend.pgm", "summary.json", "timing.json"}) {
    CHECK_MESSAGE(fs::exists(fs::path(config.output) / f), f);
  }
  CHECK(fs::exists(fs::path(config.output) / "coarse" / "stage_01.pgm"));
  CHECK(a.image.width == 64);
  CHECK(a.image.height == 32);
  CHECK(a.farm.failed == 0);
  const auto& d = a.equilibration.diagnostics;
  CHECK(d.max_net_force <= 1e-8 * d.force_scale);
  CHECK(d.max_action_reaction == 0.0);

  RunConfig again = config;
  again.output = scratch("small_b").string();
  const PipelineResult b = run_pipeline(again);
  CHECK(a.summary_json == b.summary_json);
  CHECK(slurp(fs::path(config.output) / "image.csv") == slurp(fs::path(again.output) / "image.csv"));
  CHECK(slurp(fs::path(config.output) / "image.pgm") == slurp(fs::path(again.output) / "image.pgm"));

  SUBCASE("resume reuses finished cells") {
    const PipelineResult c = run_pipeline(config);
    CHECK(c.farm.solved == 0);
    CHECK(c.farm.reused == a.farm.solved);
    CHECK(c.image.pixels == a.image.pixels);
  }
  SUBCASE("a changed config discards stale cells") {
    RunConfig changed = config;
    changed.fine.eps = 0.02;
    const PipelineResult c = run_pipeline(changed);
    CHECK(c.farm.reused == 0);
  }
  fs::remove_all(config.output);
  fs::remove_all(again.output);
}

TEST_CASE("verification only stops before the cell farm") {
  RunConfig config = parse_config(kSmall);
  PipelineOptions options;
  options.write_artifacts = false;
  options.run_fine = false;
  const PipelineResult r = run_pipeline(config, options);
  CHECK(r.farm.cells.empty());
  CHECK(r.coarse.stages >= 1);
}

TEST_CASE("command line exit codes") {
  const fs::path dir = scratch("cli");
  fs::create_directories(dir);
  {
    std::ofstream(dir / "good.ini") << kSmall;
    std::ofstream(dir / "bad.ini") << "preset = example1\n[fine]\nwhatever = 1\n";
    std::ofstream(dir / "thresholds.ini") << "preset = example1\n[coarse]\nlower = 0.9\nupper = 0.2\n";
  }
  CHECK(run_cli("preset-list") == 0);
  CHECK(run_cli("verify --config " + (dir / "good.ini").string()) == 0);
  CHECK(run_cli("verify --config " + (dir / "bad.ini").string()) == 2);
  CHECK(run_cli("run --config " + (dir / "thresholds.ini").string()) == 2);
  CHECK(run_cli("run --preset nothing") == 2);
  CHECK(run_cli("run --config " + (dir / "missing.ini").string()) == 4);
  CHECK(run_cli("run --config a.ini --preset example1") == 2);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("run --config " + (dir / "good.ini").string() + " --out " + (dir / "out").string()) == 0);
  CHECK(fs::exists(dir / "out" / "summary.json"));
  fs::remove_all(dir);
}
