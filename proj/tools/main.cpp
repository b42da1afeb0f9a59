#include "twolevel/pipeline.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <iostream>
#include <string>

using namespace twolevel;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

struct Source {
  std::string config_path;
  std::string preset_name;
  std::string out;
  int workers = -1;
};

void add_source_flags(CLI::App* cmd, Source& src) {
  auto* cfg = cmd->add_option("--config", src.config_path, "INI run configuration");
  auto* pre = cmd->add_option("--preset", src.preset_name, "built-in preset (see preset-list)");
  cfg->excludes(pre);
  cmd->add_option("--out", src.out, "output directory (overrides the config)");
  cmd->add_option("--workers", src.workers, "worker threads for the cell farm, 0 = all cores")->check(CLI::NonNegativeNumber);
}

RunConfig resolve(const Source& src) {
  RunConfig config;
  if (!src.config_path.empty()) {
    config = load_config_file(src.config_path);
  } else if (!src.preset_name.empty()) {
    config = preset(src.preset_name);
  } else {
    throw ConfigError("one of --config or --preset is required");
  }
  if (!src.out.empty()) config.output = src.out;
  if (src.workers >= 0) config.workers = src.workers;
  config.validate();
  if (config.workers > 0) omp_set_num_threads(config.workers);
  return config;
}

int run(const Source& src) {
  const RunConfig config = resolve(src);
  PipelineOptions options;
  options.log = &std::cerr;
  const PipelineResult result = run_pipeline(config, options);
  std::cout << result.summary_json;
  std::cerr << "wrote " << config.output << " in " << result.wall_seconds << " s\n";
  return 0;
}

int verify(const Source& src) {
  const RunConfig config = resolve(src);
  PipelineOptions options;
  options.run_fine = false;
  options.write_artifacts = !src.out.empty();
  options.log = &std::cerr;
  const PipelineResult result = run_pipeline(config, options);
  const auto& d = result.equilibration.diagnostics;
  const double scale = d.force_scale > 0.0 ? d.force_scale : 1.0;
  const double length = std::max(result.problem.grid.hx(), result.problem.grid.hy());
  const double force = d.max_net_force / scale;
  const double moment = d.max_net_moment / (scale * length);
  const double lambda = d.max_lambda / scale;
  std::cout << "elements checked:      " << result.problem.grid.num_active_elements() << "\n"
            << "max net force / scale:  " << force << "\n"
            << "max net moment / scale: " << moment << "\n"
            << "max node residual:      " << lambda << "\n"
            << "max |t_E + t_M|:        " << d.max_action_reaction << "\n";
  const bool ok = force <= 1e-8 && moment <= 1e-8 && lambda <= 1e-8 && d.max_action_reaction == 0.0;
  std::cout << (ok ? "certificate: PASS" : "certificate: FAIL") << "\n";
  return ok ? 0 : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-level topology optimization: coarse SIMP with threshold freezing, traction "
               "equilibration and per-cell fine SIMP"};
  app.require_subcommand(1);
  Source run_src;
  Source verify_src;
  auto* run_cmd = app.add_subcommand("run", "run the full pipeline and write artifacts");
  add_source_flags(run_cmd, run_src);
  auto* verify_cmd = app.add_subcommand("verify", "coarse solve and equilibration certificate only");
  add_source_flags(verify_cmd, verify_src);
  auto* list_cmd = app.add_subcommand("preset-list", "list the built-in presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (list_cmd->parsed()) {
      for (const auto& name : preset_names()) std::cout << name << "  " << preset(name).note << "\n";
      return 0;
    }
    if (run_cmd->parsed()) return run(run_src);
    return verify(verify_src);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}
