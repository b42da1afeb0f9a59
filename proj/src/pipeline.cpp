#include "twolevel/pipeline.hpp"

#include "json.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

namespace twolevel {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::uint8_t> void_mask_of(const CartesianGrid& grid, const DensityField& field) {
  std::vector<std::uint8_t> mask(grid.num_elements(), 0);
  for (int e : grid.active_elements()) mask[e] = field.state[e] == Frozen::void_ ? 1 : 0;
  return mask;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string numbered(const char* pattern, int value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, value);
  return buf;
}

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json cell_to_json(const FineCellResult& c) {
  json j;
  j["cell"] = c.cell;
  j["iterations"] = c.iterations;
  j["converged"] = c.converged;
  j["optimized"] = c.optimized;
  j["beta"] = c.beta;
  j["nondiscreteness"] = c.nondiscreteness;
  j["compliance"] = c.compliance;
  j["force_scale"] = c.force_scale;
  j["reactions"] = c.reactions;
  j["error"] = c.error;
  j["rho"] = c.rho;
  json hist = json::array();
  for (const auto& h : c.history) {
    hist.push_back({h.iteration, h.compliance, h.volume, h.max_change, h.beta, h.nondiscreteness, h.projected});
  }
  j["history"] = hist;
  return j;
}

FineCellResult cell_from_json(const json& j) {
  FineCellResult c;
  c.cell = j.at("cell");
  c.iterations = j.at("iterations");
  c.converged = j.at("converged");
  c.optimized = j.at("optimized");
  c.beta = j.at("beta");
  c.nondiscreteness = j.at("nondiscreteness");
  c.compliance = j.at("compliance");
  c.force_scale = j.at("force_scale");
  c.reactions = j.at("reactions").get<std::array<double, 3>>();
  c.error = j.at("error");
  c.rho = j.at("rho").get<std::vector<double>>();
  for (const auto& h : j.at("history")) {
    FineIteration it;
    it.iteration = h[0];
    it.compliance = h[1];
    it.volume = h[2];
    it.max_change = h[3];
    it.beta = h[4];
    it.nondiscreteness = h[5];
    it.projected = h[6];
    c.history.push_back(it);
  }
  return c;
}

void write_raster_csv(const fs::path& path, const std::vector<double>& rho, int n) {
  // Same orientation as the stitched image: top row first.
  HighResImage img;
  img.width = img.height = img.n = n;
  img.pixels.resize(rho.size());
  for (int fx = 0; fx < n; ++fx) {
    for (int fy = 0; fy < n; ++fy) img.at(fx, n - 1 - fy) = rho[static_cast<std::size_t>(fx) * n + fy];
  }
  write_csv(path.string(), img);
}

}  // namespace

PipelineResult run_pipeline(const RunConfig& config, const PipelineOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  PipelineResult result;
  result.problem = build_problem(config);
  const CartesianGrid& grid = result.problem.grid;
  const BoundarySpec& boundary = result.problem.boundary;
  auto say = [&](const std::string& line) {
    if (options.log) *options.log << line << std::endl;
  };

  const fs::path out(config.output);
  const std::string lock = canonical_text(config);
  bool resume = false;
  if (options.write_artifacts) {
    try {
      fs::create_directories(out / "coarse");
      resume = read_text(out / "config.lock") == lock;
      if (!resume) fs::remove_all(out / "cells");
      fs::create_directories(out / "cells");
    } catch (const fs::filesystem_error& ex) {
      throw IoError(ex.what());
    }
    write_text(out / "config.lock", lock);
  }

  StageOptions stage_options;
  stage_options.max_stages = config.max_stages;
  stage_options.on_stage = [&](const DensityField& field) {
    int frozen = 0;
    for (int e : grid.active_elements()) frozen += field.is_free(e) ? 0 : 1;
    say("coarse stage " + std::to_string(field.stage) + ": " + std::to_string(frozen) + " frozen cells");
    if (!options.write_artifacts) return;
    const std::string base = numbered("stage_%02d", field.stage);
    write_pgm((out / "coarse" / (base + ".pgm")).string(), coarse_image(grid, field.rho, 8));
    write_csv((out / "coarse" / (base + ".csv")).string(), coarse_image(grid, field.rho, 1));
  };
  result.coarse = stage_loop(grid, boundary, config.material, config.thresholds, config.coarse, stage_options);
  const StageResult& coarse = result.coarse;

  if (options.write_artifacts) {
    std::ostringstream log;
    log << "stage,iteration,compliance,volume,max_change\n";
    for (const auto& r : coarse.log) {
      log << r.stage << ',' << r.iteration << ',' << g17(r.compliance) << ',' << g17(r.volume) << ','
          << g17(r.max_change) << '\n';
    }
    write_text(out / "coarse_log.csv", log.str());
  }

  result.equilibration = equilibrate_all(grid, boundary, config.material, coarse.field.rho, coarse.solution.u,
                                         void_mask_of(grid, coarse.field));
  const auto& diag = result.equilibration.diagnostics;
  const double length_scale = std::max(grid.hx(), grid.hy());
  const double scale = diag.force_scale > 0.0 ? diag.force_scale : 1.0;
  say("equilibration: max net force " + g17(diag.max_net_force / scale) + ", max net moment " +
      g17(diag.max_net_moment / (scale * length_scale)) + " (relative)");

  json certificate;
  certificate["force_scale"] = diag.force_scale;
  certificate["max_lambda"] = diag.max_lambda;
  certificate["max_lambda_node"] = diag.max_lambda_node;
  certificate["max_net_force"] = diag.max_net_force;
  certificate["max_net_moment"] = diag.max_net_moment;
  certificate["relative_net_force"] = diag.max_net_force / scale;
  certificate["relative_net_moment"] = diag.max_net_moment / (scale * length_scale);
  certificate["relative_lambda"] = diag.max_lambda / scale;
  certificate["max_action_reaction"] = diag.max_action_reaction;
  certificate["worst_element"] = diag.worst_element;
  certificate["checkerboard_nodes"] = diag.checkerboard_nodes;
  json kinds;
  for (int k = 0; k < kNodeKindCount; ++k) kinds[to_string(static_cast<NodeKind>(k))] = diag.kind_counts[k];
  certificate["node_kinds"] = kinds;
  if (options.write_artifacts) {
    write_tractions_csv((out / "tractions.csv").string(), grid, result.equilibration.tractions);
    write_text(out / "certificate.json", certificate.dump(2) + "\n");
  }

  result.cell_loads = config.traction_mode == TractionMode::equilibrated
                          ? result.equilibration.tractions
                          : raw_stress_tractions(grid, config.material, coarse.field.rho, coarse.solution.u);

  int solid = 0;
  int voids = 0;
  int free_cells = 0;
  for (int e : grid.active_elements()) {
    switch (coarse.field.state[e]) {
      case Frozen::solid: ++solid; break;
      case Frozen::void_: ++voids; break;
      default: ++free_cells; break;
    }
  }

  json summary;
  summary["preset"] = config.preset;
  summary["note"] = config.note;
  summary["traction_mode"] = config.traction_mode == TractionMode::equilibrated ? "equilibrated" : "raw_stress";
  summary["coarse"] = {{"stages", coarse.stages},
                       {"converged", coarse.converged},
                       {"iterations", coarse.log.size()},
                       {"compliance", coarse.solution.compliance},
                       {"volume_fraction", material_volume(grid, coarse.field) /
                                               (grid.num_active_elements() * grid.element_volume())},
                       {"solid_cells", solid},
                       {"void_cells", voids},
                       {"free_cells", free_cells}};
  summary["equilibrium"] = certificate;

  if (options.run_fine) {
    const fs::path cells_dir = out / "cells";
    FarmOptions farm_options;
    farm_options.workers = config.workers;
    if (options.write_artifacts && resume) {
      farm_options.load_cached = [&](int cell, FineCellResult& r) {
        const std::string text = read_text(cells_dir / numbered("cell_%05d.json", cell));
        if (text.empty()) return false;
        try {
          r = cell_from_json(json::parse(text));
        } catch (const std::exception&) {
          return false;
        }
        return r.cell == cell && r.error.empty() && r.rho.size() == static_cast<std::size_t>(config.fine.n) * config.fine.n;
      };
    }
    int done = 0;
    farm_options.on_cell_done = [&](const FineCellResult& r) {
      ++done;
      if (options.write_artifacts) {
        write_text(cells_dir / numbered("cell_%05d.json", r.cell), cell_to_json(r).dump() + "\n");
        if (config.write_cell_rasters && r.error.empty())
          write_raster_csv(cells_dir / numbered("cell_%05d.csv", r.cell), r.rho, config.fine.n);
      }
      if (done % 25 == 0 || done == free_cells) say("fine cells: " + std::to_string(done) + " solved");
    };
    result.farm = solve_all_cells(grid, coarse.field, result.cell_loads, config.material, config.fine, farm_options);

    double max_reaction_ratio = 0.0;
    int unconverged = 0;
    int total_iterations = 0;
    std::ostringstream cells_log;
    cells_log << "cell,iterations,converged,beta,nondiscreteness,compliance,force_scale,reaction_x0,reaction_y0,"
                 "reaction_y1,error\n";
    for (int e : grid.active_elements()) {
      const FineCellResult& c = result.farm.cells[e];
      if (!c.optimized) continue;
      const double fs_ = c.force_scale > 0.0 ? c.force_scale : 1.0;
      for (double r : c.reactions) max_reaction_ratio = std::max(max_reaction_ratio, std::abs(r) / fs_);
      unconverged += c.converged ? 0 : 1;
      total_iterations += c.iterations;
      cells_log << e << ',' << c.iterations << ',' << (c.converged ? 1 : 0) << ',' << g17(c.beta) << ','
                << g17(c.nondiscreteness) << ',' << g17(c.compliance) << ',' << g17(c.force_scale) << ','
                << g17(c.reactions[0]) << ',' << g17(c.reactions[1]) << ',' << g17(c.reactions[2]) << ",\""
                << c.error << "\"\n";
    }
    if (options.write_artifacts) write_text(out / "cells_log.csv", cells_log.str());
    summary["fine"] = {{"solved", result.farm.solved},
                       {"reused", result.farm.reused},
                       {"failed", result.farm.failed},
                       {"unconverged", unconverged},
                       {"total_iterations", total_iterations},
                       {"max_relative_reaction", max_reaction_ratio}};

    if (result.farm.failed == 0) {
      std::vector<std::vector<double>> rasters(grid.num_elements());
      for (int e : grid.active_elements()) rasters[e] = result.farm.cells[e].rho;
      result.image = stitch(grid, rasters, config.fine.n);
      const DensityField& field = coarse.field;
      result.continuity =
          continuity_metric(result.image, grid, [&](int a, int b) { return field.is_free(a) || field.is_free(b); });
      summary["image"] = {{"width", result.image.width},
                          {"height", result.image.height},
                          {"continuity_mean", result.continuity.mean},
                          {"continuity_max", result.continuity.max},
                          {"continuity_boundaries", result.continuity.boundaries.size()}};
      if (options.write_artifacts) {
        write_pgm((out / "image.pgm").string(), result.image);
        write_csv((out / "image.csv").string(), result.image);
        write_pgm((out / "legend.pgm").string(), legend_strip(256, 16));
      }
    }
  }

  result.summary_json = summary.dump(2) + "\n";
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (options.write_artifacts) {
    write_text(out / "summary.json", result.summary_json);
    json timing = {{"wall_seconds", result.wall_seconds}, {"workers", config.workers}};
    write_text(out / "timing.json", timing.dump(2) + "\n");
  }
  if (result.farm.failed > 0)
    throw NumericalError(std::to_string(result.farm.failed) + " fine cells failed; see cells_log.csv");
  return result;
}

}  // namespace twolevel
