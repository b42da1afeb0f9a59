#pragma once

#include "twolevel/coarse_opt.hpp"
#include "twolevel/config.hpp"
#include "twolevel/equilibrate.hpp"
#include "twolevel/fine_opt.hpp"
#include "twolevel/image.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace twolevel {

struct PipelineOptions {
  bool write_artifacts = true;
  bool run_fine = true;        ///< false stops after equilibration
  std::ostream* log = nullptr; ///< progress lines, none when null
};

struct PipelineResult {
  Problem problem;
  StageResult coarse;
  EquilibrationResult equilibration;
  std::vector<ElementTractions> cell_loads;  ///< tractions handed to the cells (mode dependent)
  CellFarmResult farm;
  HighResImage image;
  ContinuityStats continuity;       ///< over boundaries touching at least one free cell
  double wall_seconds = 0.0;
  std::string summary_json;         ///< deterministic, no timings
};

/// Coarse stage loop, equilibration, cell farm and stitching. With write_artifacts the
/// results land under config.output; a run whose config.lock matches reuses cell results
/// already on disk.
PipelineResult run_pipeline(const RunConfig& config, const PipelineOptions& options = {});

/// Void mask of a coarse field (frozen-void elements).
std::vector<std::uint8_t> void_mask_of(const CartesianGrid& grid, const DensityField& field);

}  // namespace twolevel
