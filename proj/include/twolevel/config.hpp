#pragma once

#include "twolevel/coarse_opt.hpp"
#include "twolevel/fem.hpp"
#include "twolevel/fine_opt.hpp"
#include "twolevel/grid.hpp"

#include <string>
#include <vector>

namespace twolevel {

enum class TractionMode { equilibrated, raw_stress };

/// Edge load described on one side of the domain bounding box, over [from, to] measured
/// along the side's x (bottom/top) or y (left/right) coordinate.
struct LoadSpec {
  std::string type = "parabolic";  ///< parabolic | uniform | none
  int side = kRight;
  double from = 0.0;
  double to = 0.0;                 ///< from == to means the whole side
  double peak = 1.0;
  Vec2 direction{0.0, -1.0};
};

struct SupportNode {
  int jx = 0;
  int jy = 0;
  std::array<bool, 2> fixed{true, true};
};

struct SupportSpec {
  std::vector<int> clamped_sides;
  std::vector<SupportNode> nodes;
};

struct RunConfig {
  std::string preset;
  std::string note;  ///< free text carried into the summary (assumptions of a preset)

  int nx = 32;
  int ny = 16;
  double hx = 1.0 / 16.0;
  double hy = 1.0 / 16.0;
  std::string mask = "full";  ///< full | l_shape
  int cut_x = 0;
  int cut_y = 0;

  Material material{1000.0, 0.3, 1.0, 1e-3};
  ThresholdPolicy thresholds;
  SimpParams coarse;
  int max_stages = 50;
  FineParams fine;

  SupportSpec supports;
  LoadSpec load;

  TractionMode traction_mode = TractionMode::equilibrated;
  std::string output = "out";
  int workers = 0;
  bool write_cell_rasters = false;

  void validate() const;
};

const std::vector<std::string>& preset_names();
/// Throws ConfigError for unknown names.
RunConfig preset(const std::string& name);

/// INI text: an optional top-level `preset = name` followed by [run], [grid], [material],
/// [coarse], [fine], [projection], [supports] and [load] sections. Unknown sections or
/// keys are errors naming the key path.
RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::string& path);

/// Canonical key = value dump; equal configs give identical text.
std::string canonical_text(const RunConfig& config);

struct Problem {
  CartesianGrid grid;
  BoundarySpec boundary;
};

Problem build_problem(const RunConfig& config);

/// Consistent linear tractions on the edges of one side carrying tau(s) = peak (1 - (2 (s - c) / w)^2)
/// over [from, to] (parabolic) or a constant peak (uniform); each edge's traction is the L2 projection
/// of the load onto linear functions, so edge resultants are exact.
std::vector<NeumannLoad> side_load(const CartesianGrid& grid, const LoadSpec& load);

}  // namespace twolevel
