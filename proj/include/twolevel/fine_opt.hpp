#pragma once

#include "twolevel/coarse_opt.hpp"
#include "twolevel/equilibrate.hpp"
#include "twolevel/fem.hpp"
#include "twolevel/grid.hpp"

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace twolevel {

struct ProjectionParams {
  double beta0 = 1.0;
  double beta_max = 2.0;
  double mu = 0.5;
  double nd_min = 50.0;  ///< gray-level gate, percent
  int cadence = 2;       ///< projection attempted every `cadence` iterations

  void validate() const;
};

struct FineParams {
  int n = 32;
  double penalty = 3.0;
  double r_min = 1.3;
  double eps = 0.01;  ///< stop once the change is below this and continuation has finished
  int max_iterations = 300;
  OCParams oc;
  ProjectionParams projection;
  double equilibrium_tol = 1e-6;   ///< relative; cells whose tractions do not balance are rejected
  bool require_equilibrium = true;

  void validate() const;
};

struct FineCellProblem {
  int cell = -1;
  double target = 0.5;  ///< cell volume fraction
  double hx = 1.0;      ///< physical cell size
  double hy = 1.0;
  ElementTractions tractions;
  Material material;    ///< penalty is taken from FineParams
};

/// Exponential projection towards 0/1 with threshold mu; fixes 0, mu and 1 for every beta.
double project_density(double rho, double beta, double mu);

/// Mean of 4 rho (1 - rho) over the field, in percent.
double measure_nondiscreteness(std::span<const double> rho);

CartesianGrid cell_grid(const FineCellProblem& problem, int n);

/// Each cell side's linear traction split over the n fine edges along it.
std::vector<NeumannLoad> cell_traction_loads(const CartesianGrid& fine, const ElementTractions& tractions);
Eigen::VectorXd apply_cell_tractions(const CartesianGrid& fine, const ElementTractions& tractions);

/// Bottom-left node fixed in x and y, bottom-right node fixed in y.
std::vector<DirichletCondition> rigid_body_supports(const CartesianGrid& fine);

/// Magnitude used to judge cell balance and support reactions: the largest edge resultant bound L max|t|.
double traction_force_scale(double hx, double hy, const ElementTractions& tractions);

struct FineIteration {
  int iteration = 0;
  double compliance = 0.0;
  double volume = 0.0;          ///< volume fraction after the OC update
  double max_change = 0.0;
  double beta = 0.0;            ///< beta in effect after this iteration
  double nondiscreteness = 0.0; ///< percent, of the field after this iteration
  bool projected = false;
};

struct FineCellResult {
  int cell = -1;
  std::vector<double> rho;          ///< n*n, fine element id = ix * n + iy
  int iterations = 0;
  bool converged = false;
  bool optimized = false;           ///< false for frozen cells
  double beta = 0.0;
  double nondiscreteness = 0.0;
  double compliance = 0.0;
  double force_scale = 0.0;
  std::array<double, 3> reactions{};  ///< BL x, BL y, BR y
  std::vector<FineIteration> history;
  std::string error;                  ///< non-empty when the solve failed
};

FineCellResult fine_cell_solve(const FineCellProblem& problem, const FineParams& params);

struct FarmOptions {
  Execution exec = Execution::parallel;
  int workers = 0;  ///< 0 = OpenMP default
  /// Returns true and fills the result when a cell is already available (resume).
  std::function<bool(int cell, FineCellResult&)> load_cached;
  /// Called once per freshly solved cell, serialized.
  std::function<void(const FineCellResult&)> on_cell_done;
};

struct CellFarmResult {
  std::vector<FineCellResult> cells;  ///< indexed by coarse element id; empty rho when inactive
  int solved = 0;
  int reused = 0;
  int failed = 0;
};

/// Frozen cells become uniform rasters; free cells are solved independently.
CellFarmResult solve_all_cells(const CartesianGrid& coarse, const DensityField& field,
                               const std::vector<ElementTractions>& tractions, const Material& material,
                               const FineParams& params, const FarmOptions& options = {});

}  // namespace twolevel
