#pragma once

#include "twolevel/common.hpp"
#include "twolevel/fem.hpp"
#include "twolevel/grid.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace twolevel {

enum class Frozen : std::uint8_t { free = 0, solid = 1, void_ = 2 };

/// Design variable of both levels: one density per grid element (inactive entries
/// are ignored) plus the freezing state used by the coarse stage loop.
struct DensityField {
  std::vector<double> rho;
  std::vector<Frozen> state;
  int stage = 0;

  static DensityField uniform(const CartesianGrid& grid, double value);
  bool is_free(int e) const { return state[e] == Frozen::free; }
};

/// Total material volume sum(rho_e * vol_e) over active elements.
double material_volume(const CartesianGrid& grid, const DensityField& field);

struct OCParams {
  double move = 0.2;      ///< relative move limit zeta
  double damping = 0.5;   ///< exponent eta
  double vol_tol = 1e-7;  ///< relative tolerance on the volume constraint
  int max_bisection = 400;
};

struct ThresholdPolicy {
  double lower = 0.12;
  double upper = 0.88;
  double volume_fraction = 0.5;

  /// Accepts rho_min <= lower < upper <= 1; the closed end points give the
  /// degenerate "nothing ever freezes" policy.
  void validate(const Material& material) const;
};

/// dc/drho_e = -p rho_e^(p-1) u_e^T K_e u_e (K_e at unit density). Zero for inactive elements.
std::vector<double> sensitivity(const CartesianGrid& grid, std::span<const double> rho, const Material& material,
                                const Eigen::VectorXd& u, Execution exec = Execution::parallel);

/// Mesh-independency sensitivity filter with cone weights max(0, r_min - dist), distances
/// in element widths: out_e = sum_f H_ef rho_f s_f / (max(rho_e, 1e-3) sum_f H_ef).
std::vector<double> filter_sensitivities(const CartesianGrid& grid, std::span<const double> rho,
                                         std::span<const double> sens, double r_min,
                                         Execution exec = Execution::parallel);

struct OCResult {
  double lagrange = 0.0;        ///< volume multiplier Lambda
  double volume = 0.0;          ///< achieved material volume
  bool constraint_met = false;  ///< false when the move limit kept the target out of reach
};

/// One optimality-criteria step on the free elements of `field`, in place. Frozen elements
/// are untouched but count towards the volume. Throws NumericalError when the target lies
/// outside what any density assignment of the free elements can reach.
OCResult oc_update(const CartesianGrid& grid, DensityField& field, std::span<const double> filtered_sens,
                   double volume_target, const OCParams& params, double rho_min,
                   Execution exec = Execution::parallel);

/// Single scalar density update: rho * B^eta clamped to the move-limited box.
double oc_step(double rho, double b, const OCParams& params, double rho_min);

struct SimpParams {
  double r_min = 1.5;
  double eps = 0.03;
  int max_iterations = 200;
  OCParams oc;
};

struct IterationRecord {
  int stage = 0;
  int iteration = 0;
  double compliance = 0.0;
  double volume = 0.0;      ///< volume fraction over the active domain
  double max_change = 0.0;
};

struct InnerResult {
  std::vector<IterationRecord> history;
  bool converged = false;
};

/// FE solve -> sensitivity -> filter -> OC loop on `field` until max |drho| < eps or
/// the iteration cap (flagged through `converged`). The penalty comes from the system's material.
InnerResult simp_inner_solve(FESystem& system, const Eigen::VectorXd& loads, DensityField& field,
                             double volume_target, const SimpParams& params, Execution exec = Execution::parallel);

struct StageOptions {
  int max_stages = 50;
  Execution exec = Execution::parallel;
  /// Called with the field at the end of each stage's inner solve, before freezing.
  std::function<void(const DensityField&)> on_stage;
};

struct StageResult {
  DensityField field;
  FESolution solution;  ///< FE solution of the final field
  int stages = 0;
  bool converged = false;
  std::vector<IterationRecord> log;
  std::vector<DensityField> snapshots;  ///< field at the end of every stage
};

/// Threshold-freezing loop around simp_inner_solve. `material.penalty` is the coarse penalty.
StageResult stage_loop(const CartesianGrid& grid, const BoundarySpec& boundary, const Material& material,
                       const ThresholdPolicy& policy, const SimpParams& params, const StageOptions& options = {});

/// Freeze out-of-range free elements (ties freeze) and void any non-void element left with
/// three or more frozen-void edge neighbours. Returns the number of newly frozen elements.
int freeze_out_of_range(const CartesianGrid& grid, DensityField& field, const ThresholdPolicy& policy,
                        double rho_min);

/// Multiplicatively rescale free densities (clamped to [rho_min, 1]) so the total volume
/// hits the target. Returns false when the free elements cannot absorb the difference.
bool restore_volume(const CartesianGrid& grid, DensityField& field, double volume_target, double rho_min,
                    double rel_tol = 1e-10);

}  // namespace twolevel
