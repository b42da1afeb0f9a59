#include "twolevel/fine_opt.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <string>

namespace twolevel {

void ProjectionParams::validate() const {
  if (!(beta0 >= 0.0 && beta0 <= beta_max)) throw ConfigError("projection: require 0 <= beta0 <= beta_max");
  if (!(mu > 0.0 && mu < 1.0)) throw ConfigError("projection: mu must be in (0, 1)");
  if (!(nd_min >= 0.0 && nd_min <= 100.0)) throw ConfigError("projection: nd_min must be a percentage");
  if (cadence < 1) throw ConfigError("projection: cadence must be positive");
}

void FineParams::validate() const {
  if (n < 2) throw ConfigError("fine: resolution must be at least 2");
  if (!(penalty >= 1.0)) throw ConfigError("fine: penalty must be >= 1");
  if (!(r_min > 0.0)) throw ConfigError("fine: filter radius must be positive");
  if (!(eps > 0.0)) throw ConfigError("fine: eps must be positive");
  if (max_iterations < 1) throw ConfigError("fine: iteration cap must be positive");
  projection.validate();
}

double project_density(double rho, double beta, double mu) {
  if (rho <= mu) {
    const double s = 1.0 - rho / mu;
    return mu * (std::exp(-beta * s) - s * std::exp(-beta));
  }
  const double s = (rho - mu) / (1.0 - mu);
  return (1.0 - mu) * (1.0 - std::exp(-beta * s) + s * std::exp(-beta)) + mu;
}

double measure_nondiscreteness(std::span<const double> rho) {
  if (rho.empty()) return 0.0;
  double sum = 0.0;
  for (double r : rho) sum += 4.0 * r * (1.0 - r);
  return 100.0 * sum / static_cast<double>(rho.size());
}

CartesianGrid cell_grid(const FineCellProblem& problem, int n) {
  return CartesianGrid(n, n, problem.hx / n, problem.hy / n);
}

std::vector<NeumannLoad> cell_traction_loads(const CartesianGrid& fine, const ElementTractions& tractions) {
  const int n = fine.nx();
  std::vector<NeumannLoad> loads;
  for (int side = 0; side < 4; ++side) {
    const EdgeTraction& t = tractions[side];
    if (t.start.isZero(0.0) && t.end.isZero(0.0)) continue;
    for (int k = 0; k < n; ++k) {
      int ix = 0;
      int iy = 0;
      switch (side) {
        case kBottom: ix = k; iy = 0; break;
        case kRight: ix = n - 1; iy = k; break;
        case kTop: ix = n - 1 - k; iy = n - 1; break;
        default: ix = 0; iy = n - 1 - k; break;
      }
      const double s0 = static_cast<double>(k) / n;
      const double s1 = static_cast<double>(k + 1) / n;
      loads.push_back({fine.element_id(ix, iy), side, t.start + s0 * (t.end - t.start),
                       t.start + s1 * (t.end - t.start)});
    }
  }
  return loads;
}

Eigen::VectorXd apply_cell_tractions(const CartesianGrid& fine, const ElementTractions& tractions) {
  BoundarySpec spec;
  spec.neumann = cell_traction_loads(fine, tractions);
  return assemble_loads(fine, spec);
}

std::vector<DirichletCondition> rigid_body_supports(const CartesianGrid& fine) {
  return {{fine.node_id(0, 0), {true, true}, Vec2::Zero()}, {fine.node_id(fine.nx(), 0), {false, true}, Vec2::Zero()}};
}

double traction_force_scale(double hx, double hy, const ElementTractions& tractions) {
  double scale = 0.0;
  for (int edge = 0; edge < 4; ++edge) {
    const double length = (edge % 2 == 0) ? hx : hy;
    scale = std::max(scale, length * std::max(tractions[edge].start.norm(), tractions[edge].end.norm()));
  }
  return scale;
}

FineCellResult fine_cell_solve(const FineCellProblem& problem, const FineParams& params) {
  params.validate();
  Material material = problem.material;
  material.penalty = params.penalty;
  material.validate();
  if (!(problem.target > material.rho_min && problem.target <= 1.0))
    throw ConfigError("fine cell " + std::to_string(problem.cell) + ": target outside (rho_min, 1]");

  FineCellResult result;
  result.cell = problem.cell;
  result.optimized = true;
  result.force_scale = traction_force_scale(problem.hx, problem.hy, problem.tractions);
  const Resultant net = element_resultant(problem.hx, problem.hy, problem.tractions);
  if (params.require_equilibrium) {
    const double tol = params.equilibrium_tol * result.force_scale;
    if (net.force.norm() > tol || std::abs(net.moment) > tol * std::max(problem.hx, problem.hy))
      throw NumericalError("fine cell " + std::to_string(problem.cell) + ": tractions are not self-equilibrated");
  }

  const int n = params.n;
  const CartesianGrid fine = cell_grid(problem, n);
  BoundarySpec supports;
  supports.dirichlet = rigid_body_supports(fine);
  FESystem system(fine, supports, material);
  const Eigen::VectorXd loads = apply_cell_tractions(fine, problem.tractions);
  const int bl = fine.node_id(0, 0);
  const int br = fine.node_id(n, 0);

  DensityField field = DensityField::uniform(fine, problem.target);
  // Support reactions follow from the last solve; the supports are statically determinate.
  auto record_reactions = [&](const FESolution& sol, const std::vector<double>& rho) {
    const auto forces = element_nodal_forces(fine, rho, material, sol.u, Execution::serial);
    const Vec2 r0 = nodal_reaction(fine, forces, loads, bl);
    const Vec2 r1 = nodal_reaction(fine, forces, loads, br);
    result.reactions = {r0.x(), r0.y(), r1.y()};
    result.compliance = sol.compliance;
  };

  double beta = params.projection.beta0;
  if (problem.target >= 1.0) {
    record_reactions(system.solve(field.rho, loads), field.rho);
    result.converged = true;
  } else {
    const double cell_volume = problem.hx * problem.hy;
    const double volume_target = problem.target * cell_volume;
    std::vector<double> previous;
    FESolution sol;
    for (int it = 1; it <= params.max_iterations; ++it) {
      sol = system.solve(field.rho, loads);
      const auto sens = sensitivity(fine, field.rho, material, sol.u, Execution::serial);
      const auto filtered = filter_sensitivities(fine, field.rho, sens, params.r_min, Execution::serial);
      previous = field.rho;
      const OCResult oc = oc_update(fine, field, filtered, volume_target, params.oc, material.rho_min,
                                    Execution::serial);
      FineIteration rec;
      rec.iteration = it;
      rec.compliance = sol.compliance;
      rec.volume = oc.volume / cell_volume;
      if (it % params.projection.cadence == 0 &&
          measure_nondiscreteness(field.rho) > params.projection.nd_min) {
        for (double& r : field.rho)
          r = std::clamp(project_density(r, beta, params.projection.mu), material.rho_min, 1.0);
        beta = std::min(2.0 * beta, params.projection.beta_max);
        rec.projected = true;
      }
      double change = 0.0;
      for (std::size_t e = 0; e < field.rho.size(); ++e) change = std::max(change, std::abs(field.rho[e] - previous[e]));
      rec.max_change = change;
      rec.beta = beta;
      rec.nondiscreteness = measure_nondiscreteness(field.rho);
      result.history.push_back(rec);
      result.iterations = it;
      const bool continuation_done =
          beta >= params.projection.beta_max || rec.nondiscreteness <= params.projection.nd_min;
      if (change < params.eps && continuation_done) {
        result.converged = true;
        break;
      }
    }
    record_reactions(sol, previous);
  }
  result.beta = beta;
  result.nondiscreteness = measure_nondiscreteness(field.rho);
  result.rho = std::move(field.rho);
  return result;
}

CellFarmResult solve_all_cells(const CartesianGrid& coarse, const DensityField& field,
                               const std::vector<ElementTractions>& tractions, const Material& material,
                               const FineParams& params, const FarmOptions& options) {
  params.validate();
  const int cells_total = params.n * params.n;
  CellFarmResult farm;
  farm.cells.resize(coarse.num_elements());
  std::vector<int> work;
  for (int e : coarse.active_elements()) {
    FineCellResult& cell = farm.cells[e];
    cell.cell = e;
    if (field.is_free(e)) {
      work.push_back(e);
    } else {
      cell.rho.assign(cells_total, field.state[e] == Frozen::solid ? 1.0 : material.rho_min);
      cell.converged = true;
    }
  }

  const int count = static_cast<int>(work.size());
  std::vector<std::uint8_t> reused(count, 0);
  const bool parallel = options.exec == Execution::parallel;
  const int threads = options.workers > 0 ? options.workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads) if (parallel)
  for (int k = 0; k < count; ++k) {
    const int e = work[k];
    FineCellResult result;
    if (options.load_cached && options.load_cached(e, result)) {
      reused[k] = 1;
      farm.cells[e] = std::move(result);
      continue;
    }
    FineCellProblem problem;
    problem.cell = e;
    problem.target = field.rho[e];
    problem.hx = coarse.hx();
    problem.hy = coarse.hy();
    problem.tractions = tractions[e];
    problem.material = material;
    try {
      result = fine_cell_solve(problem, params);
    } catch (const std::exception& ex) {
      result = FineCellResult{};
      result.cell = e;
      result.optimized = true;
      result.error = ex.what();
    }
    if (options.on_cell_done) {
#pragma omp critical(twolevel_cell_done)
      options.on_cell_done(result);
    }
    farm.cells[e] = std::move(result);
  }
  for (int k = 0; k < count; ++k) {
    const FineCellResult& cell = farm.cells[work[k]];
    if (reused[k]) {
      ++farm.reused;
    } else if (!cell.error.empty()) {
      ++farm.failed;
    } else {
      ++farm.solved;
    }
  }
  return farm;
}

}  // namespace twolevel
