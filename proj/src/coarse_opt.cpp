#include "twolevel/coarse_opt.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace twolevel {

DensityField DensityField::uniform(const CartesianGrid& grid, double value) {
  DensityField field;
  field.rho.assign(grid.num_elements(), 0.0);
  field.state.assign(grid.num_elements(), Frozen::free);
  for (int e : grid.active_elements()) field.rho[e] = value;
  return field;
}

double material_volume(const CartesianGrid& grid, const DensityField& field) {
  double sum = 0.0;
  for (int e : grid.active_elements()) sum += field.rho[e];
  return sum * grid.element_volume();
}

void ThresholdPolicy::validate(const Material& material) const {
  if (!(lower >= material.rho_min && lower < upper && upper <= 1.0))
    throw ConfigError("thresholds: require rho_min <= lower < upper <= 1");
  if (!(volume_fraction > material.rho_min && volume_fraction <= 1.0))
    throw ConfigError("thresholds: volume fraction must be in (rho_min, 1]");
}

std::vector<double> sensitivity(const CartesianGrid& grid, std::span<const double> rho, const Material& material,
                                const Eigen::VectorXd& u, Execution exec) {
  const ElementMatrix ke = element_stiffness(material, grid.hx(), grid.hy());
  std::vector<double> out(grid.num_elements(), 0.0);
  const auto& act = grid.active_elements();
  const int count = static_cast<int>(act.size());
  const double p = material.penalty;
#pragma omp parallel for schedule(static) if (exec == Execution::parallel)
  for (int k = 0; k < count; ++k) {
    const int e = act[k];
    const ElementVector ue = gather(grid, u, e);
    double scale = 1.0;
    if (p == 3.0) {
      scale = 3.0 * rho[e] * rho[e];
    } else if (p != 1.0) {
      scale = p * std::pow(rho[e], p - 1.0);
    }
    out[e] = -scale * ue.dot(ke * ue);
  }
  return out;
}

std::vector<double> filter_sensitivities(const CartesianGrid& grid, std::span<const double> rho,
                                         std::span<const double> sens, double r_min, Execution exec) {
  std::vector<double> out(sens.begin(), sens.end());
  if (!(r_min > 0.0)) return out;
  const int reach = static_cast<int>(std::ceil(r_min)) - 1;
  const auto& act = grid.active_elements();
  const int count = static_cast<int>(act.size());
#pragma omp parallel for schedule(static) if (exec == Execution::parallel)
  for (int k = 0; k < count; ++k) {
    const int e = act[k];
    const auto [ix, iy] = grid.element_coords(e);
    double weight_sum = 0.0;
    double acc = 0.0;
    for (int jx = ix - reach; jx <= ix + reach; ++jx) {
      for (int jy = iy - reach; jy <= iy + reach; ++jy) {
        if (!grid.active_at(jx, jy)) continue;
        const double dist = std::hypot(static_cast<double>(jx - ix), static_cast<double>(jy - iy));
        const double w = r_min - dist;
        if (w <= 0.0) continue;
        const int f = grid.element_id(jx, jy);
        weight_sum += w;
        acc += w * rho[f] * sens[f];
      }
    }
    out[e] = acc / (std::max(rho[e], 1e-3) * weight_sum);
  }
  return out;
}

double oc_step(double rho, double b, const OCParams& params, double rho_min) {
  const double lower = std::max((1.0 - params.move) * rho, rho_min);
  const double upper = std::min((1.0 + params.move) * rho, 1.0);
  const double bb = std::max(b, 0.0);
  const double trial = rho * (params.damping == 0.5 ? std::sqrt(bb) : std::pow(bb, params.damping));
  return std::clamp(trial, lower, upper);
}

OCResult oc_update(const CartesianGrid& grid, DensityField& field, std::span<const double> filtered_sens,
                   double volume_target, const OCParams& params, double rho_min, Execution exec) {
  const double vol_e = grid.element_volume();
  std::vector<int> free;
  double frozen = 0.0;
  double abs_min = 0.0;
  double abs_max = 0.0;
  double reach_min = 0.0;
  double reach_max = 0.0;
  double g_max = 0.0;
  for (int e : grid.active_elements()) {
    if (field.is_free(e)) {
      free.push_back(e);
      abs_min += rho_min * vol_e;
      abs_max += vol_e;
      reach_min += std::max((1.0 - params.move) * field.rho[e], rho_min) * vol_e;
      reach_max += std::min((1.0 + params.move) * field.rho[e], 1.0) * vol_e;
      g_max = std::max(g_max, -filtered_sens[e] / vol_e);
    } else {
      frozen += field.rho[e] * vol_e;
    }
  }
  const double tol = params.vol_tol * volume_target;
  OCResult result;
  if (free.empty()) {
    result.volume = frozen;
    result.constraint_met = std::abs(frozen - volume_target) <= tol;
    return result;
  }
  if (volume_target > frozen + abs_max + tol || volume_target < frozen + abs_min - tol)
    throw NumericalError("oc_update: volume target " + std::to_string(volume_target) +
                         " unattainable with the current frozen set");

  const int count = static_cast<int>(free.size());
  std::vector<double> trial(count);
  auto evaluate = [&](double lagrange) {
#pragma omp parallel for schedule(static) if (exec == Execution::parallel)
    for (int k = 0; k < count; ++k) {
      const int e = free[k];
      const double b = (-filtered_sens[e] / vol_e) / lagrange;
      trial[k] = oc_step(field.rho[e], b, params, rho_min);
    }
    double v = frozen;
    for (double r : trial) v += r * vol_e;
    return v;
  };
  auto commit = [&] {
    for (int k = 0; k < count; ++k) field.rho[free[k]] = trial[k];
  };

  if (!(g_max > 0.0)) {
    // No sensitivity information: densities stay where they are.
    result.volume = material_volume(grid, field);
    result.constraint_met = std::abs(result.volume - volume_target) <= tol;
    return result;
  }
  if (volume_target >= frozen + reach_max - tol) {
    for (int k = 0; k < count; ++k) trial[k] = std::min((1.0 + params.move) * field.rho[free[k]], 1.0);
    commit();
    result.volume = frozen + reach_max;
    result.constraint_met = std::abs(result.volume - volume_target) <= tol;
    return result;
  }
  if (volume_target <= frozen + reach_min + tol) {
    for (int k = 0; k < count; ++k) trial[k] = std::max((1.0 - params.move) * field.rho[free[k]], rho_min);
    commit();
    result.volume = frozen + reach_min;
    result.constraint_met = std::abs(result.volume - volume_target) <= tol;
    return result;
  }

  // Volume is continuous and non-increasing in Lambda: widen geometrically, then bisect in log space.
  double lo = g_max;
  double hi = g_max;
  int guard = 0;
  while (evaluate(lo) < volume_target) {
    lo *= 0.25;
    if (++guard > params.max_bisection) throw NumericalError("oc_update: bisection bracket exhausted");
  }
  while (evaluate(hi) > volume_target) {
    hi *= 4.0;
    if (++guard > params.max_bisection) throw NumericalError("oc_update: bisection bracket exhausted");
  }
  double mid = std::sqrt(lo * hi);
  double vol = evaluate(mid);
  for (int it = 0; it < params.max_bisection && std::abs(vol - volume_target) > tol; ++it) {
    if (vol > volume_target) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi / lo - 1.0 < 1e-15) break;
    mid = std::sqrt(lo * hi);
    vol = evaluate(mid);
  }
  commit();
  result.lagrange = mid;
  result.volume = vol;
  result.constraint_met = std::abs(vol - volume_target) <= tol;
  return result;
}

InnerResult simp_inner_solve(FESystem& system, const Eigen::VectorXd& loads, DensityField& field,
                             double volume_target, const SimpParams& params, Execution exec) {
  const CartesianGrid& grid = system.grid();
  const Material& material = system.material();
  const double active_volume = grid.num_active_elements() * grid.element_volume();
  InnerResult result;
  std::vector<double> previous;
  for (int it = 1; it <= params.max_iterations; ++it) {
    const FESolution sol = system.solve(field.rho, loads);
    const auto sens = sensitivity(grid, field.rho, material, sol.u, exec);
    const auto filtered = filter_sensitivities(grid, field.rho, sens, params.r_min, exec);
    previous = field.rho;
    const OCResult oc = oc_update(grid, field, filtered, volume_target, params.oc, material.rho_min, exec);
    double change = 0.0;
    for (int e : grid.active_elements()) change = std::max(change, std::abs(field.rho[e] - previous[e]));
    result.history.push_back({field.stage, it, sol.compliance, oc.volume / active_volume, change});
    if (change < params.eps) {
      result.converged = true;
      break;
    }
  }
  return result;
}

bool restore_volume(const CartesianGrid& grid, DensityField& field, double volume_target, double rho_min,
                    double rel_tol) {
  const double vol_e = grid.element_volume();
  std::vector<int> free;
  double frozen = 0.0;
  for (int e : grid.active_elements()) {
    if (field.is_free(e)) {
      free.push_back(e);
    } else {
      frozen += field.rho[e] * vol_e;
    }
  }
  const double free_target = volume_target - frozen;
  if (free.empty()) return std::abs(free_target) <= rel_tol * volume_target;
  const double n = static_cast<double>(free.size());
  if (free_target > n * vol_e * (1.0 + rel_tol) || free_target < n * rho_min * vol_e * (1.0 - rel_tol)) return false;

  std::vector<double> base(free.size());
  double rmin_free = 1.0;
  for (std::size_t k = 0; k < free.size(); ++k) {
    base[k] = field.rho[free[k]];
    rmin_free = std::min(rmin_free, base[k]);
  }
  auto volume_at = [&](double s) {
    double v = 0.0;
    for (double r : base) v += std::clamp(s * r, rho_min, 1.0);
    return v * vol_e;
  };
  double lo = 0.0;
  double hi = 1.0 / rmin_free;
  double s = 1.0;
  double v = volume_at(s);
  for (int it = 0; it < 200 && std::abs(v - free_target) > rel_tol * volume_target; ++it) {
    if (v < free_target) {
      lo = s;
    } else {
      hi = s;
    }
    s = 0.5 * (lo + hi);
    v = volume_at(s);
  }
  for (std::size_t k = 0; k < free.size(); ++k) field.rho[free[k]] = std::clamp(s * base[k], rho_min, 1.0);
  return true;
}

namespace {

bool all_free_in_range(const CartesianGrid& grid, const DensityField& field, const ThresholdPolicy& policy) {
  for (int e : grid.active_elements()) {
    if (field.is_free(e) && (field.rho[e] < policy.lower || field.rho[e] > policy.upper)) return false;
  }
  return true;
}

int void_isolated_elements(const CartesianGrid& grid, DensityField& field, double rho_min) {
  int voided = 0;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int e : grid.active_elements()) {
      if (field.state[e] == Frozen::void_) continue;
      int void_neighbors = 0;
      for (int edge = 0; edge < 4; ++edge) {
        const int m = grid.neighbor(e, edge);
        if (m >= 0 && field.state[m] == Frozen::void_) ++void_neighbors;
      }
      if (void_neighbors >= 3) {
        field.state[e] = Frozen::void_;
        field.rho[e] = rho_min;
        ++voided;
        changed = true;
      }
    }
  }
  return voided;
}

}  // namespace

int freeze_out_of_range(const CartesianGrid& grid, DensityField& field, const ThresholdPolicy& policy,
                        double rho_min) {
  int frozen = 0;
  for (int e : grid.active_elements()) {
    if (!field.is_free(e)) continue;
    if (field.rho[e] >= policy.upper) {
      field.state[e] = Frozen::solid;
      field.rho[e] = 1.0;
      ++frozen;
    } else if (field.rho[e] <= policy.lower) {
      field.state[e] = Frozen::void_;
      field.rho[e] = rho_min;
      ++frozen;
    }
  }
  return frozen + void_isolated_elements(grid, field, rho_min);
}

StageResult stage_loop(const CartesianGrid& grid, const BoundarySpec& boundary, const Material& material,
                       const ThresholdPolicy& policy, const SimpParams& params, const StageOptions& options) {
  material.validate();
  policy.validate(material);
  if (options.max_stages < 1) throw ConfigError("stage_loop: stage cap must be positive");

  FESystem system(grid, boundary, material);
  const Eigen::VectorXd loads = assemble_loads(grid, boundary);
  const double target = policy.volume_fraction * grid.num_active_elements() * grid.element_volume();

  StageResult result;
  DensityField field = DensityField::uniform(grid, policy.volume_fraction);
  for (int stage = 1; stage <= options.max_stages; ++stage) {
    field.stage = stage;
    if (stage > 1 && !restore_volume(grid, field, target, material.rho_min))
      throw NumericalError("stage_loop: frozen set leaves the volume target infeasible at stage " +
                           std::to_string(stage));
    const bool any_free = std::any_of(grid.active_elements().begin(), grid.active_elements().end(),
                                      [&](int e) { return field.is_free(e); });
    if (!any_free) {
      result.converged = true;
      break;
    }
    InnerResult inner = simp_inner_solve(system, loads, field, target, params, options.exec);
    result.log.insert(result.log.end(), inner.history.begin(), inner.history.end());
    result.snapshots.push_back(field);
    if (options.on_stage) options.on_stage(field);

    if (all_free_in_range(grid, field, policy)) {
      if (void_isolated_elements(grid, field, material.rho_min) == 0) {
        result.converged = true;
        break;
      }
      continue;
    }
    freeze_out_of_range(grid, field, policy, material.rho_min);
  }
  result.stages = field.stage;
  result.solution = system.solve(field.rho, loads);
  result.field = std::move(field);
  return result;
}

}  // namespace twolevel
