#include "twolevel/fem.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

namespace twolevel {

namespace {

constexpr double kCornerXi[4] = {-1.0, 1.0, 1.0, -1.0};
constexpr double kCornerEta[4] = {-1.0, -1.0, 1.0, 1.0};
constexpr double kSolveTolerance = 1e-8;

void check_densities(const CartesianGrid& grid, std::span<const double> densities, const Material& material) {
  if (densities.size() != static_cast<std::size_t>(grid.num_elements()))
    throw ConfigError("densities: expected one value per grid element (" + std::to_string(grid.num_elements()) + ")");
  for (int e : grid.active_elements()) {
    const double r = densities[e];
    if (!(r >= material.rho_min * (1.0 - 1e-12)) || !(r <= 1.0 + 1e-12))
      throw ConfigError("densities: element " + std::to_string(e) + " density " + std::to_string(r) +
                        " outside [rho_min, 1]");
  }
}

}  // namespace

void Material::validate() const {
  if (!(youngs_modulus > 0.0)) throw ConfigError("material: Young's modulus must be positive");
  if (!(poisson_ratio >= 0.0 && poisson_ratio < 0.5)) throw ConfigError("material: Poisson ratio must be in [0, 0.5)");
  if (!(penalty >= 1.0)) throw ConfigError("material: penalty must be >= 1");
  if (!(rho_min > 0.0 && rho_min < 1.0)) throw ConfigError("material: rho_min must be in (0, 1)");
}

Eigen::Matrix3d Material::constitutive() const {
  const double nu = poisson_ratio;
  const double c = youngs_modulus / (1.0 - nu * nu);
  Eigen::Matrix3d d;
  d << c, c * nu, 0.0, c * nu, c, 0.0, 0.0, 0.0, c * (1.0 - nu) / 2.0;
  return d;
}

double Material::stiffness_scale(double rho) const {
  if (penalty == 1.0) return rho;
  if (penalty == 3.0) return rho * rho * rho;
  return std::pow(rho, penalty);
}

Eigen::Matrix<double, 3, 8> strain_displacement(double hx, double hy, double xi, double eta) {
  Eigen::Matrix<double, 3, 8> b = Eigen::Matrix<double, 3, 8>::Zero();
  for (int a = 0; a < 4; ++a) {
    const double dndx = 0.25 * kCornerXi[a] * (1.0 + eta * kCornerEta[a]) * (2.0 / hx);
    const double dndy = 0.25 * kCornerEta[a] * (1.0 + xi * kCornerXi[a]) * (2.0 / hy);
    b(0, 2 * a) = dndx;
    b(1, 2 * a + 1) = dndy;
    b(2, 2 * a) = dndy;
    b(2, 2 * a + 1) = dndx;
  }
  return b;
}

ElementMatrix element_stiffness(const Material& material, double hx, double hy) {
  material.validate();
  if (!(hx > 0.0) || !(hy > 0.0)) throw ConfigError("element_stiffness: edge lengths must be positive");
  const Eigen::Matrix3d d = material.constitutive();
  const double g = 1.0 / std::sqrt(3.0);
  const double jac = hx * hy / 4.0;
  ElementMatrix k = ElementMatrix::Zero();
  for (double xi : {-g, g}) {
    for (double eta : {-g, g}) {
      const auto b = strain_displacement(hx, hy, xi, eta);
      k.noalias() += b.transpose() * d * b * jac;
    }
  }
  // Symmetrize away quadrature round-off.
  return 0.5 * (k + k.transpose());
}

SparseMatrix assemble(const CartesianGrid& grid, std::span<const double> densities, const Material& material) {
  check_densities(grid, densities, material);
  const ElementMatrix ke = element_stiffness(material, grid.hx(), grid.hy());
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(grid.num_active_elements()) * 64);
  for (int e : grid.active_elements()) {
    const double s = material.stiffness_scale(densities[e]);
    const auto dofs = grid.element_dofs(e);
    for (int a = 0; a < 8; ++a) {
      for (int b = 0; b < 8; ++b) triplets.emplace_back(dofs[a], dofs[b], s * ke(a, b));
    }
  }
  SparseMatrix k(grid.num_dofs(), grid.num_dofs());
  k.setFromTriplets(triplets.begin(), triplets.end());
  return k;
}

std::array<Vec2, 2> consistent_edge_loads(const Vec2& t_start, const Vec2& t_end, double length) {
  return {length * (2.0 * t_start + t_end) / 6.0, length * (t_start + 2.0 * t_end) / 6.0};
}

Eigen::VectorXd assemble_loads(const CartesianGrid& grid, const BoundarySpec& boundary) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(grid.num_dofs());
  for (const auto& load : boundary.neumann) {
    const auto nodes = grid.edge_nodes(load.element, load.edge);
    const auto p = consistent_edge_loads(load.t_start, load.t_end, grid.edge_length(load.edge));
    for (int k = 0; k < 2; ++k) {
      f[grid.dof(nodes[k], 0)] += p[k].x();
      f[grid.dof(nodes[k], 1)] += p[k].y();
    }
  }
  return f;
}

ElementVector gather(const CartesianGrid& grid, const Eigen::VectorXd& u, int e) {
  ElementVector ue;
  const auto dofs = grid.element_dofs(e);
  for (int a = 0; a < 8; ++a) ue[a] = u[dofs[a]];
  return ue;
}

namespace {

struct Partition {
  std::vector<int> free_index;
  Eigen::VectorXd prescribed;
  int num_free = 0;
};

Partition partition_dofs(const CartesianGrid& grid, const BoundarySpec& boundary) {
  Partition part;
  part.free_index.assign(grid.num_dofs(), 0);
  part.prescribed = Eigen::VectorXd::Zero(grid.num_dofs());
  for (const auto& d : boundary.dirichlet) {
    for (int c = 0; c < 2; ++c) {
      if (!d.fixed[c]) continue;
      const int dof = grid.dof(d.node, c);
      part.free_index[dof] = -1;
      part.prescribed[dof] = d.value[c];
    }
  }
  for (int& idx : part.free_index) {
    if (idx == 0) idx = part.num_free++;
  }
  return part;
}

// Normwise backward error ||r|| / (||K|| ||u|| + ||rhs||) in the infinity norm; `lower` means only the lower
// triangle of the symmetric matrix is stored.
double backward_error(const SparseMatrix& k, bool lower, const Eigen::VectorXd& u, const Eigen::VectorXd& r,
                      const Eigen::VectorXd& rhs) {
  Eigen::VectorXd row_sums = Eigen::VectorXd::Zero(k.rows());
  for (int c = 0; c < k.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(k, c); it; ++it) {
      row_sums[it.row()] += std::abs(it.value());
      if (lower && it.row() != it.col()) row_sums[it.col()] += std::abs(it.value());
    }
  }
  const double scale = row_sums.maxCoeff() * u.lpNorm<Eigen::Infinity>() + rhs.lpNorm<Eigen::Infinity>();
  return scale > 0.0 ? r.lpNorm<Eigen::Infinity>() / scale : 0.0;
}

std::string residual_error(double residual) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "solve: backward error %.3e above tolerance", residual);
  return buf;
}

void check_factorization(const Eigen::SimplicialLDLT<SparseMatrix>& ldlt) {
  if (ldlt.info() != Eigen::Success) throw NumericalError("solve: factorization failed (singular stiffness)");
  const Eigen::VectorXd& diag = ldlt.vectorD();
  if (diag.size() == 0) return;
  const double dmax = diag.cwiseAbs().maxCoeff();
  if (!(diag.minCoeff() > 1e-13 * dmax)) throw NumericalError("solve: stiffness is singular (insufficient constraints)");
}

}  // namespace

FESolution solve(const CartesianGrid& grid, const SparseMatrix& K, const Eigen::VectorXd& loads,
                 const BoundarySpec& boundary) {
  boundary.validate(grid);
  if (K.rows() != grid.num_dofs() || K.cols() != grid.num_dofs() || loads.size() != grid.num_dofs())
    throw ConfigError("solve: system size does not match the grid's active dofs");
  const Partition part = partition_dofs(grid, boundary);

  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::VectorXd rhs(part.num_free);
  for (int i = 0; i < grid.num_dofs(); ++i) {
    if (part.free_index[i] >= 0) rhs[part.free_index[i]] = loads[i];
  }
  for (int col = 0; col < K.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(K, col); it; ++it) {
      const int fr = part.free_index[it.row()];
      const int fc = part.free_index[it.col()];
      if (fr < 0) continue;
      if (fc >= 0) {
        triplets.emplace_back(fr, fc, it.value());
      } else {
        rhs[fr] -= it.value() * part.prescribed[it.col()];
      }
    }
  }
  SparseMatrix kff(part.num_free, part.num_free);
  kff.setFromTriplets(triplets.begin(), triplets.end());

  FESolution sol;
  sol.u = part.prescribed;
  if (part.num_free > 0) {
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(kff);
    check_factorization(ldlt);
    Eigen::VectorXd uf = ldlt.solve(rhs);
    Eigen::VectorXd r = kff * uf - rhs;
    sol.residual = backward_error(kff, false, uf, r, rhs);
    if (sol.residual > kSolveTolerance) {
      uf -= ldlt.solve(r);
      r = kff * uf - rhs;
      sol.residual = backward_error(kff, false, uf, r, rhs);
      if (sol.residual > kSolveTolerance) throw NumericalError(residual_error(sol.residual));
    }
    for (int i = 0; i < grid.num_dofs(); ++i) {
      if (part.free_index[i] >= 0) sol.u[i] = uf[part.free_index[i]];
    }
  }
  sol.compliance = sol.u.dot(K * sol.u);
  sol.external_work = sol.u.dot(loads);
  return sol;
}

std::vector<ElementVector> element_nodal_forces(const CartesianGrid& grid, std::span<const double> densities,
                                                const Material& material, const Eigen::VectorXd& u, Execution exec) {
  const ElementMatrix ke = element_stiffness(material, grid.hx(), grid.hy());
  std::vector<ElementVector> forces(grid.num_elements(), ElementVector::Zero());
  const auto& act = grid.active_elements();
  const int count = static_cast<int>(act.size());
#pragma omp parallel for schedule(static) if (exec == Execution::parallel)
  for (int k = 0; k < count; ++k) {
    const int e = act[k];
    forces[e] = material.stiffness_scale(densities[e]) * (ke * gather(grid, u, e));
  }
  return forces;
}

std::vector<double> element_unit_energy(const CartesianGrid& grid, const ElementMatrix& ke, const Eigen::VectorXd& u,
                                        Execution exec) {
  std::vector<double> energy(grid.num_elements(), 0.0);
  const auto& act = grid.active_elements();
  const int count = static_cast<int>(act.size());
#pragma omp parallel for schedule(static) if (exec == Execution::parallel)
  for (int k = 0; k < count; ++k) {
    const int e = act[k];
    const ElementVector ue = gather(grid, u, e);
    energy[e] = ue.dot(ke * ue);
  }
  return energy;
}

Vec2 nodal_reaction(const CartesianGrid& grid, const std::vector<ElementVector>& forces, const Eigen::VectorXd& loads,
                    int node) {
  Vec2 sum = Vec2::Zero();
  const auto [jx, jy] = grid.node_coords(node);
  for (int q = 0; q < 4; ++q) {
    // Element quadrants around the node and the node's local corner in each.
    static constexpr int kDx[4] = {0, -1, -1, 0};
    static constexpr int kDy[4] = {0, 0, -1, -1};
    const int ix = jx + kDx[q];
    const int iy = jy + kDy[q];
    if (!grid.active_at(ix, iy)) continue;
    const int e = grid.element_id(ix, iy);
    sum += forces[e].segment<2>(2 * q);
  }
  return sum - Vec2(loads[grid.dof(node, 0)], loads[grid.dof(node, 1)]);
}

FESystem::FESystem(const CartesianGrid& grid, BoundarySpec boundary, Material material)
    : grid_(grid), boundary_(std::move(boundary)), material_(material) {
  material_.validate();
  boundary_.validate(grid_);
  ke_ = element_stiffness(material_, grid_.hx(), grid_.hy());

  Partition part = partition_dofs(grid_, boundary_);
  free_index_ = std::move(part.free_index);
  prescribed_ = std::move(part.prescribed);
  num_free_ = part.num_free;
  has_nonzero_prescribed_ = prescribed_.cwiseAbs().maxCoeff() > 0.0;

  // Lower-triangular pattern over free dofs.
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(grid_.num_active_elements()) * 36);
  for (int e : grid_.active_elements()) {
    const auto dofs = grid_.element_dofs(e);
    for (int a = 0; a < 8; ++a) {
      const int fa = free_index_[dofs[a]];
      if (fa < 0) continue;
      for (int b = 0; b < 8; ++b) {
        const int fb = free_index_[dofs[b]];
        if (fb >= 0 && fa >= fb) triplets.emplace_back(fa, fb, 1.0);
      }
    }
  }
  kff_.resize(num_free_, num_free_);
  kff_.setFromTriplets(triplets.begin(), triplets.end());
  kff_.makeCompressed();

  scatter_.assign(grid_.num_elements(), {});
  for (int e : grid_.active_elements()) {
    auto& slots = scatter_[e];
    slots.fill(-1);
    const auto dofs = grid_.element_dofs(e);
    for (int a = 0; a < 8; ++a) {
      const int fa = free_index_[dofs[a]];
      if (fa < 0) continue;
      for (int b = 0; b < 8; ++b) {
        const int fb = free_index_[dofs[b]];
        if (fb < 0 || fa < fb) continue;
        const int* inner = kff_.innerIndexPtr();
        const int begin = kff_.outerIndexPtr()[fb];
        const int end = kff_.outerIndexPtr()[fb + 1];
        const int* hit = std::lower_bound(inner + begin, inner + end, fa);
        slots[a * 8 + b] = static_cast<int>(hit - inner);
      }
    }
  }
  ldlt_ = std::make_unique<Eigen::SimplicialLDLT<SparseMatrix>>();
  if (num_free_ > 0) ldlt_->analyzePattern(kff_);
}

FESolution FESystem::solve(std::span<const double> densities, const Eigen::VectorXd& loads) {
  check_densities(grid_, densities, material_);
  if (loads.size() != grid_.num_dofs()) throw ConfigError("solve: load vector size does not match active dofs");

  double* values = kff_.valuePtr();
  std::fill(values, values + kff_.nonZeros(), 0.0);
  Eigen::VectorXd rhs(num_free_);
  for (int i = 0; i < grid_.num_dofs(); ++i) {
    if (free_index_[i] >= 0) rhs[free_index_[i]] = loads[i];
  }
  for (int e : grid_.active_elements()) {
    const double s = material_.stiffness_scale(densities[e]);
    const auto& slots = scatter_[e];
    for (int k = 0; k < 64; ++k) {
      if (slots[k] >= 0) values[slots[k]] += s * ke_(k / 8, k % 8);
    }
    if (has_nonzero_prescribed_) {
      const auto dofs = grid_.element_dofs(e);
      for (int a = 0; a < 8; ++a) {
        const int fa = free_index_[dofs[a]];
        if (fa < 0) continue;
        for (int b = 0; b < 8; ++b) {
          if (free_index_[dofs[b]] < 0) rhs[fa] -= s * ke_(a, b) * prescribed_[dofs[b]];
        }
      }
    }
  }

  FESolution sol;
  sol.u = prescribed_;
  if (num_free_ > 0) {
    ldlt_->factorize(kff_);
    check_factorization(*ldlt_);
    Eigen::VectorXd uf = ldlt_->solve(rhs);
    Eigen::VectorXd r = kff_.selfadjointView<Eigen::Lower>() * uf - rhs;
    sol.residual = backward_error(kff_, true, uf, r, rhs);
    if (sol.residual > kSolveTolerance) {
      uf -= ldlt_->solve(r);
      r = kff_.selfadjointView<Eigen::Lower>() * uf - rhs;
      sol.residual = backward_error(kff_, true, uf, r, rhs);
      if (sol.residual > kSolveTolerance) throw NumericalError(residual_error(sol.residual));
    }
    for (int i = 0; i < grid_.num_dofs(); ++i) {
      if (free_index_[i] >= 0) sol.u[i] = uf[free_index_[i]];
    }
  }

  sol.element_energy.assign(grid_.num_elements(), 0.0);
  double total = 0.0;
  for (int e : grid_.active_elements()) {
    const ElementVector ue = gather(grid_, sol.u, e);
    sol.element_energy[e] = material_.stiffness_scale(densities[e]) * ue.dot(ke_ * ue);
    total += sol.element_energy[e];
  }
  sol.compliance = total;
  sol.external_work = sol.u.dot(loads);
  return sol;
}

}  // namespace twolevel
