#pragma once

#include "twolevel/common.hpp"
#include "twolevel/grid.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <array>
#include <memory>
#include <span>
#include <vector>

namespace twolevel {

/// Isotropic plane-stress material with SIMP scaling D(rho) = rho^p D0. Unit thickness.
struct Material {
  double youngs_modulus = 1.0;
  double poisson_ratio = 0.3;
  double penalty = 3.0;
  double rho_min = 1e-3;

  void validate() const;
  Eigen::Matrix3d constitutive() const;
  double stiffness_scale(double rho) const;
};

using ElementMatrix = Eigen::Matrix<double, 8, 8>;
using ElementVector = Eigen::Matrix<double, 8, 1>;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Bilinear rectangle stiffness (2x2 Gauss, unit thickness, unit density).
ElementMatrix element_stiffness(const Material& material, double hx, double hy);

/// Strain-displacement matrix at natural coordinates (xi, eta) in [-1, 1]^2.
Eigen::Matrix<double, 3, 8> strain_displacement(double hx, double hy, double xi, double eta);

/// Sum over active elements of rho_e^p K_e, over the grid's active dofs.
SparseMatrix assemble(const CartesianGrid& grid, std::span<const double> densities, const Material& material);

struct FESolution {
  Eigen::VectorXd u;                       ///< displacements over active dofs
  double compliance = 0.0;                 ///< u^T K u
  double external_work = 0.0;              ///< u^T f
  std::vector<double> element_energy;      ///< rho_e^p u_e^T K_e u_e, empty when densities unknown
  double residual = 0.0;                   ///< normwise backward error of the free-dof solve
};

/// Consistent nodal forces of a linear edge traction.
std::array<Vec2, 2> consistent_edge_loads(const Vec2& t_start, const Vec2& t_end, double length);

/// External load vector over active dofs from the Neumann list.
Eigen::VectorXd assemble_loads(const CartesianGrid& grid, const BoundarySpec& boundary);

/// Generic direct solve of K u = f with Dirichlet conditions imposed by elimination.
FESolution solve(const CartesianGrid& grid, const SparseMatrix& K, const Eigen::VectorXd& loads,
                 const BoundarySpec& boundary);

/// Element-level u_e gather.
ElementVector gather(const CartesianGrid& grid, const Eigen::VectorXd& u, int e);

/// F^e = rho_e^p K_e u_e for each element; zero for inactive elements.
std::vector<ElementVector> element_nodal_forces(const CartesianGrid& grid, std::span<const double> densities,
                                                const Material& material, const Eigen::VectorXd& u,
                                                Execution exec = Execution::parallel);

/// u_e^T K_e u_e (unit density) per element; zero for inactive elements.
std::vector<double> element_unit_energy(const CartesianGrid& grid, const ElementMatrix& ke, const Eigen::VectorXd& u,
                                        Execution exec = Execution::parallel);

/// Reaction force at a node: sum of element nodal forces minus applied loads.
Vec2 nodal_reaction(const CartesianGrid& grid, const std::vector<ElementVector>& forces,
                    const Eigen::VectorXd& loads, int node);

/// Stiffness system bound to one grid, boundary and material. The sparsity pattern,
/// scatter map and symbolic factorization are computed once and reused by every
/// solve(); optimizers call it once per iteration.
class FESystem {
 public:
  FESystem(const CartesianGrid& grid, BoundarySpec boundary, Material material);

  FESolution solve(std::span<const double> densities, const Eigen::VectorXd& loads);

  const CartesianGrid& grid() const { return grid_; }
  const BoundarySpec& boundary() const { return boundary_; }
  const Material& material() const { return material_; }
  const ElementMatrix& unit_stiffness() const { return ke_; }
  int num_free() const { return num_free_; }

 private:
  CartesianGrid grid_;
  BoundarySpec boundary_;
  Material material_;
  ElementMatrix ke_;
  std::vector<int> free_index_;         // active dof -> free index, -1 when prescribed
  Eigen::VectorXd prescribed_;          // prescribed values over active dofs
  bool has_nonzero_prescribed_ = false;
  int num_free_ = 0;
  SparseMatrix kff_;
  std::vector<std::array<int, 64>> scatter_;  // per element: value slot of each (a, b) pair, -1 if not free
  std::unique_ptr<Eigen::SimplicialLDLT<SparseMatrix>> ldlt_;
};

}  // namespace twolevel
