#pragma once

#include "twolevel/fem.hpp"
#include "twolevel/grid.hpp"

#include <Eigen/Dense>

#include <random>
#include <vector>

namespace testsupport {

using twolevel::Vec2;

inline Vec2 random_vec(std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng)};
}

/// m forces with a zero sum (the last closes the polygon).
inline std::vector<Vec2> random_closed_forces(std::mt19937_64& rng, int m) {
  std::vector<Vec2> f(m);
  Vec2 sum = Vec2::Zero();
  for (int k = 0; k + 1 < m; ++k) {
    f[k] = random_vec(rng);
    sum += f[k];
  }
  f[m - 1] = -sum;
  return f;
}

/// Dense global stiffness over active dofs, built element by element without the
/// library's assembly or scatter maps.
inline Eigen::MatrixXd dense_stiffness(const twolevel::CartesianGrid& grid, const std::vector<double>& rho,
                                       const twolevel::Material& m) {
  const auto ke = twolevel::element_stiffness(m, grid.hx(), grid.hy());
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(grid.num_dofs(), grid.num_dofs());
  for (int e : grid.active_elements()) {
    const auto dofs = grid.element_dofs(e);
    const double s = std::pow(rho[e], m.penalty);
    for (int a = 0; a < 8; ++a) {
      for (int b = 0; b < 8; ++b) k(dofs[a], dofs[b]) += s * ke(a, b);
    }
  }
  return k;
}

/// Dense elimination solve with homogeneous or prescribed Dirichlet values.
inline Eigen::VectorXd dense_solve(const twolevel::CartesianGrid& grid, const Eigen::MatrixXd& k,
                                   const Eigen::VectorXd& f, const twolevel::BoundarySpec& bc) {
  const int n = grid.num_dofs();
  std::vector<int> fixed(n, 0);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  for (const auto& d : bc.dirichlet) {
    for (int c = 0; c < 2; ++c) {
      if (d.fixed[c]) {
        fixed[grid.dof(d.node, c)] = 1;
        u[grid.dof(d.node, c)] = d.value[c];
      }
    }
  }
  std::vector<int> freedofs;
  for (int i = 0; i < n; ++i) {
    if (!fixed[i]) freedofs.push_back(i);
  }
  const int nf = static_cast<int>(freedofs.size());
  Eigen::MatrixXd kff(nf, nf);
  Eigen::VectorXd rhs(nf);
  for (int i = 0; i < nf; ++i) {
    rhs[i] = f[freedofs[i]];
    for (int j = 0; j < n; ++j) {
      if (fixed[j]) rhs[i] -= k(freedofs[i], j) * u[j];
    }
    for (int j = 0; j < nf; ++j) kff(i, j) = k(freedofs[i], freedofs[j]);
  }
  const Eigen::VectorXd uf = kff.fullPivLu().solve(rhs);
  for (int i = 0; i < nf; ++i) u[freedofs[i]] = uf[i];
  return u;
}

/// Nodal displacements of a homogeneous strain field u = (exx x + gxy/2 y, gxy/2 x + eyy y).
inline Eigen::VectorXd linear_field(const twolevel::CartesianGrid& grid, double exx, double eyy, double gxy) {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(grid.num_dofs());
  for (int n = 0; n < grid.num_nodes(); ++n) {
    if (!grid.node_active(n)) continue;
    const Vec2 x = grid.node_position(n);
    u[grid.dof(n, 0)] = exx * x.x() + 0.5 * gxy * x.y();
    u[grid.dof(n, 1)] = 0.5 * gxy * x.x() + eyy * x.y();
  }
  return u;
}

}  // namespace testsupport
