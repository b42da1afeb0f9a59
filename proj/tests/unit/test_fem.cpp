#include <doctest.h>

#include "support.hpp"
#include "twolevel/fem.hpp"

#include <Eigen/Eigenvalues>

#include <random>

using namespace twolevel;

TEST_CASE("square element stiffness matches the closed form") {
  Material m;
  m.youngs_modulus = 1.0;
  m.poisson_ratio = 0.3;
  const auto ke = element_stiffness(m, 1.0, 1.0);
  const double nu = 0.3;
  const double c = 1.0 / (1.0 - nu * nu);
  CHECK(ke(0, 0) == doctest::Approx(c * (0.5 - nu / 6.0)).epsilon(1e-14));
  CHECK(ke(0, 0) == doctest::Approx(0.4945054945).epsilon(1e-9));
  CHECK(ke(0, 1) == doctest::Approx(c * (0.125 + nu / 8.0)).epsilon(1e-14));
  // Diagonally opposite corners share the same x-x coupling.
  CHECK(ke(0, 4) == doctest::Approx(c * (-0.25 + nu / 12.0)).epsilon(1e-14));
}

TEST_CASE("element stiffness is symmetric with exactly three rigid modes") {
  Material m;
  for (auto [hx, hy] : {std::pair{1.0, 1.0}, std::pair{0.5, 2.0}, std::pair{3.0, 0.25}}) {
    const auto ke = element_stiffness(m, hx, hy);
    CHECK((ke - ke.transpose()).norm() <= 1e-14 * ke.norm());
    Eigen::SelfAdjointEigenSolver<ElementMatrix> es(ke);
    const auto& ev = es.eigenvalues();
    for (int i = 0; i < 3; ++i) CHECK(std::abs(ev[i]) <= 1e-12 * ev[7]);
    for (int i = 3; i < 8; ++i) CHECK(ev[i] > 1e-6 * ev[7]);
  }
}

TEST_CASE("element energy of a homogeneous strain equals area times the strain energy density") {
  Material m;
  const double hx = 0.7;
  const double hy = 1.9;
  const CartesianGrid g(1, 1, hx, hy);
  const Eigen::Vector3d eps(0.3, -0.2, 0.45);  // exx, eyy, gxy
  const Eigen::VectorXd u = testsupport::linear_field(g, eps[0], eps[1], eps[2]);
  const ElementVector ue = gather(g, u, 0);
  const double energy = ue.dot(element_stiffness(m, hx, hy) * ue);
  CHECK(energy == doctest::Approx(hx * hy * eps.dot(m.constitutive() * eps)).epsilon(1e-13));
}

TEST_CASE("consistent edge loads") {
  const auto c = consistent_edge_loads(Vec2(2, 0), Vec2(2, 0), 3.0);
  CHECK(c[0].isApprox(Vec2(3, 0)));
  CHECK(c[1].isApprox(Vec2(3, 0)));
  const auto l = consistent_edge_loads(Vec2(0, 0), Vec2(0, 6), 1.0);
  CHECK(l[0].y() == doctest::Approx(1.0));
  CHECK(l[1].y() == doctest::Approx(2.0));
}

TEST_CASE("sparse solve agrees with an independent dense solve") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dens(0.05, 1.0);
  const CartesianGrid g(5, 3, 0.4, 0.6);
  Material m;
  std::vector<double> rho(g.num_elements());
  for (double& r : rho) r = dens(rng);

  BoundarySpec bc;
  bc.dirichlet = clamp_side(g, kLeft);
  for (const auto& be : side_edges(g, kRight)) bc.neumann.push_back({be.element, be.edge, Vec2(0.3, -1), Vec2(-0.1, -2)});
  bc.neumann.push_back({g.element_id(2, 2), kTop, Vec2(0, -0.5), Vec2(0.2, 0)});

  const Eigen::VectorXd f = assemble_loads(g, bc);
  const Eigen::MatrixXd kd = testsupport::dense_stiffness(g, rho, m);
  const Eigen::VectorXd ref = testsupport::dense_solve(g, kd, f, bc);

  FESystem sys(g, bc, m);
  const FESolution sol = sys.solve(rho, f);
  CHECK((sol.u - ref).norm() <= 1e-10 * ref.norm());
  CHECK(sol.compliance == doctest::Approx(ref.dot(kd * ref)).epsilon(1e-10));
  CHECK(sol.compliance == doctest::Approx(sol.external_work).epsilon(1e-10));
  CHECK(sol.residual < 1e-10);

  const FESolution generic = solve(g, assemble(g, rho, m), f, bc);
  CHECK((generic.u - ref).norm() <= 1e-10 * ref.norm());

  double energy = 0.0;
  for (double w : sol.element_energy) energy += w;
  CHECK(energy == doctest::Approx(sol.compliance).epsilon(1e-10));

  SUBCASE("factorization reuse tracks new densities") {
    for (double& r : rho) r = dens(rng);
    const Eigen::VectorXd ref2 =
        testsupport::dense_solve(g, testsupport::dense_stiffness(g, rho, m), f, bc);
    CHECK((sys.solve(rho, f).u - ref2).norm() <= 1e-10 * ref2.norm());
  }
}

TEST_CASE("high stiffness contrast still solves to a small backward error") {
  const CartesianGrid g(12, 12, 1.0 / 12, 1.0 / 12);
  Material m;
  m.penalty = 3.0;
  std::vector<double> rho(g.num_elements(), m.rho_min);
  for (int i = 0; i < 12; ++i) {
    rho[g.element_id(i, 0)] = 1.0;
    rho[g.element_id(i, 11)] = 1.0;
    rho[g.element_id(0, i)] = 1.0;
  }
  BoundarySpec bc;
  bc.dirichlet = clamp_side(g, kLeft);
  for (const auto& be : side_edges(g, kRight)) bc.neumann.push_back({be.element, be.edge, Vec2(0, -1), Vec2(0, -1)});
  const Eigen::VectorXd f = assemble_loads(g, bc);
  FESystem sys(g, bc, m);
  const FESolution sol = sys.solve(rho, f);
  CHECK(sol.residual < 1e-12);
  const Eigen::VectorXd ref = testsupport::dense_solve(g, testsupport::dense_stiffness(g, rho, m), f, bc);
  CHECK((sol.u - ref).norm() <= 1e-6 * ref.norm());
}

TEST_CASE("prescribed displacements reproduce a homogeneous field exactly") {
  const CartesianGrid g(4, 4, 0.5, 0.5);
  Material m;
  const Eigen::VectorXd exact = testsupport::linear_field(g, 0.01, -0.004, 0.006);
  BoundarySpec bc;
  for (const auto& be : boundary_edges(g)) {
    for (int n : g.edge_nodes(be.element, be.edge)) {
      bc.dirichlet.push_back({n, {true, true}, Vec2(exact[g.dof(n, 0)], exact[g.dof(n, 1)])});
    }
  }
  std::vector<double> rho(g.num_elements(), 1.0);
  FESystem sys(g, bc, m);
  const FESolution sol = sys.solve(rho, Eigen::VectorXd::Zero(g.num_dofs()));
  CHECK((sol.u - exact).lpNorm<Eigen::Infinity>() < 1e-13);
}

TEST_CASE("reactions balance the applied loads") {
  const CartesianGrid g(6, 2, 1.0, 1.0);
  Material m;
  BoundarySpec bc;
  bc.dirichlet = clamp_side(g, kLeft);
  for (const auto& be : side_edges(g, kTop)) {
    if (g.element_coords(be.element).ix > 0) bc.neumann.push_back({be.element, be.edge, Vec2(0, -1), Vec2(0, -1)});
  }
  std::vector<double> rho(g.num_elements(), 0.6);
  const Eigen::VectorXd f = assemble_loads(g, bc);
  FESystem sys(g, bc, m);
  const FESolution sol = sys.solve(rho, f);
  const auto forces = element_nodal_forces(g, rho, m, sol.u, Execution::serial);
  Vec2 total = Vec2::Zero();
  for (int n : side_nodes(g, kLeft)) total += nodal_reaction(g, forces, f, n);
  CHECK(total.x() == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(total.y() == doctest::Approx(5.0).epsilon(1e-10));
  // Free nodes carry no reaction.
  CHECK(nodal_reaction(g, forces, f, g.node_id(3, 1)).norm() < 1e-10);
  // Each element's nodal forces sum to zero.
  for (const auto& fe : forces) {
    CHECK(std::abs(fe[0] + fe[2] + fe[4] + fe[6]) < 1e-12);
    CHECK(std::abs(fe[1] + fe[3] + fe[5] + fe[7]) < 1e-12);
  }
}

TEST_CASE("serial and parallel element kernels agree bitwise") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  const CartesianGrid g(9, 7, 1.0, 0.5, l_shape_mask(9, 7, 3, 3));
  Material m;
  std::vector<double> rho(g.num_elements(), 0.4);
  Eigen::VectorXd u(g.num_dofs());
  for (int i = 0; i < u.size(); ++i) u[i] = d(rng);
  const auto a = element_nodal_forces(g, rho, m, u, Execution::serial);
  const auto b = element_nodal_forces(g, rho, m, u, Execution::parallel);
  for (std::size_t e = 0; e < a.size(); ++e) CHECK(a[e] == b[e]);
  const auto ke = element_stiffness(m, g.hx(), g.hy());
  CHECK(element_unit_energy(g, ke, u, Execution::serial) == element_unit_energy(g, ke, u, Execution::parallel));
}

TEST_CASE("a system without supports is rejected") {
  const CartesianGrid g(2, 2, 1.0, 1.0);
  CHECK_THROWS_AS(FESystem(g, BoundarySpec{}, Material{}), ConfigError);
  Material bad;
  bad.poisson_ratio = 0.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
