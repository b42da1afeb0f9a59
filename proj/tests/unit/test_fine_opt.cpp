#include <doctest.h>

#include "twolevel/fine_opt.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace twolevel;

namespace {

ElementTractions uniform_stress(double sx, double sy, double txy) {
  ElementTractions t;
  for (int edge = 0; edge < 4; ++edge) {
    const Vec2 n = CartesianGrid::outward_normal(edge);
    const Vec2 v(sx * n.x() + txy * n.y(), txy * n.x() + sy * n.y());
    t[edge] = {v, v};
  }
  return t;
}

FineParams quick_params(int n) {
  FineParams p;
  p.n = n;
  p.max_iterations = 80;
  return p;
}

// Solid rows [first, first + rows) spanning the cell, uniform `rest` density elsewhere.
double strip_compliance(const FineCellProblem& problem, int n, int first, int rows, double rest, double penalty) {
  const CartesianGrid g = cell_grid(problem, n);
  Material m = problem.material;
  m.penalty = penalty;
  std::vector<double> rho(g.num_elements(), rest);
  for (int ix = 0; ix < n; ++ix) {
    for (int iy = first; iy < first + rows; ++iy) rho[g.element_id(ix, iy)] = 1.0;
  }
  BoundarySpec s;
  s.dirichlet = rigid_body_supports(g);
  FESystem sys(g, s, m);
  return sys.solve(rho, apply_cell_tractions(g, problem.tractions)).compliance;
}

}  // namespace

TEST_CASE("projection fixes 0, mu and 1 and is monotone") {
  for (double beta : {0.5, 1.0, 2.0, 4.5}) {
    for (double mu : {0.3, 0.5, 0.7}) {
      CHECK(project_density(0.0, beta, mu) == doctest::Approx(0.0).epsilon(1e-15));
      CHECK(project_density(mu, beta, mu) == doctest::Approx(mu).epsilon(1e-15));
      CHECK(project_density(1.0, beta, mu) == doctest::Approx(1.0).epsilon(1e-15));
      double prev = -1.0;
      for (int i = 0; i <= 200; ++i) {
        const double v = project_density(i / 200.0, beta, mu);
        CHECK(v >= prev);
        prev = v;
      }
    }
  }
  // Below the threshold densities move down, above they move up.
  CHECK(project_density(0.25, 2.0, 0.5) < 0.25);
  CHECK(project_density(0.75, 2.0, 0.5) > 0.75);
  // Independent expansion of the lower branch.
  const double beta = 2.0;
  const double mu = 0.5;
  const double rho = 0.25;
  CHECK(project_density(rho, beta, mu) ==
        doctest::Approx(mu * std::exp(-beta * (1 - rho / mu)) - (mu - rho) * std::exp(-beta)).epsilon(1e-14));
  // As beta vanishes the map tends to the identity.
  for (double r : {0.1, 0.4, 0.6, 0.9}) CHECK(project_density(r, 1e-8, 0.5) == doctest::Approx(r).epsilon(1e-7));
}

TEST_CASE("nondiscreteness measure") {
  CHECK(measure_nondiscreteness(std::vector<double>(10, 0.5)) == doctest::Approx(100.0));
  CHECK(measure_nondiscreteness(std::vector<double>{0.0, 1.0, 1.0, 0.0}) == doctest::Approx(0.0));
  CHECK(measure_nondiscreteness(std::vector<double>{0.25, 0.75}) == doctest::Approx(75.0));
}

TEST_CASE("cell tractions become consistent fine loads") {
  FineCellProblem p;
  p.hx = 2.0;
  p.hy = 1.0;
  const int n = 8;
  const CartesianGrid g = cell_grid(p, n);
  SUBCASE("constant traction on the bottom side") {
    ElementTractions t;
    t[kBottom] = {Vec2(0, -3), Vec2(0, -3)};
    const Eigen::VectorXd f = apply_cell_tractions(g, t);
    const double h = p.hx / n;
    CHECK(f[g.dof(g.node_id(0, 0), 1)] == doctest::Approx(-3 * h / 2));
    CHECK(f[g.dof(g.node_id(3, 0), 1)] == doctest::Approx(-3 * h));
    CHECK(f[g.dof(g.node_id(n, 0), 1)] == doctest::Approx(-3 * h / 2));
    CHECK(f.sum() == doctest::Approx(-3 * p.hx));
  }
  SUBCASE("linear traction keeps its resultant and moment") {
    ElementTractions t;
    t[kRight] = {Vec2(1, 0), Vec2(-2, 0.5)};
    const Eigen::VectorXd f = apply_cell_tractions(g, t);
    Vec2 force = Vec2::Zero();
    double moment = 0.0;
    for (int node = 0; node < g.num_nodes(); ++node) {
      const Vec2 fn(f[g.dof(node, 0)], f[g.dof(node, 1)]);
      force += fn;
      moment += cross(g.node_position(node) - Vec2(1.0, 0.5), fn);
    }
    const Resultant r = element_resultant(p.hx, p.hy, t);
    CHECK((force - r.force).norm() < 1e-13);
    CHECK(moment == doctest::Approx(r.moment).epsilon(1e-12));
  }
}

TEST_CASE("rigid supports are statically determinate") {
  FineCellProblem p;
  const CartesianGrid g = cell_grid(p, 4);
  const auto s = rigid_body_supports(g);
  int fixed = 0;
  for (const auto& d : s) fixed += d.fixed[0] + d.fixed[1];
  CHECK(fixed == 3);
  BoundarySpec spec;
  spec.dirichlet = s;
  CHECK_NOTHROW(spec.validate(g));
}

TEST_CASE("balanced cells have vanishing support reactions") {
  FineCellProblem p;
  p.hx = 1.5;
  p.hy = 1.0;
  p.target = 0.5;
  p.tractions = uniform_stress(1.0, -0.3, 0.4);
  FineParams params = quick_params(12);
  const FineCellResult r = fine_cell_solve(p, params);
  REQUIRE(r.error.empty());
  for (double v : r.reactions) CHECK(std::abs(v) <= 1e-6 * r.force_scale);
  double beta = 0.0;
  for (const auto& it : r.history) {
    CHECK(it.beta <= params.projection.beta_max);
    beta = std::max(beta, it.beta);
  }
  CHECK(r.iterations == static_cast<int>(r.history.size()));
  // The OC update restores the target volume whenever the field was not just projected.
  for (const auto& it : r.history) CHECK(it.volume == doctest::Approx(0.5).epsilon(1e-5));

  SUBCASE("unbalanced tractions") {
    FineCellProblem bad = p;
    bad.tractions[kRight].end += Vec2(0, 0.5);
    CHECK_THROWS_AS(fine_cell_solve(bad, params), NumericalError);
    FineParams loose = params;
    loose.require_equilibrium = false;
    loose.max_iterations = 3;
    const FineCellResult rb = fine_cell_solve(bad, loose);
    const double worst = std::max({std::abs(rb.reactions[0]), std::abs(rb.reactions[1]), std::abs(rb.reactions[2])});
    CHECK(worst > 1e-2 * rb.force_scale);
  }
}

TEST_CASE("a nearly stationary gray cell keeps going until continuation ends") {
  FineCellProblem p;
  p.target = 0.35;
  p.tractions = uniform_stress(0.0, 0.0, 1.0);
  FineParams params = quick_params(16);
  params.max_iterations = 200;
  const FineCellResult r = fine_cell_solve(p, params);
  CHECK(r.iterations > 1);
  if (r.converged) {
    CHECK((r.beta >= params.projection.beta_max || r.nondiscreteness <= params.projection.nd_min));
  }
  const auto [lo, hi] = std::minmax_element(r.rho.begin(), r.rho.end());
  CHECK(*hi - *lo > 0.5);
}

TEST_CASE("a full cell needs a single solve") {
  FineCellProblem p;
  p.target = 1.0;
  p.tractions = uniform_stress(1.0, 0.0, 0.0);
  const FineCellResult r = fine_cell_solve(p, quick_params(8));
  CHECK(r.iterations == 0);
  CHECK(r.converged);
  for (double v : r.rho) CHECK(v == 1.0);
  CHECK(r.compliance > 0.0);
}

TEST_CASE("axial tension forms a connected strip along the load") {
  FineCellProblem p;
  p.target = 0.5;
  // sigma_x only, varying linearly in y; a uniform load leaves the uniform field stationary.
  p.tractions[kRight] = {Vec2(1.5, 0), Vec2(0.5, 0)};
  p.tractions[kLeft] = {Vec2(-0.5, 0), Vec2(-1.5, 0)};
  const int n = 16;
  FineParams params = quick_params(n);
  params.max_iterations = 150;
  const FineCellResult r = fine_cell_solve(p, params);
  const CartesianGrid g = cell_grid(p, n);
  // Flood fill of solid elements from the left column must reach the right column.
  std::vector<int> seen(g.num_elements(), 0);
  std::vector<int> stack;
  for (int iy = 0; iy < n; ++iy) {
    const int e = g.element_id(0, iy);
    if (r.rho[e] > 0.5) {
      seen[e] = 1;
      stack.push_back(e);
    }
  }
  bool reached = false;
  while (!stack.empty()) {
    const int e = stack.back();
    stack.pop_back();
    if (g.element_coords(e).ix == n - 1) reached = true;
    for (int edge = 0; edge < 4; ++edge) {
      const int m = g.neighbor(e, edge);
      if (m >= 0 && !seen[m] && r.rho[m] > 0.5) {
        seen[m] = 1;
        stack.push_back(m);
      }
    }
  }
  CHECK(reached);
  double best = std::numeric_limits<double>::infinity();
  // Strips of every width and position at the same volume.
  for (int rows = 1; rows < n / 2; ++rows) {
    const double rest = (0.5 * n - rows) / (n - rows);
    for (int first = 0; first + rows <= n; ++first) best = std::min(best, strip_compliance(p, n, first, rows, rest, 3.0));
  }
  CHECK(r.compliance <= best);
}

TEST_CASE("cell farm: frozen cells, independence and ordering") {
  const CartesianGrid coarse(3, 2, 1.0, 1.0);
  DensityField field = DensityField::uniform(coarse, 0.5);
  field.state[0] = Frozen::solid;
  field.rho[0] = 1.0;
  field.state[5] = Frozen::void_;
  field.rho[5] = 1e-3;
  field.rho[2] = 0.4;
  std::vector<ElementTractions> t(coarse.num_elements());
  for (int e = 0; e < coarse.num_elements(); ++e) t[e] = uniform_stress(1.0 + 0.1 * e, -0.2 * e, 0.05 * e);
  Material m;
  FineParams params = quick_params(8);
  params.max_iterations = 20;

  FarmOptions serial;
  serial.exec = Execution::serial;
  int done = 0;
  serial.on_cell_done = [&](const FineCellResult&) { ++done; };
  const CellFarmResult a = solve_all_cells(coarse, field, t, m, params, serial);
  const CellFarmResult b = solve_all_cells(coarse, field, t, m, params, FarmOptions{});
  CHECK(a.solved == 4);
  CHECK(done == 4);
  CHECK(a.failed == 0);
  for (double v : a.cells[0].rho) CHECK(v == 1.0);
  for (double v : a.cells[5].rho) CHECK(v == 1e-3);
  CHECK_FALSE(a.cells[0].optimized);
  // Cells solved in reverse order, alone, give the same bits.
  for (int e = coarse.num_elements() - 1; e >= 0; --e) {
    CHECK(a.cells[e].rho == b.cells[e].rho);
    if (!field.is_free(e)) continue;
    FineCellProblem p;
    p.cell = e;
    p.target = field.rho[e];
    p.tractions = t[e];
    p.material = m;
    CHECK(fine_cell_solve(p, params).rho == a.cells[e].rho);
  }

  SUBCASE("all frozen means no solves") {
    DensityField frozen = field;
    for (int e = 0; e < coarse.num_elements(); ++e) {
      frozen.state[e] = e % 2 ? Frozen::solid : Frozen::void_;
      frozen.rho[e] = e % 2 ? 1.0 : 1e-3;
    }
    const CellFarmResult c = solve_all_cells(coarse, frozen, t, m, params);
    CHECK(c.solved == 0);
    CHECK(c.failed == 0);
  }
  SUBCASE("cached cells are reused") {
    FarmOptions cached;
    cached.load_cached = [&](int cell, FineCellResult& out) {
      out = a.cells[cell];
      return true;
    };
    const CellFarmResult c = solve_all_cells(coarse, field, t, m, params, cached);
    CHECK(c.reused == 4);
    CHECK(c.solved == 0);
  }
}
