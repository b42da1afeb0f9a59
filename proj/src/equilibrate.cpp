#include "twolevel/equilibrate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <string>

namespace twolevel {

const char* to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::internal: return "internal";
    case NodeKind::internal_void_adjacent: return "internal-void-adjacent";
    case NodeKind::dirichlet_standard: return "dirichlet-standard";
    case NodeKind::dirichlet_outer_corner: return "dirichlet-outer-corner";
    case NodeKind::dirichlet_reentrant: return "dirichlet-reentrant";
    case NodeKind::neumann_standard: return "neumann-standard";
    case NodeKind::neumann_outer_corner: return "neumann-outer-corner";
    case NodeKind::neumann_reentrant: return "neumann-reentrant";
  }
  return "unknown";
}

namespace {

constexpr int kQuadDx[4] = {0, -1, -1, 0};
constexpr int kQuadDy[4] = {0, 0, -1, -1};

bool proper_intersection(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d, Vec2& at) {
  const Vec2 r = b - a;
  const Vec2 s = d - c;
  const double denom = cross(r, s);
  if (denom == 0.0) return false;
  const double t = cross(c - a, s) / denom;
  const double u = cross(c - a, r) / denom;
  constexpr double kEdge = 1e-12;
  if (t <= kEdge || t >= 1.0 - kEdge || u <= kEdge || u >= 1.0 - kEdge) return false;
  at = a + t * r;
  return true;
}

Vec2 vertex_mean(std::span<const Vec2> v) {
  Vec2 sum = Vec2::Zero();
  for (const auto& p : v) sum += p;
  return sum / static_cast<double>(v.size());
}

// Centroid of the closed polygon through 1..4 vertices.
Vec2 centroid_of_vertices(std::span<const Vec2> v) {
  if (v.size() == 1) return v[0];
  if (v.size() == 2) return 0.5 * (v[0] + v[1]);
  double scale = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (std::size_t j = i + 1; j < v.size(); ++j) scale = std::max(scale, (v[i] - v[j]).norm());
  }
  const double tiny = 1e-12 * scale * scale;
  const Vec2& v0 = v[0];
  const double a1 = 0.5 * cross(v[1] - v0, v[2] - v0);
  const Vec2 g1 = (v0 + v[1] + v[2]) / 3.0;
  if (v.size() == 3) return std::abs(a1) <= tiny ? vertex_mean(v) : g1;

  const double a2 = 0.5 * cross(v[2] - v0, v[3] - v0);
  const Vec2 g2 = (v0 + v[2] + v[3]) / 3.0;
  if (a1 * a2 < 0.0) {
    Vec2 q;
    if (proper_intersection(v[0], v[1], v[2], v[3], q) || proper_intersection(v[1], v[2], v[3], v[0], q)) {
      const double a3 = 0.5 * std::abs(cross(v[2] - v0, q - v0));
      const Vec2 g3 = (v0 + v[2] + q) / 3.0;
      const double den = std::abs(a1) + std::abs(a2) - 2.0 * a3;
      if (den <= tiny) return vertex_mean(v);
      return (g1 * std::abs(a1) + g2 * std::abs(a2) - 2.0 * g3 * a3) / den;
    }
  }
  const double den = a1 + a2;
  if (std::abs(den) <= tiny) return vertex_mean(v);
  return (g1 * a1 + g2 * a2) / den;
}

// Drops repeated vertices left by zero-length sides, including the wrap-around.
std::vector<Vec2> distinct_vertices(std::span<const Vec2> v, double scale) {
  std::vector<Vec2> out;
  const double tol = 1e-14 * scale;
  for (const auto& p : v) {
    if (out.empty() || (p - out.back()).norm() > tol) out.push_back(p);
  }
  while (out.size() > 1 && (out.back() - out.front()).norm() <= tol) out.pop_back();
  return out;
}

Vec2 open_chain_centroid(const ChainInput& chain) {
  std::vector<Vec2> v(1, Vec2::Zero());
  double scale = 0.0;
  for (int k = 0; k < chain.count; ++k) {
    v.push_back(v.back() + chain.forces[k]);
    scale = std::max(scale, chain.forces[k].norm());
  }
  if (scale == 0.0) return Vec2::Zero();
  const auto distinct = distinct_vertices(v, scale);
  return centroid_of_vertices(distinct);
}

}  // namespace

Vec2 polygon_centroid(const Vec2& f1, const Vec2& f2, const Vec2& f3, const Vec2& f4) {
  const double scale = std::max({f1.norm(), f2.norm(), f3.norm(), f4.norm()});
  if (scale == 0.0) return Vec2::Zero();
  if ((f1 + f2 + f3 + f4).norm() > 1e-6 * scale)
    throw NumericalError("polygon_centroid: Maxwell polygon is not closed");
  const std::array<Vec2, 4> v{Vec2::Zero(), f1, Vec2(f1 + f2), Vec2(f1 + f2 + f3)};
  const auto distinct = distinct_vertices(v, scale);
  return centroid_of_vertices(distinct);
}

Vec2 choose_pole(const ChainInput& chain) {
  const int m = chain.count;
  std::array<Vec2, 5> vert;
  vert[0] = Vec2::Zero();
  for (int k = 0; k < m; ++k) vert[k + 1] = vert[k] + chain.forces[k];

  if (chain.closed) {
    int voids = 0;
    for (bool b : chain.is_void) voids += b ? 1 : 0;
    const auto& f = chain.forces;
    if (voids == 0 || voids == 4) return polygon_centroid(f[0], f[1], f[2], f[3]);
    if (voids == 1 || voids == 3) {
      // Halve the force of the odd one out between its two sides.
      int k = 0;
      while (chain.is_void[k] != (voids == 1)) ++k;
      return 0.5 * (vert[k] + vert[k + 1]);
    }
    for (int k = 0; k < 4; ++k) {
      if (chain.is_void[k] && chain.is_void[(k + 1) % 4]) return vert[(k + 1) % 4];
    }
    return vertex_mean(std::span<const Vec2>(vert.data(), 4));
  }

  const bool start_known = chain.start_load.has_value();
  const bool end_known = chain.end_load.has_value();
  if (start_known) return *chain.start_load;
  if (end_known) return vert[m] - *chain.end_load;
  if (m >= 2 && chain.is_void[0] != chain.is_void[m - 1]) return chain.is_void[0] ? vert[1] : vert[m - 1];
  return open_chain_centroid(chain);
}

NodeSplit split_with_pole(const ChainInput& chain, const Vec2& pole) {
  const int m = chain.count;
  if (m < 1 || m > 4 || (chain.closed && m != 4)) throw NumericalError("split: invalid chain length");
  NodeSplit s;
  s.pole = pole;
  const auto& f = chain.forces;
  if (chain.closed) {
    // Walk backwards from the anchored side so the closure residual lands on the first corner.
    s.incoming[0] = pole;
    s.outgoing[3] = -pole;
    for (int k = 3; k >= 1; --k) {
      s.incoming[k] = f[k] - s.outgoing[k];
      s.outgoing[k - 1] = -s.incoming[k];
    }
    s.lambda = f[0] - s.incoming[0] - s.outgoing[0];
    s.checkerboard = chain.is_void[0] == chain.is_void[2] && chain.is_void[1] == chain.is_void[3] &&
                     chain.is_void[0] != chain.is_void[1];
    return s;
  }

  s.incoming[0] = pole;
  for (int k = 0; k < m; ++k) {
    s.outgoing[k] = f[k] - s.incoming[k];
    if (k + 1 < m) s.incoming[k + 1] = -s.outgoing[k];
  }
  if (chain.end_load) {
    s.outgoing[m - 1] = *chain.end_load;
    s.lambda = f[m - 1] - s.incoming[m - 1] - s.outgoing[m - 1];
    if (chain.start_load) return s;
  }
  Vec2 reaction = Vec2::Zero();
  if (!chain.start_load) reaction += s.incoming[0];
  if (!chain.end_load) reaction += s.outgoing[m - 1];
  for (int c = 0; c < 2; ++c) {
    if (!chain.constrained[c]) s.lambda[c] += reaction[c];
  }
  return s;
}

NodeSplit split_node(const ChainInput& chain) { return split_with_pole(chain, choose_pole(chain)); }

NodeSplit split_internal_node(const std::array<Vec2, 4>& forces, const Vec2& pole) {
  ChainInput chain;
  chain.count = 4;
  chain.closed = true;
  chain.forces = forces;
  return split_with_pole(chain, pole);
}

NodeSplit split_dirichlet_node(std::span<const Vec2> forces, std::array<bool, 2> constrained) {
  if (forces.empty() || forces.size() > 3) throw NumericalError("split_dirichlet_node: 1 to 3 elements expected");
  ChainInput chain;
  chain.count = static_cast<int>(forces.size());
  std::copy(forces.begin(), forces.end(), chain.forces.begin());
  chain.constrained = constrained;
  return split_node(chain);
}

NodeSplit split_neumann_node(std::span<const Vec2> forces, const Vec2& start_load, const Vec2& end_load) {
  if (forces.empty() || forces.size() > 3) throw NumericalError("split_neumann_node: 1 to 3 elements expected");
  ChainInput chain;
  chain.count = static_cast<int>(forces.size());
  std::copy(forces.begin(), forces.end(), chain.forces.begin());
  chain.start_load = start_load;
  chain.end_load = end_load;
  return split_node(chain);
}

std::array<Vec2, 2> side_forces_to_tractions(const Vec2& p_start, const Vec2& p_end, double length) {
  return {(4.0 * p_start - 2.0 * p_end) / length, (4.0 * p_end - 2.0 * p_start) / length};
}

Resultant element_resultant(double hx, double hy, const ElementTractions& t) {
  const std::array<Vec2, 4> corner{Vec2(-0.5 * hx, -0.5 * hy), Vec2(0.5 * hx, -0.5 * hy), Vec2(0.5 * hx, 0.5 * hy),
                                   Vec2(-0.5 * hx, 0.5 * hy)};
  Resultant r;
  for (int edge = 0; edge < 4; ++edge) {
    const double length = (edge % 2 == 0) ? hx : hy;
    const auto loads = consistent_edge_loads(t[edge].start, t[edge].end, length);
    r.force += loads[0] + loads[1];
    r.moment += cross(corner[edge], loads[0]) + cross(corner[(edge + 1) % 4], loads[1]);
  }
  return r;
}

std::vector<NodeClass> classify_nodes(const CartesianGrid& grid, const BoundarySpec& boundary,
                                      const std::vector<std::uint8_t>& void_mask) {
  if (void_mask.size() != static_cast<std::size_t>(grid.num_elements()))
    throw NumericalError("classify_nodes: void mask size does not match the grid");
  for (int e : grid.active_elements()) {
    if (void_mask[e]) continue;
    int voids = 0;
    for (int edge = 0; edge < 4; ++edge) {
      const int m = grid.neighbor(e, edge);
      if (m >= 0 && void_mask[m]) ++voids;
    }
    if (voids >= 3)
      throw NumericalError("classify_nodes: element " + std::to_string(e) +
                           " has three void edge neighbours and should have been voided");
  }

  std::vector<std::uint8_t> supported(grid.num_nodes(), 0);
  for (const auto& d : boundary.dirichlet) {
    if (d.fixed[0] || d.fixed[1]) supported[d.node] = 1;
  }

  std::vector<NodeClass> classes(grid.num_nodes());
  for (int n = 0; n < grid.num_nodes(); ++n) {
    NodeClass& nc = classes[n];
    nc.node = n;
    if (!grid.node_active(n)) continue;
    const auto [jx, jy] = grid.node_coords(n);
    std::array<bool, 4> present{};
    for (int q = 0; q < 4; ++q) {
      present[q] = grid.active_at(jx + kQuadDx[q], jy + kQuadDy[q]);
      nc.count += present[q] ? 1 : 0;
    }
    int start = 0;
    if (nc.count == 4) {
      nc.closed = true;
    } else {
      while (!(present[start] && !present[(start + 3) % 4])) ++start;
    }
    int walked = 0;
    for (int q = start; walked < nc.count && present[q % 4]; ++q, ++walked) {
      const int qq = q % 4;
      const int e = grid.element_id(jx + kQuadDx[qq], jy + kQuadDy[qq]);
      nc.elements[walked] = e;
      nc.corner[walked] = qq;
      nc.is_void[walked] = void_mask[e] != 0;
      nc.void_count += nc.is_void[walked] ? 1 : 0;
    }
    if (walked != nc.count)
      throw NumericalError("classify_nodes: node " + std::to_string(n) + " joins diagonal elements only");
    nc.checkerboard = nc.closed && nc.void_count == 2 && nc.is_void[0] == nc.is_void[2];

    if (supported[n]) {
      switch (nc.count) {
        case 1: nc.kind = NodeKind::dirichlet_outer_corner; break;
        case 2: nc.kind = NodeKind::dirichlet_standard; break;
        case 3: nc.kind = NodeKind::dirichlet_reentrant; break;
        default:
          throw ConfigError("equilibrate: Dirichlet condition on interior node " + std::to_string(n) +
                            " is not supported");
      }
    } else {
      switch (nc.count) {
        case 1: nc.kind = NodeKind::neumann_outer_corner; break;
        case 2: nc.kind = NodeKind::neumann_standard; break;
        case 3: nc.kind = NodeKind::neumann_reentrant; break;
        default: nc.kind = nc.void_count > 0 ? NodeKind::internal_void_adjacent : NodeKind::internal; break;
      }
    }
  }
  return classes;
}

EquilibrationResult equilibrate_all(const CartesianGrid& grid, const BoundarySpec& boundary,
                                    const Material& material, std::span<const double> densities,
                                    const Eigen::VectorXd& u, const std::vector<std::uint8_t>& void_mask,
                                    Execution exec) {
  EquilibrationResult result;
  result.classes = classify_nodes(grid, boundary, void_mask);
  const auto forces = element_nodal_forces(grid, densities, material, u, exec);
  const int ne = grid.num_elements();

  auto& diag = result.diagnostics;
  for (int e : grid.active_elements()) {
    for (int c = 0; c < 4; ++c) diag.force_scale = std::max(diag.force_scale, forces[e].segment<2>(2 * c).norm());
  }

  // Consistent nodal loads of the applied tractions, per element side and end.
  std::vector<ElementSideForces> applied(ne);
  for (auto& a : applied) {
    for (auto& edge : a) edge = {Vec2::Zero(), Vec2::Zero()};
  }
  for (const auto& load : boundary.neumann) {
    const auto p = consistent_edge_loads(load.t_start, load.t_end, grid.edge_length(load.edge));
    applied[load.element][load.edge][0] += p[0];
    applied[load.element][load.edge][1] += p[1];
  }
  std::vector<std::array<bool, 2>> fixed(grid.num_nodes(), {false, false});
  for (const auto& d : boundary.dirichlet) {
    fixed[d.node][0] = fixed[d.node][0] || d.fixed[0];
    fixed[d.node][1] = fixed[d.node][1] || d.fixed[1];
  }
  auto is_supported = [&](int n) { return fixed[n][0] || fixed[n][1]; };

  result.side_forces.assign(ne, ElementSideForces{});
  for (auto& s : result.side_forces) {
    for (auto& edge : s) edge = {Vec2::Zero(), Vec2::Zero()};
  }
  std::vector<Vec2> lambda(grid.num_nodes(), Vec2::Zero());
  std::vector<std::uint8_t> checker(grid.num_nodes(), 0);
  std::vector<std::string> failure(grid.num_nodes());

  const int nn = grid.num_nodes();
#pragma omp parallel for schedule(static) if (exec == Execution::parallel)
  for (int n = 0; n < nn; ++n) {
    const NodeClass& nc = result.classes[n];
    if (nc.count == 0) continue;
    try {
      ChainInput chain;
      chain.count = nc.count;
      chain.closed = nc.closed;
      chain.is_void = nc.is_void;
      for (int k = 0; k < nc.count; ++k) chain.forces[k] = forces[nc.elements[k]].segment<2>(2 * nc.corner[k]);
      if (!nc.closed) {
        const int first = nc.elements[0];
        const int start_edge = nc.corner[0];
        const int last = nc.elements[nc.count - 1];
        const int end_edge = (nc.corner[nc.count - 1] + 3) % 4;
        bool start_support = false;
        bool end_support = false;
        if (is_supported(n)) {
          start_support = is_supported(grid.edge_nodes(first, start_edge)[1]);
          end_support = is_supported(grid.edge_nodes(last, end_edge)[0]);
          if (!start_support && !end_support) start_support = end_support = true;
          chain.constrained = fixed[n];
        }
        if (!start_support) chain.start_load = applied[first][start_edge][0];
        if (!end_support) chain.end_load = applied[last][end_edge][1];
      }
      const NodeSplit split = split_node(chain);
      for (int k = 0; k < nc.count; ++k) {
        const int e = nc.elements[k];
        const int q = nc.corner[k];
        result.side_forces[e][q][0] = split.incoming[k];
        result.side_forces[e][(q + 3) % 4][1] = split.outgoing[k];
      }
      lambda[n] = split.lambda;
      checker[n] = split.checkerboard ? 1 : 0;
    } catch (const std::exception& ex) {
      failure[n] = ex.what();
    }
  }
  for (int n = 0; n < nn; ++n) {
    if (!failure[n].empty())
      throw NumericalError("equilibrate: node " + std::to_string(n) + " (" + to_string(result.classes[n].kind) +
                           "): " + failure[n]);
  }

  result.tractions.assign(ne, ElementTractions{});
  for (int e : grid.active_elements()) {
    for (int edge = 0; edge < 4; ++edge) {
      const auto t = side_forces_to_tractions(result.side_forces[e][edge][0], result.side_forces[e][edge][1],
                                              grid.edge_length(edge));
      result.tractions[e][edge] = {t[0], t[1]};
    }
  }

  for (int n = 0; n < nn; ++n) {
    const NodeClass& nc = result.classes[n];
    if (nc.count == 0) continue;
    diag.kind_counts[static_cast<int>(nc.kind)]++;
    diag.checkerboard_nodes += checker[n];
    const double l = lambda[n].norm();
    if (l > diag.max_lambda || diag.max_lambda_node < 0) {
      diag.max_lambda = l;
      diag.max_lambda_node = n;
    }
  }
  double worst = -1.0;
  for (int e : grid.active_elements()) {
    const Resultant r = element_resultant(grid.hx(), grid.hy(), result.tractions[e]);
    diag.max_net_force = std::max(diag.max_net_force, r.force.norm());
    diag.max_net_moment = std::max(diag.max_net_moment, std::abs(r.moment));
    const double score = r.force.norm() + std::abs(r.moment) / std::max(grid.hx(), grid.hy());
    if (score > worst) {
      worst = score;
      diag.worst_element = e;
    }
    for (int edge : {kRight, kTop}) {
      const int m = grid.neighbor(e, edge);
      if (m < 0) continue;
      const int opposite = (edge + 2) % 4;
      const double gap = std::max((result.tractions[e][edge].start + result.tractions[m][opposite].end).norm(),
                                  (result.tractions[e][edge].end + result.tractions[m][opposite].start).norm());
      diag.max_action_reaction = std::max(diag.max_action_reaction, gap);
    }
  }
  return result;
}

std::vector<ElementTractions> raw_stress_tractions(const CartesianGrid& grid, const Material& material,
                                                   std::span<const double> densities, const Eigen::VectorXd& u) {
  const auto b = strain_displacement(grid.hx(), grid.hy(), 0.0, 0.0);
  const Eigen::Matrix3d d0 = material.constitutive();
  std::vector<ElementTractions> out(grid.num_elements());
  for (int e : grid.active_elements()) {
    const Eigen::Vector3d sigma = material.stiffness_scale(densities[e]) * d0 * (b * gather(grid, u, e));
    for (int edge = 0; edge < 4; ++edge) {
      const Vec2 n = CartesianGrid::outward_normal(edge);
      const Vec2 t(sigma[0] * n.x() + sigma[2] * n.y(), sigma[2] * n.x() + sigma[1] * n.y());
      out[e][edge] = {t, t};
    }
  }
  return out;
}

void write_tractions_csv(const std::string& path, const CartesianGrid& grid,
                         const std::vector<ElementTractions>& tractions) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "element,edge,tsx,tsy,tex,tey\n";
  out << std::setprecision(17);
  for (int e : grid.active_elements()) {
    for (int edge = 0; edge < 4; ++edge) {
      const auto& t = tractions[e][edge];
      out << e << ',' << edge << ',' << t.start.x() << ',' << t.start.y() << ',' << t.end.x() << ',' << t.end.y()
          << '\n';
    }
  }
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace twolevel
