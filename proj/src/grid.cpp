#include "twolevel/grid.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>
#include <string>
#include <utility>

namespace twolevel {

CartesianGrid::CartesianGrid(int nx, int ny, double hx, double hy, std::vector<std::uint8_t> active,
                             Vec2 origin)
    : nx_(nx), ny_(ny), hx_(hx), hy_(hy), origin_(std::move(origin)), active_(std::move(active)) {
  if (nx < 1 || ny < 1) throw ConfigError("grid: element counts must be positive");
  if (!(hx > 0.0) || !(hy > 0.0) || !std::isfinite(hx) || !std::isfinite(hy))
    throw ConfigError("grid: element edge lengths must be positive");
  const auto ne = static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny);
  if (active_.empty()) active_.assign(ne, 1);
  if (active_.size() != ne)
    throw ConfigError("grid: activity mask has " + std::to_string(active_.size()) + " entries, expected " +
                      std::to_string(ne));

  for (int e = 0; e < num_elements(); ++e) {
    if (active_[e]) active_list_.push_back(e);
  }
  num_active_elements_ = static_cast<int>(active_list_.size());
  if (num_active_elements_ == 0) throw ConfigError("grid: no active elements");

  node_dof_.assign(num_nodes(), -1);
  std::vector<std::uint8_t> touched(num_nodes(), 0);
  for (int e : active_list_) {
    for (int n : element_nodes(e)) touched[n] = 1;
  }
  for (int n = 0; n < num_nodes(); ++n) {
    if (touched[n]) node_dof_[n] = num_active_nodes_++;
  }
  validate_connectivity();
}

std::array<int, 4> CartesianGrid::element_nodes(int e) const {
  const auto [ix, iy] = element_coords(e);
  return {node_id(ix, iy), node_id(ix + 1, iy), node_id(ix + 1, iy + 1), node_id(ix, iy + 1)};
}

std::array<int, 8> CartesianGrid::element_dofs(int e) const {
  const auto nodes = element_nodes(e);
  std::array<int, 8> dofs{};
  for (int a = 0; a < 4; ++a) {
    dofs[2 * a] = dof(nodes[a], 0);
    dofs[2 * a + 1] = dof(nodes[a], 1);
  }
  return dofs;
}

std::array<int, 2> CartesianGrid::edge_nodes(int e, int edge) const {
  const auto nodes = element_nodes(e);
  return {nodes[edge], nodes[(edge + 1) % 4]};
}

Vec2 CartesianGrid::outward_normal(int edge) {
  switch (edge) {
    case kBottom: return {0.0, -1.0};
    case kRight: return {1.0, 0.0};
    case kTop: return {0.0, 1.0};
    default: return {-1.0, 0.0};
  }
}

Vec2 CartesianGrid::node_position(int n) const {
  const auto [jx, jy] = node_coords(n);
  return origin_ + Vec2(jx * hx_, jy * hy_);
}

Vec2 CartesianGrid::element_center(int e) const {
  const auto [ix, iy] = element_coords(e);
  return origin_ + Vec2((ix + 0.5) * hx_, (iy + 0.5) * hy_);
}

int CartesianGrid::neighbor(int e, int edge) const {
  static constexpr int kDx[4] = {0, 1, 0, -1};
  static constexpr int kDy[4] = {-1, 0, 1, 0};
  const auto [ix, iy] = element_coords(e);
  const int jx = ix + kDx[edge];
  const int jy = iy + kDy[edge];
  return active_at(jx, jy) ? element_id(jx, jy) : -1;
}

void CartesianGrid::validate_connectivity() const {
  std::vector<std::uint8_t> seen(num_elements(), 0);
  std::queue<int> frontier;
  frontier.push(active_list_.front());
  seen[active_list_.front()] = 1;
  int reached = 0;
  while (!frontier.empty()) {
    const int e = frontier.front();
    frontier.pop();
    ++reached;
    for (int edge = 0; edge < 4; ++edge) {
      const int m = neighbor(e, edge);
      if (m >= 0 && !seen[m]) {
        seen[m] = 1;
        frontier.push(m);
      }
    }
  }
  if (reached != num_active_elements_)
    throw ConfigError("grid: active region is not edge-connected (" + std::to_string(reached) + " of " +
                      std::to_string(num_active_elements_) + " elements reachable)");
}

CartesianGrid build_grid(int nx, int ny, double hx, double hy, std::vector<std::uint8_t> active_mask) {
  return CartesianGrid(nx, ny, hx, hy, std::move(active_mask));
}

std::vector<BoundaryEdge> boundary_edges(const CartesianGrid& grid) {
  std::vector<BoundaryEdge> edges;
  for (int e : grid.active_elements()) {
    for (int edge = 0; edge < 4; ++edge) {
      if (grid.neighbor(e, edge) < 0) edges.push_back({e, edge, CartesianGrid::outward_normal(edge)});
    }
  }
  return edges;
}

std::vector<std::uint8_t> l_shape_mask(int nx, int ny, int cut_x, int cut_y) {
  if (cut_x < 0 || cut_y < 0 || cut_x >= nx || cut_y >= ny)
    throw ConfigError("l_shape_mask: cut-out must leave both branches non-empty");
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(nx) * ny, 1);
  for (int ix = nx - cut_x; ix < nx; ++ix) {
    for (int iy = ny - cut_y; iy < ny; ++iy) mask[static_cast<std::size_t>(ix) * ny + iy] = 0;
  }
  return mask;
}

void BoundarySpec::validate(const CartesianGrid& grid) const {
  std::set<std::pair<int, int>> constrained;
  for (const auto& d : dirichlet) {
    if (d.node < 0 || d.node >= grid.num_nodes() || !grid.node_active(d.node))
      throw ConfigError("boundary: Dirichlet condition on inactive or unknown node " + std::to_string(d.node));
    for (int c = 0; c < 2; ++c) {
      if (d.fixed[c]) constrained.insert({d.node, c});
    }
  }
  for (const auto& load : neumann) {
    if (load.element < 0 || load.element >= grid.num_elements() || !grid.active(load.element))
      throw ConfigError("boundary: Neumann load on inactive or unknown element " + std::to_string(load.element));
    if (load.edge < 0 || load.edge > 3) throw ConfigError("boundary: local edge id must be in [0, 3]");
    if (grid.neighbor(load.element, load.edge) >= 0)
      throw ConfigError("boundary: Neumann edge " + std::to_string(load.edge) + " of element " +
                        std::to_string(load.element) + " is not on the domain boundary");
    const auto nodes = grid.edge_nodes(load.element, load.edge);
    for (int c = 0; c < 2; ++c) {
      if (load.t_start[c] == 0.0 && load.t_end[c] == 0.0) continue;
      for (int n : nodes) {
        if (constrained.count({n, c}))
          throw ConfigError("boundary: node " + std::to_string(n) + " component " + std::to_string(c) +
                            " is both constrained and loaded");
      }
    }
  }

  // Rigid-body modes restricted to the constrained components must have full rank.
  Eigen::MatrixXd modes(static_cast<Eigen::Index>(constrained.size()), 3);
  Eigen::Index row = 0;
  double extent = std::max(grid.nx() * grid.hx(), grid.ny() * grid.hy());
  for (const auto& [n, c] : constrained) {
    const Vec2 x = (grid.node_position(n) - grid.origin()) / extent;
    modes(row, 0) = c == 0 ? 1.0 : 0.0;
    modes(row, 1) = c == 1 ? 1.0 : 0.0;
    modes(row, 2) = c == 0 ? -x.y() : x.x();
    ++row;
  }
  if (modes.rows() < 3) throw ConfigError("boundary: fewer than three constrained components");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(modes);
  qr.setThreshold(1e-10);
  if (qr.rank() < 3) throw ConfigError("boundary: constraints do not remove all rigid-body modes");
}

std::vector<int> side_nodes(const CartesianGrid& grid, int side) {
  std::vector<int> nodes;
  const bool vertical = side == kLeft || side == kRight;
  const int count = vertical ? grid.ny() + 1 : grid.nx() + 1;
  for (int k = 0; k < count; ++k) {
    int n = 0;
    switch (side) {
      case kBottom: n = grid.node_id(k, 0); break;
      case kTop: n = grid.node_id(k, grid.ny()); break;
      case kLeft: n = grid.node_id(0, k); break;
      default: n = grid.node_id(grid.nx(), k); break;
    }
    if (grid.node_active(n)) nodes.push_back(n);
  }
  return nodes;
}

std::vector<BoundaryEdge> side_edges(const CartesianGrid& grid, int side) {
  std::vector<BoundaryEdge> edges;
  const bool vertical = side == kLeft || side == kRight;
  const int count = vertical ? grid.ny() : grid.nx();
  for (int k = 0; k < count; ++k) {
    int ix = 0;
    int iy = 0;
    switch (side) {
      case kBottom: ix = k; iy = 0; break;
      case kTop: ix = k; iy = grid.ny() - 1; break;
      case kLeft: ix = 0; iy = k; break;
      default: ix = grid.nx() - 1; iy = k; break;
    }
    if (grid.active_at(ix, iy)) edges.push_back({grid.element_id(ix, iy), side, CartesianGrid::outward_normal(side)});
  }
  return edges;
}

std::vector<DirichletCondition> clamp_side(const CartesianGrid& grid, int side) {
  std::vector<DirichletCondition> out;
  for (int n : side_nodes(grid, side)) out.push_back({n, {true, true}, Vec2::Zero()});
  return out;
}

}  // namespace twolevel
