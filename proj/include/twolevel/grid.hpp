#pragma once

#include "twolevel/common.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace twolevel {

// Numbering conventions (all fixed, the equilibration code relies on them):
//
//  * element (ix, iy) -> id = ix * ny + iy        (column-major from the origin corner)
//  * node    (jx, jy) -> id = jx * (ny + 1) + jy
//  * local element corners, counter-clockwise from the origin corner:
//        3 ---- 2
//        |      |
//        0 ---- 1
//  * local edges run counter-clockwise: edge k goes from corner k to corner (k+1) % 4,
//        0 = bottom, 1 = right, 2 = top, 3 = left.
//  * local dof order of an element: (u0x, u0y, u1x, u1y, u2x, u2y, u3x, u3y).

enum EdgeSide : int { kBottom = 0, kRight = 1, kTop = 2, kLeft = 3 };

struct ElementCoords {
  int ix = 0;
  int iy = 0;
  bool operator==(const ElementCoords&) const = default;
};

struct NodeCoords {
  int jx = 0;
  int jy = 0;
  bool operator==(const NodeCoords&) const = default;
};

struct BoundaryEdge {
  int element = -1;
  int edge = -1;
  Vec2 normal = Vec2::Zero();
};

/// Structured grid of nx * ny rectangular bilinear elements. Elements outside the
/// activity mask carry no unknowns; nodes touching no active element are inactive.
/// Immutable after construction.
class CartesianGrid {
 public:
  CartesianGrid() = default;
  /// An empty mask means every element is active. Throws ConfigError on bad
  /// dimensions, a mask of the wrong size, an empty or a disconnected active region.
  CartesianGrid(int nx, int ny, double hx, double hy, std::vector<std::uint8_t> active = {},
                Vec2 origin = Vec2::Zero());

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double hx() const { return hx_; }
  double hy() const { return hy_; }
  const Vec2& origin() const { return origin_; }
  double element_volume() const { return hx_ * hy_; }

  int num_elements() const { return nx_ * ny_; }
  int num_nodes() const { return (nx_ + 1) * (ny_ + 1); }
  int num_active_elements() const { return num_active_elements_; }
  int num_active_nodes() const { return num_active_nodes_; }
  int num_dofs() const { return 2 * num_active_nodes_; }

  int element_id(int ix, int iy) const { return ix * ny_ + iy; }
  ElementCoords element_coords(int e) const { return {e / ny_, e % ny_}; }
  int node_id(int jx, int jy) const { return jx * (ny_ + 1) + jy; }
  NodeCoords node_coords(int n) const { return {n / (ny_ + 1), n % (ny_ + 1)}; }

  bool in_range(int ix, int iy) const { return ix >= 0 && iy >= 0 && ix < nx_ && iy < ny_; }
  bool active(int e) const { return active_[e] != 0; }
  /// Active element at (ix, iy), false when out of range.
  bool active_at(int ix, int iy) const { return in_range(ix, iy) && active(element_id(ix, iy)); }
  bool node_active(int n) const { return node_dof_[n] >= 0; }
  const std::vector<int>& active_elements() const { return active_list_; }

  /// Compact index of an active node (dofs 2k, 2k+1), -1 for inactive nodes.
  int node_index(int n) const { return node_dof_[n]; }
  int dof(int n, int component) const { return 2 * node_dof_[n] + component; }

  std::array<int, 4> element_nodes(int e) const;
  /// Global dof ids of an active element in local dof order.
  std::array<int, 8> element_dofs(int e) const;
  /// (start, end) node ids of a local edge, counter-clockwise orientation.
  std::array<int, 2> edge_nodes(int e, int edge) const;
  double edge_length(int edge) const { return (edge == kBottom || edge == kTop) ? hx_ : hy_; }
  static Vec2 outward_normal(int edge);

  Vec2 node_position(int n) const;
  Vec2 element_center(int e) const;

  /// Active element across the given local edge, -1 if none.
  int neighbor(int e, int edge) const;

 private:
  void validate_connectivity() const;

  int nx_ = 0;
  int ny_ = 0;
  double hx_ = 0.0;
  double hy_ = 0.0;
  Vec2 origin_ = Vec2::Zero();
  std::vector<std::uint8_t> active_;
  std::vector<int> active_list_;
  std::vector<int> node_dof_;
  int num_active_elements_ = 0;
  int num_active_nodes_ = 0;
};

CartesianGrid build_grid(int nx, int ny, double hx, double hy, std::vector<std::uint8_t> active_mask = {});

/// Every active-element edge not shared with another active element, exactly once.
std::vector<BoundaryEdge> boundary_edges(const CartesianGrid& grid);

/// Mask of an L-shaped domain: the bounding rectangle minus its upper-right block of
/// cut_x * cut_y elements.
std::vector<std::uint8_t> l_shape_mask(int nx, int ny, int cut_x, int cut_y);

struct DirichletCondition {
  int node = -1;
  std::array<bool, 2> fixed{false, false};
  Vec2 value = Vec2::Zero();
};

/// Linear traction on one element edge; t_start acts at the edge's start node
/// (counter-clockwise orientation), t_end at its end node.
struct NeumannLoad {
  int element = -1;
  int edge = -1;
  Vec2 t_start = Vec2::Zero();
  Vec2 t_end = Vec2::Zero();
};

struct BoundarySpec {
  std::vector<DirichletCondition> dirichlet;
  std::vector<NeumannLoad> neumann;

  /// Throws ConfigError when a condition targets an inactive node/element, a Neumann
  /// edge is interior, a loaded edge component is also constrained, or the
  /// constraints leave a planar rigid-body mode free.
  void validate(const CartesianGrid& grid) const;
};

/// Clamp (both components, zero displacement) every active node on one side of the
/// bounding rectangle. Side uses EdgeSide numbering.
std::vector<DirichletCondition> clamp_side(const CartesianGrid& grid, int side);

/// Active node ids on a side of the bounding rectangle, ordered by increasing coordinate.
std::vector<int> side_nodes(const CartesianGrid& grid, int side);

/// Boundary edges lying on a side of the bounding rectangle, ordered by increasing coordinate.
std::vector<BoundaryEdge> side_edges(const CartesianGrid& grid, int side);

}  // namespace twolevel
