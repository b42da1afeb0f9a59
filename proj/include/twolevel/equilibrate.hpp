#pragma once

#include "twolevel/common.hpp"
#include "twolevel/fem.hpp"
#include "twolevel/grid.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace twolevel {

// Around a node (jx, jy) the four candidate elements are visited counter-clockwise:
//   quadrant 0 = (jx, jy), 1 = (jx-1, jy), 2 = (jx-1, jy-1), 3 = (jx, jy-1).
// The node is local corner q of the quadrant-q element. Local edge q is shared with
// the previous element of the cycle ("incoming" side, node at its start) and local
// edge (q+3)%4 with the next one ("outgoing" side, node at its end).

enum class NodeKind : std::uint8_t {
  internal,
  internal_void_adjacent,
  dirichlet_standard,
  dirichlet_outer_corner,
  dirichlet_reentrant,
  neumann_standard,
  neumann_outer_corner,
  neumann_reentrant,
};
inline constexpr int kNodeKindCount = 8;
const char* to_string(NodeKind kind);

struct NodeClass {
  int node = -1;
  NodeKind kind = NodeKind::internal;
  int count = 0;                       ///< active elements around the node (voids included)
  bool closed = false;                 ///< all four quadrants present
  std::array<int, 4> elements{-1, -1, -1, -1};  ///< chain order; for closed chains E, A, B, M
  std::array<int, 4> corner{-1, -1, -1, -1};    ///< local corner of the node in each chain element
  std::array<bool, 4> is_void{};
  int void_count = 0;
  bool checkerboard = false;           ///< voids on opposite quadrants only
};

/// One NodeClass per grid node (count == 0 for inactive nodes). Throws NumericalError when a
/// non-void element has three void edge neighbours or a node touches two diagonal elements
/// only, and ConfigError for Dirichlet conditions on nodes surrounded by four elements.
std::vector<NodeClass> classify_nodes(const CartesianGrid& grid, const BoundarySpec& boundary,
                                      const std::vector<std::uint8_t>& void_mask);

/// Mass centre of the Maxwell polygon with vertices 0, F1, F1+F2, F1+F2+F3. Triangles that
/// overlap because opposite sides cross are counted once. A zero-area polygon returns the
/// mean of its vertices. Throws NumericalError when the forces do not close.
Vec2 polygon_centroid(const Vec2& f1, const Vec2& f2, const Vec2& f3, const Vec2& f4);

/// Forces meeting at one node, in chain order, plus how the open ends are closed.
struct ChainInput {
  int count = 0;
  bool closed = false;
  std::array<Vec2, 4> forces{Vec2::Zero(), Vec2::Zero(), Vec2::Zero(), Vec2::Zero()};
  std::array<bool, 4> is_void{};
  /// Side force on the first element's free boundary side; empty when it is a support.
  std::optional<Vec2> start_load;
  /// Side force on the last element's free boundary side; empty when it is a support.
  std::optional<Vec2> end_load;
  std::array<bool, 2> constrained{};  ///< supported components, when any end is a support
};

struct NodeSplit {
  std::array<Vec2, 4> incoming{Vec2::Zero(), Vec2::Zero(), Vec2::Zero(), Vec2::Zero()};
  std::array<Vec2, 4> outgoing{Vec2::Zero(), Vec2::Zero(), Vec2::Zero(), Vec2::Zero()};
  Vec2 pole = Vec2::Zero();
  Vec2 lambda = Vec2::Zero();  ///< closure residual of the node
  bool checkerboard = false;
};

Vec2 choose_pole(const ChainInput& chain);

/// Splits every force of the chain into incoming + outgoing side forces with neighbouring
/// sides equal and opposite, anchored at `pole`.
NodeSplit split_with_pole(const ChainInput& chain, const Vec2& pole);
NodeSplit split_node(const ChainInput& chain);

NodeSplit split_internal_node(const std::array<Vec2, 4>& forces, const Vec2& pole);
/// Supported open chain of one to three elements; the reactions are the two end sides.
NodeSplit split_dirichlet_node(std::span<const Vec2> forces, std::array<bool, 2> constrained = {true, true});
/// Loaded or free open chain; `start_load`/`end_load` are the consistent nodal loads T_n.
NodeSplit split_neumann_node(std::span<const Vec2> forces, const Vec2& start_load, const Vec2& end_load);

/// Inverts the edge mass matrix: returns the end values of the linear traction whose
/// consistent nodal loads are (p_start, p_end).
std::array<Vec2, 2> side_forces_to_tractions(const Vec2& p_start, const Vec2& p_end, double length);

struct EdgeTraction {
  Vec2 start = Vec2::Zero();
  Vec2 end = Vec2::Zero();
};
using ElementTractions = std::array<EdgeTraction, 4>;

/// Side forces of one element: [edge][0 = at edge start, 1 = at edge end].
using ElementSideForces = std::array<std::array<Vec2, 2>, 4>;

struct Resultant {
  Vec2 force = Vec2::Zero();
  double moment = 0.0;  ///< about the element centre
};

/// Net force and moment of the four edge tractions of an element (exact for linear tractions).
Resultant element_resultant(double hx, double hy, const ElementTractions& t);

struct EquilibrationDiagnostics {
  double force_scale = 0.0;      ///< max element nodal force norm
  double max_lambda = 0.0;
  int max_lambda_node = -1;
  double max_net_force = 0.0;    ///< over elements
  double max_net_moment = 0.0;   ///< over elements, about the element centre
  int worst_element = -1;
  double max_action_reaction = 0.0;  ///< max |t^E + t^M| over shared edges
  std::array<int, kNodeKindCount> kind_counts{};
  int checkerboard_nodes = 0;
};

struct EquilibrationResult {
  std::vector<ElementTractions> tractions;    ///< per grid element, zero when inactive
  std::vector<ElementSideForces> side_forces;
  std::vector<NodeClass> classes;
  EquilibrationDiagnostics diagnostics;
};

/// Equilibrated edge tractions from a converged coarse solution.
EquilibrationResult equilibrate_all(const CartesianGrid& grid, const BoundarySpec& boundary,
                                    const Material& material, std::span<const double> densities,
                                    const Eigen::VectorXd& u, const std::vector<std::uint8_t>& void_mask,
                                    Execution exec = Execution::parallel);

/// Control loads: constant tractions sigma_e n from the element-centre stress, which
/// jump across shared edges.
std::vector<ElementTractions> raw_stress_tractions(const CartesianGrid& grid, const Material& material,
                                                   std::span<const double> densities, const Eigen::VectorXd& u);

/// Columns: element, edge, tsx, tsy, tex, tey. Only active elements are written.
void write_tractions_csv(const std::string& path, const CartesianGrid& grid,
                         const std::vector<ElementTractions>& tractions);

}  // namespace twolevel
