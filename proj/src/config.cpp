#include "twolevel/config.hpp"

#include "twolevel/equilibrate.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace twolevel {

namespace pt = boost::property_tree;

namespace {

const char* side_name(int side) {
  switch (side) {
    case kBottom: return "bottom";
    case kRight: return "right";
    case kTop: return "top";
    default: return "left";
  }
}

int parse_side(const std::string& text, const std::string& key) {
  if (text == "bottom") return kBottom;
  if (text == "right") return kRight;
  if (text == "top") return kTop;
  if (text == "left") return kLeft;
  throw ConfigError(key + ": unknown side '" + text + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& text, const std::string& key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(v)) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + text + "'");
  }
}

int to_int(const std::string& text, const std::string& key) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + text + "'");
  }
}

bool to_bool(const std::string& text, const std::string& key) {
  if (text == "true" || text == "yes" || text == "1") return true;
  if (text == "false" || text == "no" || text == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using Setter = void (*)(RunConfig&, const std::string& value, const std::string& key);

const std::map<std::string, std::map<std::string, Setter>>& schema() {
  static const std::map<std::string, std::map<std::string, Setter>> table = {
      {"run",
       {
           {"output", [](RunConfig& c, const std::string& v, const std::string&) { c.output = v; }},
           {"workers", [](RunConfig& c, const std::string& v, const std::string& k) { c.workers = to_int(v, k); }},
           {"max_stages",
            [](RunConfig& c, const std::string& v, const std::string& k) { c.max_stages = to_int(v, k); }},
           {"write_cell_rasters",
            [](RunConfig& c, const std::string& v, const std::string& k) { c.write_cell_rasters = to_bool(v, k); }},
           {"traction_mode",
            [](RunConfig& c, const std::string& v, const std::string& k) {
              if (v == "equilibrated") {
                c.traction_mode = TractionMode::equilibrated;
              } else if (v == "raw_stress") {
                c.traction_mode = TractionMode::raw_stress;
              } else {
                throw ConfigError(k + ": expected equilibrated or raw_stress");
              }
            }},
           {"note", [](RunConfig& c, const std::string& v, const std::string&) { c.note = v; }},
       }},
      {"grid",
       {
           {"nx", [](RunConfig& c, const std::string& v, const std::string& k) { c.nx = to_int(v, k); }},
           {"ny", [](RunConfig& c, const std::string& v, const std::string& k) { c.ny = to_int(v, k); }},
           {"hx", [](RunConfig& c, const std::string& v, const std::string& k) { c.hx = to_double(v, k); }},
           {"hy", [](RunConfig& c, const std::string& v, const std::string& k) { c.hy = to_double(v, k); }},
           {"mask", [](RunConfig& c, const std::string& v, const std::string&) { c.mask = v; }},
           {"cut_x", [](RunConfig& c, const std::string& v, const std::string& k) { c.cut_x = to_int(v, k); }},
           {"cut_y", [](RunConfig& c, const std::string& v, const std::string& k) { c.cut_y = to_int(v, k); }},
       }},
      {"material",
       {
           {"youngs_modulus",
            [](RunConfig& c, const std::string& v, const std::string& k) {
              c.material.youngs_modulus = to_double(v, k);
            }},
           {"poisson_ratio",
            [](RunConfig& c, const std::string& v, const std::string& k) {
              c.material.poisson_ratio = to_double(v, k);
            }},
           {"rho_min",
            [](RunConfig& c, const std::string& v, const std::string& k) { c.material.rho_min = to_double(v, k); }},
       }},
      {"coarse",
       {
           {"penalty",
            [](RunConfig& c, const std::string& v, const std::string& k) { c.material.penalty = to_double(v, k); }},
           {"r_min", [](RunConfig& c, const std::string& v, const std::string& k) { c.coarse.r_min = to_double(v, k); }},
           {"eps", [](RunConfig& c, const std::string& v, const std::string& k) { c.coarse.eps = to_double(v, k); }},
           {"max_iterations",
            [](RunConfig& c, const std::string& v, const std::string& k) { c.coarse.max_iterations = to_int(v, k); }},
           {"volume_fraction",
            [](RunConfig& c, const std::string& v, const std::string& k) {
              c.thresholds.volume_fraction = to_double(v, k);
            }},
           {"lower",
            [](RunConfig& c, const std::string& v, const std::string& k) { c.thresholds.lower = to_double(v, k); }},
           {"upper",
            [](RunConfig& c, const std::string& v, const std::string& k) { c.thresholds.upper = to_double(v, k); }},
           {"move",
            [](RunConfig& c, const std::string& v, const std::string& k) {
              c.coarse.oc.move = to_double(v, k);
              c.fine.oc.move = c.coarse.oc.move;
            }},
           {"damping",
            [](RunConfig& c, const std::string& v, const std::string& k) {
              c.coarse.oc.damping = to_double(v, k);
              c.fine.oc.damping = c.coarse.oc.damping;
            }},
       }},
      {"fine",
       {
           {"n", [](RunConfig& c, const std::string& v, const std::string& k) { c.fine.n = to_int(v, k); }},
           {"penalty", [](RunConfig& c, const std::string& v, const std::string& k) { c.fine.penalty = to_double(v, k); }},
           {"r_min", [](RunConfig& c, const std::string& v, const std::string& k) { c.fine.r_min = to_double(v, k); }},
           {"eps", [](RunConfig& c, const std::string& v, const std::string& k) { c.fine.eps = to_double(v, k); }},
           {"max_iterations",
            [](RunConfig& c, const std::string& v, const std::string& k) { c.fine.max_iterations = to_int(v, k); }},
       }},
      {"projection",
       {
           {"beta0",
            [](RunConfig& c, const std::string& v, const std::string& k) { c.fine.projection.beta0 = to_double(v, k); }},
           {"beta_max",
            [](RunConfig& c, const std::string& v, const std::string& k) {
              c.fine.projection.beta_max = to_double(v, k);
            }},
           {"mu", [](RunConfig& c, const std::string& v, const std::string& k) { c.fine.projection.mu = to_double(v, k); }},
           {"nd_min",
            [](RunConfig& c, const std::string& v, const std::string& k) { c.fine.projection.nd_min = to_double(v, k); }},
           {"cadence",
            [](RunConfig& c, const std::string& v, const std::string& k) { c.fine.projection.cadence = to_int(v, k); }},
       }},
      {"supports",
       {
           {"clamp",
            [](RunConfig& c, const std::string& v, const std::string& k) {
              c.supports.clamped_sides.clear();
              for (const auto& s : split(v, ',')) c.supports.clamped_sides.push_back(parse_side(s, k));
            }},
           {"nodes",
            [](RunConfig& c, const std::string& v, const std::string& k) {
              c.supports.nodes.clear();
              for (const auto& item : split(v, ',')) {
                const auto parts = split(item, ':');
                if (parts.size() != 3 || parts[2].find_first_not_of("xy") != std::string::npos)
                  throw ConfigError(k + ": expected entries jx:jy:xy, jx:jy:x or jx:jy:y");
                c.supports.nodes.push_back({to_int(parts[0], k), to_int(parts[1], k),
                                            {parts[2].find('x') != std::string::npos,
                                             parts[2].find('y') != std::string::npos}});
              }
            }},
       }},
      {"load",
       {
           {"type", [](RunConfig& c, const std::string& v, const std::string&) { c.load.type = v; }},
           {"side", [](RunConfig& c, const std::string& v, const std::string& k) { c.load.side = parse_side(v, k); }},
           {"from", [](RunConfig& c, const std::string& v, const std::string& k) { c.load.from = to_double(v, k); }},
           {"to", [](RunConfig& c, const std::string& v, const std::string& k) { c.load.to = to_double(v, k); }},
           {"peak", [](RunConfig& c, const std::string& v, const std::string& k) { c.load.peak = to_double(v, k); }},
           {"dx",
            [](RunConfig& c, const std::string& v, const std::string& k) { c.load.direction.x() = to_double(v, k); }},
           {"dy",
            [](RunConfig& c, const std::string& v, const std::string& k) { c.load.direction.y() = to_double(v, k); }},
       }},
  };
  return table;
}

RunConfig example1() {
  RunConfig c;
  c.preset = "example1";
  c.note = "cantilever 2 x 1, left edge clamped, parabolic shear on the right edge";
  c.nx = 32;
  c.ny = 16;
  c.hx = c.hy = 1.0 / 16.0;
  c.material = {1000.0, 0.3, 1.0, 1e-3};
  c.thresholds = {0.12, 0.88, 0.5};
  c.coarse.r_min = 1.5;
  c.coarse.eps = 0.03;
  c.fine.n = 32;
  c.fine.penalty = 3.0;
  c.fine.r_min = 1.3;
  c.fine.eps = 0.01;
  c.fine.projection = {1.0, 2.0, 0.5, 50.0, 2};
  c.supports.clamped_sides = {kLeft};
  c.load = {"parabolic", kRight, 0.0, 0.0, 1.0, Vec2(0.0, -1.0)};
  c.output = "out/example1";
  return c;
}

RunConfig example2() {
  RunConfig c = example1();
  c.preset = "example2";
  c.note =
      "L-shaped 10 x 10 domain without its upper-right 5 x 5 block, top edge clamped; the parabolic load "
      "on x = 10, y in [0, 5] is an assumed extent";
  c.nx = 32;
  c.ny = 32;
  c.hx = c.hy = 10.0 / 32.0;
  c.mask = "l_shape";
  c.cut_x = 16;
  c.cut_y = 16;
  c.fine.projection.beta_max = 4.5;
  c.fine.projection.nd_min = 45.0;
  c.supports.clamped_sides = {kTop};
  c.load = {"parabolic", kRight, 0.0, 5.0, 1.0, Vec2(0.0, -1.0)};
  c.output = "out/example2";
  return c;
}

}  // namespace

void RunConfig::validate() const {
  if (nx < 1 || ny < 1) throw ConfigError("grid.nx/grid.ny: must be positive");
  if (!(hx > 0.0) || !(hy > 0.0)) throw ConfigError("grid.hx/grid.hy: must be positive");
  if (mask != "full" && mask != "l_shape") throw ConfigError("grid.mask: expected full or l_shape");
  if (mask == "l_shape" && (cut_x < 1 || cut_y < 1 || cut_x >= nx || cut_y >= ny))
    throw ConfigError("grid.cut_x/grid.cut_y: cut-out must leave both branches non-empty");
  material.validate();
  thresholds.validate(material);
  if (!(coarse.r_min > 0.0)) throw ConfigError("coarse.r_min: must be positive");
  if (!(coarse.eps > 0.0)) throw ConfigError("coarse.eps: must be positive");
  if (coarse.max_iterations < 1) throw ConfigError("coarse.max_iterations: must be positive");
  if (!(coarse.oc.move > 0.0 && coarse.oc.move <= 1.0)) throw ConfigError("coarse.move: must be in (0, 1]");
  if (!(coarse.oc.damping > 0.0)) throw ConfigError("coarse.damping: must be positive");
  if (max_stages < 1) throw ConfigError("run.max_stages: must be positive");
  if (workers < 0) throw ConfigError("run.workers: must be >= 0");
  fine.validate();
  if (load.type != "parabolic" && load.type != "uniform" && load.type != "none")
    throw ConfigError("load.type: expected parabolic, uniform or none");
  if (load.from > load.to) throw ConfigError("load.from/load.to: from must not exceed to");
  if (supports.clamped_sides.empty() && supports.nodes.empty())
    throw ConfigError("supports: at least one clamped side or supported node is required");
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"example1", "example2"};
  return names;
}

RunConfig preset(const std::string& name) {
  if (name == "example1") return example1();
  if (name == "example2") return example2();
  throw ConfigError("preset: unknown preset '" + name + "'");
}

RunConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
  RunConfig config;
  config.preset.clear();
  if (auto p = tree.get_child_optional("preset")) {
    if (!p->empty()) throw ConfigError("preset: must be a top-level key, not a section");
    config = preset(trim(p->data()));
  }
  const auto& table = schema();
  for (const auto& [name, node] : tree) {
    if (name == "preset") continue;
    const auto section = table.find(name);
    if (section == table.end()) {
      if (node.empty()) throw ConfigError(name + ": unknown top-level key");
      throw ConfigError(name + ": unknown section");
    }
    for (const auto& [key, value] : node) {
      const std::string path = name + "." + key;
      const auto setter = section->second.find(key);
      if (setter == section->second.end()) throw ConfigError(path + ": unknown key");
      setter->second(config, trim(value.data()), path);
    }
  }
  config.validate();
  return config;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string canonical_text(const RunConfig& c) {
  std::ostringstream o;
  o << "preset = " << c.preset << "\n";
  o << "[grid]\nnx = " << c.nx << "\nny = " << c.ny << "\nhx = " << fmt(c.hx) << "\nhy = " << fmt(c.hy)
    << "\nmask = " << c.mask << "\ncut_x = " << c.cut_x << "\ncut_y = " << c.cut_y << "\n";
  o << "[material]\nyoungs_modulus = " << fmt(c.material.youngs_modulus)
    << "\npoisson_ratio = " << fmt(c.material.poisson_ratio) << "\nrho_min = " << fmt(c.material.rho_min) << "\n";
  o << "[coarse]\npenalty = " << fmt(c.material.penalty) << "\nr_min = " << fmt(c.coarse.r_min)
    << "\neps = " << fmt(c.coarse.eps) << "\nmax_iterations = " << c.coarse.max_iterations
    << "\nvolume_fraction = " << fmt(c.thresholds.volume_fraction) << "\nlower = " << fmt(c.thresholds.lower)
    << "\nupper = " << fmt(c.thresholds.upper) << "\nmove = " << fmt(c.coarse.oc.move)
    << "\ndamping = " << fmt(c.coarse.oc.damping) << "\n";
  o << "[fine]\nn = " << c.fine.n << "\npenalty = " << fmt(c.fine.penalty) << "\nr_min = " << fmt(c.fine.r_min)
    << "\neps = " << fmt(c.fine.eps) << "\nmax_iterations = " << c.fine.max_iterations << "\n";
  o << "[projection]\nbeta0 = " << fmt(c.fine.projection.beta0) << "\nbeta_max = " << fmt(c.fine.projection.beta_max)
    << "\nmu = " << fmt(c.fine.projection.mu) << "\nnd_min = " << fmt(c.fine.projection.nd_min)
    << "\ncadence = " << c.fine.projection.cadence << "\n";
  o << "[supports]\nclamp = ";
  for (std::size_t i = 0; i < c.supports.clamped_sides.size(); ++i)
    o << (i ? ", " : "") << side_name(c.supports.clamped_sides[i]);
  o << "\nnodes = ";
  for (std::size_t i = 0; i < c.supports.nodes.size(); ++i) {
    const auto& n = c.supports.nodes[i];
    o << (i ? ", " : "") << n.jx << ':' << n.jy << ':' << (n.fixed[0] ? "x" : "") << (n.fixed[1] ? "y" : "");
  }
  o << "\n[load]\ntype = " << c.load.type << "\nside = " << side_name(c.load.side) << "\nfrom = " << fmt(c.load.from)
    << "\nto = " << fmt(c.load.to) << "\npeak = " << fmt(c.load.peak) << "\ndx = " << fmt(c.load.direction.x())
    << "\ndy = " << fmt(c.load.direction.y()) << "\n";
  o << "[run]\nmax_stages = " << c.max_stages << "\ntraction_mode = "
    << (c.traction_mode == TractionMode::equilibrated ? "equilibrated" : "raw_stress") << "\n";
  return o.str();
}

std::vector<NeumannLoad> side_load(const CartesianGrid& grid, const LoadSpec& load) {
  std::vector<NeumannLoad> out;
  if (load.type == "none") return out;
  const bool vertical = load.side == kLeft || load.side == kRight;
  const int axis = vertical ? 1 : 0;
  double from = load.from;
  double to = load.to;
  if (from == to) {
    from = grid.origin()[axis];
    to = from + (vertical ? grid.ny() * grid.hy() : grid.nx() * grid.hx());
  }
  const double centre = 0.5 * (from + to);
  const double width = to - from;
  auto tau = [&](double s) {
    if (load.type == "uniform") return load.peak;
    const double r = 2.0 * (s - centre) / width;
    return load.peak * (1.0 - r * r);
  };
  for (const auto& be : side_edges(grid, load.side)) {
    const auto nodes = grid.edge_nodes(be.element, be.edge);
    const double s0 = grid.node_position(nodes[0])[axis];
    const double s1 = grid.node_position(nodes[1])[axis];
    const double a = std::max(std::min(s0, s1), from);
    const double b = std::min(std::max(s0, s1), to);
    if (!(b > a)) continue;
    // Simpson is exact for the cubic products of a quadratic load and linear shape functions.
    auto phi_start = [&](double s) { return (s1 - s) / (s1 - s0); };
    auto moments = [&](auto&& phi) {
      const double m = 0.5 * (a + b);
      return (b - a) / 6.0 * (phi(a) * tau(a) + 4.0 * phi(m) * tau(m) + phi(b) * tau(b));
    };
    const double p_start = moments(phi_start);
    const double p_end = moments([&](double s) { return 1.0 - phi_start(s); });
    const auto t = side_forces_to_tractions(p_start * load.direction, p_end * load.direction,
                                            grid.edge_length(be.edge));
    out.push_back({be.element, be.edge, t[0], t[1]});
  }
  return out;
}

Problem build_problem(const RunConfig& config) {
  config.validate();
  std::vector<std::uint8_t> mask;
  if (config.mask == "l_shape") mask = l_shape_mask(config.nx, config.ny, config.cut_x, config.cut_y);
  Problem p{CartesianGrid(config.nx, config.ny, config.hx, config.hy, mask), {}};
  std::set<int> seen;
  for (int side : config.supports.clamped_sides) {
    for (const auto& d : clamp_side(p.grid, side)) {
      if (seen.insert(d.node).second) p.boundary.dirichlet.push_back(d);
    }
  }
  for (const auto& n : config.supports.nodes) {
    if (n.jx < 0 || n.jy < 0 || n.jx > config.nx || n.jy > config.ny)
      throw ConfigError("supports.nodes: node " + std::to_string(n.jx) + ":" + std::to_string(n.jy) +
                        " outside the grid");
    p.boundary.dirichlet.push_back({p.grid.node_id(n.jx, n.jy), n.fixed, Vec2::Zero()});
  }
  p.boundary.neumann = side_load(p.grid, config.load);
  p.boundary.validate(p.grid);
  return p;
}

}  // namespace twolevel
