#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace twolevel {

using Vec2 = Eigen::Vector2d;

/// Planar cross product (z component).
inline double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

/// Selects the serial reference path or the OpenMP path of a data-parallel kernel.
/// Both paths produce bitwise-identical results; reductions are always serial.
enum class Execution { serial, parallel };

/// Invalid user input: grid, boundary conditions, parameters, config text.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Singular systems, solver failures, infeasible volume targets, equilibration failures.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reading or writing artifacts failed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace twolevel
