#pragma once

#include "twolevel/grid.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace twolevel {

/// Density raster, row 0 at the top. Pixel (x, y) belongs to coarse cell (x / n, (height - 1 - y) / n).
struct HighResImage {
  int width = 0;
  int height = 0;
  int n = 1;  ///< pixels per coarse cell side
  std::vector<double> pixels;
  std::vector<std::uint8_t> background;  ///< 1 where no active cell covers the pixel

  double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  /// Coarse cell id of a pixel.
  int cell_of(const CartesianGrid& coarse, int x, int y) const;
};

/// Places each active cell's n*n raster (fine element id = fx * n + fy) at its grid position.
HighResImage stitch(const CartesianGrid& coarse, const std::vector<std::vector<double>>& cells, int n);

/// Coarse field drawn with `scale` pixels per element.
HighResImage coarse_image(const CartesianGrid& coarse, const std::vector<double>& rho, int scale);

/// Left-to-right density ramp 0 -> 1.
HighResImage legend_strip(int width, int height);

struct BoundaryMismatch {
  int cell_a = -1;
  int cell_b = -1;
  double mean_abs = 0.0;
};

struct ContinuityStats {
  std::vector<BoundaryMismatch> boundaries;
  double mean = 0.0;
  double max = 0.0;
};

/// Mean |drho| between the facing pixel rows/columns of every interior boundary between
/// two active cells; `include` narrows the set of boundaries.
ContinuityStats continuity_metric(const HighResImage& image, const CartesianGrid& coarse,
                                  const std::function<bool(int, int)>& include = {});

/// Binary 8-bit graymap, gray = round(255 (1 - rho)); background pixels are white.
std::string encode_pgm(const HighResImage& image);
void write_pgm(const std::string& path, const HighResImage& image);

/// Comma-separated rows, top row first, 17 significant digits.
void write_csv(const std::string& path, const HighResImage& image);
HighResImage read_csv(const std::string& path);

}  // namespace twolevel
