#include "twolevel/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

namespace twolevel {

int HighResImage::cell_of(const CartesianGrid& coarse, int x, int y) const {
  return coarse.element_id(x / n, (height - 1 - y) / n);
}

namespace {

HighResImage blank(const CartesianGrid& coarse, int n) {
  HighResImage img;
  img.n = n;
  img.width = coarse.nx() * n;
  img.height = coarse.ny() * n;
  img.pixels.assign(static_cast<std::size_t>(img.width) * img.height, 0.0);
  img.background.assign(img.pixels.size(), 1);
  return img;
}

}  // namespace

HighResImage stitch(const CartesianGrid& coarse, const std::vector<std::vector<double>>& cells, int n) {
  if (n < 1) throw ConfigError("stitch: cell resolution must be positive");
  if (cells.size() != static_cast<std::size_t>(coarse.num_elements()))
    throw ConfigError("stitch: expected one raster slot per coarse element");
  HighResImage img = blank(coarse, n);
  for (int e : coarse.active_elements()) {
    const auto& raster = cells[e];
    if (raster.size() != static_cast<std::size_t>(n) * n)
      throw ConfigError("stitch: missing or malformed raster for cell " + std::to_string(e));
    const auto [ix, iy] = coarse.element_coords(e);
    for (int fx = 0; fx < n; ++fx) {
      for (int fy = 0; fy < n; ++fy) {
        const int x = ix * n + fx;
        const int y = img.height - 1 - (iy * n + fy);
        const std::size_t p = static_cast<std::size_t>(y) * img.width + x;
        img.pixels[p] = raster[static_cast<std::size_t>(fx) * n + fy];
        img.background[p] = 0;
      }
    }
  }
  return img;
}

HighResImage coarse_image(const CartesianGrid& coarse, const std::vector<double>& rho, int scale) {
  std::vector<std::vector<double>> cells(coarse.num_elements());
  for (int e : coarse.active_elements()) cells[e].assign(static_cast<std::size_t>(scale) * scale, rho[e]);
  return stitch(coarse, cells, scale);
}

HighResImage legend_strip(int width, int height) {
  HighResImage img;
  img.width = width;
  img.height = height;
  img.pixels.resize(static_cast<std::size_t>(width) * height);
  img.background.assign(img.pixels.size(), 0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) img.at(x, y) = width > 1 ? static_cast<double>(x) / (width - 1) : 1.0;
  }
  return img;
}

ContinuityStats continuity_metric(const HighResImage& image, const CartesianGrid& coarse,
                                  const std::function<bool(int, int)>& include) {
  ContinuityStats stats;
  const int n = image.n;
  for (int e : coarse.active_elements()) {
    const auto [ix, iy] = coarse.element_coords(e);
    for (int edge : {kRight, kTop}) {
      const int m = coarse.neighbor(e, edge);
      if (m < 0 || (include && !include(e, m))) continue;
      double sum = 0.0;
      for (int k = 0; k < n; ++k) {
        double a = 0.0;
        double b = 0.0;
        if (edge == kRight) {
          const int y = image.height - 1 - (iy * n + k);
          a = image.at(ix * n + n - 1, y);
          b = image.at(ix * n + n, y);
        } else {
          const int x = ix * n + k;
          a = image.at(x, image.height - 1 - (iy * n + n - 1));
          b = image.at(x, image.height - 1 - (iy * n + n));
        }
        sum += std::abs(a - b);
      }
      stats.boundaries.push_back({e, m, sum / n});
    }
  }
  double total = 0.0;
  for (const auto& b : stats.boundaries) {
    total += b.mean_abs;
    stats.max = std::max(stats.max, b.mean_abs);
  }
  if (!stats.boundaries.empty()) stats.mean = total / static_cast<double>(stats.boundaries.size());
  return stats;
}

std::string encode_pgm(const HighResImage& image) {
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + image.pixels.size());
  for (std::size_t p = 0; p < image.pixels.size(); ++p) {
    const bool bg = !image.background.empty() && image.background[p];
    const double rho = bg ? 0.0 : std::clamp(image.pixels[p], 0.0, 1.0);
    out[header + p] = static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * (1.0 - rho))));
  }
  return out;
}

void write_pgm(const std::string& path, const HighResImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  const std::string bytes = encode_pgm(image);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

void write_csv(const std::string& path, const HighResImage& image) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  char buf[32];
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      std::snprintf(buf, sizeof buf, "%.17g", image.at(x, y));
      if (x > 0) out << ',';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

HighResImage read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  HighResImage img;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    int count = 0;
    while (std::getline(row, cell, ',')) {
      try {
        img.pixels.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw IoError("malformed value '" + cell + "' in " + path);
      }
      ++count;
    }
    if (img.height == 0) img.width = count;
    if (count != img.width) throw IoError("ragged row in " + path);
    ++img.height;
  }
  img.background.assign(img.pixels.size(), 0);
  return img;
}

}  // namespace twolevel
