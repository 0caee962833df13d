#include "sce/feature_grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sce {

namespace {

struct Lerp {
  std::size_t lo = 0;
  std::size_t hi = 0;
  double t = 0.0;
};

// Continuous grid coordinate -> bracketing cells, clamped at the borders.
Lerp bracket(double g, std::size_t cells) {
  const double clamped = std::clamp(g, 0.0, static_cast<double>(cells - 1));
  Lerp l;
  l.lo = static_cast<std::size_t>(std::floor(clamped));
  l.hi = std::min(l.lo + 1, cells - 1);
  l.t = clamped - static_cast<double>(l.lo);
  return l;
}

void blend(const FeatureGrid& grid, const Lerp& ly, const Lerp& lx, std::span<double> out) {
  const std::size_t w = grid.geometry.grid_w;
  const auto a = grid.features.row(ly.lo * w + lx.lo);
  const auto b = grid.features.row(ly.lo * w + lx.hi);
  const auto c = grid.features.row(ly.hi * w + lx.lo);
  const auto d = grid.features.row(ly.hi * w + lx.hi);
  const double wa = (1 - ly.t) * (1 - lx.t), wb = (1 - ly.t) * lx.t;
  const double wc = ly.t * (1 - lx.t), wd = ly.t * lx.t;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = wa * a[k] + wb * b[k] + wc * c[k] + wd * d[k];
}

}  // namespace

Pixel FeatureGrid::patch_center(std::size_t token) const {
  const auto p = position(token);
  const double half = static_cast<double>(geometry.patch_size) / 2.0 - 0.5;
  return {static_cast<double>(p.col * geometry.patch_size) + half,
          static_cast<double>(p.row * geometry.patch_size) + half};
}

std::size_t FeatureGrid::token_containing(Pixel p) const {
  const double ps = static_cast<double>(geometry.patch_size);
  const auto cell = [ps](double v, std::size_t n) {
    const double c = std::floor((v + 0.5) / ps);
    return static_cast<std::size_t>(std::clamp(c, 0.0, static_cast<double>(n - 1)));
  };
  return token_at({cell(p.y, geometry.grid_h), cell(p.x, geometry.grid_w)});
}

FeatureGrid assemble_feature_grid(const Tensor& tokens, const GridGeometry& geometry) {
  tokens.validate();
  if (geometry.grid_h == 0 || geometry.grid_w == 0 || geometry.patch_size == 0) {
    throw std::invalid_argument("grid geometry must be positive");
  }
  if (tokens.rank() == 3 && (tokens.dims[0] != geometry.grid_h || tokens.dims[1] != geometry.grid_w)) {
    throw std::invalid_argument("token tensor grid " + std::to_string(tokens.dims[0]) + "x" +
                                std::to_string(tokens.dims[1]) + " does not match geometry");
  }
  if (tokens.rank() != 2 && tokens.rank() != 3) throw std::invalid_argument("token tensor must be rank 2 or 3");
  FeatureGrid g{geometry, tokens.to_matrix()};
  if (g.features.rows() != geometry.token_count()) {
    throw std::invalid_argument(std::to_string(g.features.rows()) + " tokens cannot fill a " +
                                std::to_string(geometry.grid_h) + "x" + std::to_string(geometry.grid_w) + " grid");
  }
  return g;
}

DenseFeatureMap bilinear_upsample(const FeatureGrid& grid, std::size_t target_h, std::size_t target_w) {
  const auto& geo = grid.geometry;
  if (target_h < geo.grid_h || target_w < geo.grid_w) {
    throw std::invalid_argument("upsample target smaller than the patch grid");
  }
  DenseFeatureMap out{target_h, target_w, grid.channels(), {}};
  out.values.resize(target_h * target_w * grid.channels());
  const double sy = static_cast<double>(geo.grid_h) / static_cast<double>(target_h);
  const double sx = static_cast<double>(geo.grid_w) / static_cast<double>(target_w);
  std::vector<Lerp> xs(target_w);
  for (std::size_t x = 0; x < target_w; ++x) xs[x] = bracket((static_cast<double>(x) + 0.5) * sx - 0.5, geo.grid_w);
  for (std::size_t y = 0; y < target_h; ++y) {
    const Lerp ly = bracket((static_cast<double>(y) + 0.5) * sy - 0.5, geo.grid_h);
    for (std::size_t x = 0; x < target_w; ++x) blend(grid, ly, xs[x], out.at(x, y));
  }
  return out;
}

std::vector<double> sample_bilinear(const FeatureGrid& grid, Pixel p) {
  const double ps = static_cast<double>(grid.geometry.patch_size);
  std::vector<double> out(grid.channels());
  blend(grid, bracket((p.y + 0.5) / ps - 0.5, grid.geometry.grid_h), bracket((p.x + 0.5) / ps - 0.5, grid.geometry.grid_w),
        out);
  return out;
}

}  // namespace sce
