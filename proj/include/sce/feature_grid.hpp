#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sce/matrix.hpp"
#include "sce/tensor.hpp"

namespace sce {

struct GridGeometry {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::size_t patch_size = 0;

  std::size_t token_count() const { return grid_h * grid_w; }
  std::size_t image_h() const { return grid_h * patch_size; }
  std::size_t image_w() const { return grid_w * patch_size; }
  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;
};

/// Continuous pixel coordinate; x is the column, y the row. Pixel centers
/// sit on integers.
struct Pixel {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

struct GridPos {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const GridPos&, const GridPos&) = default;
};

/// Patch tokens laid out row-major over the patch grid: token i sits at
/// grid cell (i / grid_w, i % grid_w).
struct FeatureGrid {
  GridGeometry geometry;
  Matrix features;  // token_count x channels

  std::size_t channels() const { return features.cols(); }
  std::size_t token_count() const { return features.rows(); }
  GridPos position(std::size_t token) const { return {token / geometry.grid_w, token % geometry.grid_w}; }
  std::size_t token_at(GridPos p) const { return p.row * geometry.grid_w + p.col; }
  /// Pixel center of a patch: (c*patch + patch/2 - 0.5, r*patch + patch/2 - 0.5).
  Pixel patch_center(std::size_t token) const;
  /// Patch containing a pixel, clamped to the grid.
  std::size_t token_containing(Pixel p) const;
};

struct DenseFeatureMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> values;  // (y * width + x) * channels + c

  std::span<const double> at(std::size_t x, std::size_t y) const {
    return {values.data() + (y * width + x) * channels, channels};
  }
  std::span<double> at(std::size_t x, std::size_t y) {
    return {values.data() + (y * width + x) * channels, channels};
  }
};

/// Accepts either an N x d tensor or an H_p x W_p x d tensor whose leading
/// dims must agree with `geometry`.
FeatureGrid assemble_feature_grid(const Tensor& tokens, const GridGeometry& geometry);

/// Bilinear interpolation anchored at patch centers; pixels outside the hull
/// of centers take the nearest edge value.
DenseFeatureMap bilinear_upsample(const FeatureGrid& grid, std::size_t target_h, std::size_t target_w);

/// Same interpolation evaluated at a single continuous pixel.
std::vector<double> sample_bilinear(const FeatureGrid& grid, Pixel p);

}  // namespace sce
