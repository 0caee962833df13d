#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "sce/feature_grid.hpp"

namespace sce {

struct TpsParams {
  std::size_t control_rows = 3;
  std::size_t control_cols = 3;
  std::vector<Pixel> displacements;  // control_rows * control_cols, row-major, pixels
  double regularization = 0.0;
  std::size_t image_h = 96;
  std::size_t image_w = 96;
};

class TpsSingularError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Control points spread evenly over [0, w-1] x [0, h-1]; a single row or
/// column sits on the image midline.
std::vector<Pixel> control_points(const TpsParams& params);

/// Solved 2-D thin-plate spline f(p) = a0 + a1 x + a2 y + sum_i w_i U(|p - c_i|),
/// U(r) = r^2 log r.
class TpsWarp {
 public:
  static TpsWarp fit(const std::vector<Pixel>& source, const std::vector<Pixel>& target, double regularization);
  static TpsWarp fit(const TpsParams& params);

  Pixel apply(Pixel p) const;
  /// Fixed-point inverse; adequate for the small deformations used here.
  Pixel invert(Pixel p, int max_iterations = 100, double tolerance = 1e-10) const;

  const std::vector<Pixel>& centers() const { return centers_; }
  // Per-output-axis coefficients: n kernel weights followed by (a0, a1, a2).
  const std::vector<double>& coefficients_x() const { return coef_x_; }
  const std::vector<double>& coefficients_y() const { return coef_y_; }

 private:
  std::vector<Pixel> centers_;
  std::vector<double> coef_x_;
  std::vector<double> coef_y_;
};

double tps_kernel(double r);

/// Warps points through the spline and clamps the result to the image.
std::vector<Pixel> tps_warp(const std::vector<Pixel>& points, const TpsParams& params);

/// Gaussian control displacements with standard deviation sigma_fraction
/// times the image side.
TpsParams random_tps(std::size_t image_h, std::size_t image_w, double sigma_fraction, std::uint64_t seed,
                     std::size_t control = 3);

Pixel clamp_to_image(Pixel p, std::size_t image_h, std::size_t image_w);

}  // namespace sce
