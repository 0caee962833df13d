#include "sce/tps.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace sce {

namespace {

// In-place Gaussian elimination with partial pivoting on an n x n system
// with two right-hand sides.
void solve_two(std::vector<double>& a, std::vector<double>& bx, std::vector<double>& by, std::size_t n) {
  double scale = 0.0;
  for (double v : a) scale = std::max(scale, std::abs(v));
  const double eps = 1e-12 * std::max(scale, 1.0);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::abs(a[i * n + k]) > std::abs(a[piv * n + k])) piv = i;
    }
    if (std::abs(a[piv * n + k]) <= eps) {
      throw TpsSingularError("singular thin-plate-spline system (degenerate control grid)");
    }
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a[k * n + j], a[piv * n + j]);
      std::swap(bx[k], bx[piv]);
      std::swap(by[k], by[piv]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a[i * n + k] / a[k * n + k];
      if (f == 0.0) continue;
      for (std::size_t j = k; j < n; ++j) a[i * n + j] -= f * a[k * n + j];
      bx[i] -= f * bx[k];
      by[i] -= f * by[k];
    }
  }
  for (std::size_t k = n; k-- > 0;) {
    double sx = bx[k], sy = by[k];
    for (std::size_t j = k + 1; j < n; ++j) {
      sx -= a[k * n + j] * bx[j];
      sy -= a[k * n + j] * by[j];
    }
    bx[k] = sx / a[k * n + k];
    by[k] = sy / a[k * n + k];
  }
}

double evaluate(const std::vector<Pixel>& centers, const std::vector<double>& coef, Pixel p) {
  const std::size_t n = centers.size();
  double v = coef[n] + coef[n + 1] * p.x + coef[n + 2] * p.y;
  for (std::size_t i = 0; i < n; ++i) v += coef[i] * tps_kernel(std::hypot(p.x - centers[i].x, p.y - centers[i].y));
  return v;
}

}  // namespace

double tps_kernel(double r) { return r > 0.0 ? r * r * std::log(r) : 0.0; }

std::vector<Pixel> control_points(const TpsParams& params) {
  const auto axis = [](std::size_t count, std::size_t extent, std::size_t i) {
    const double span = static_cast<double>(extent) - 1.0;
    if (count == 1) return span / 2.0;
    return span * static_cast<double>(i) / static_cast<double>(count - 1);
  };
  std::vector<Pixel> pts;
  for (std::size_t r = 0; r < params.control_rows; ++r) {
    for (std::size_t c = 0; c < params.control_cols; ++c) {
      pts.push_back({axis(params.control_cols, params.image_w, c), axis(params.control_rows, params.image_h, r)});
    }
  }
  return pts;
}

TpsWarp TpsWarp::fit(const std::vector<Pixel>& source, const std::vector<Pixel>& target, double regularization) {
  if (source.size() != target.size()) throw std::invalid_argument("TPS source/target size mismatch");
  for (const auto& t : target) {
    if (!std::isfinite(t.x) || !std::isfinite(t.y)) throw std::invalid_argument("TPS displacement not finite");
  }
  const std::size_t n = source.size();
  const std::size_t m = n + 3;
  std::vector<double> a(m * m, 0.0), bx(m, 0.0), by(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      a[i * m + j] = tps_kernel(std::hypot(source[i].x - source[j].x, source[i].y - source[j].y));
    }
    a[i * m + i] += regularization;
    const double row[3] = {1.0, source[i].x, source[i].y};
    for (std::size_t k = 0; k < 3; ++k) {
      a[i * m + n + k] = row[k];
      a[(n + k) * m + i] = row[k];
    }
    bx[i] = target[i].x;
    by[i] = target[i].y;
  }
  solve_two(a, bx, by, m);
  TpsWarp w;
  w.centers_ = source;
  w.coef_x_ = std::move(bx);
  w.coef_y_ = std::move(by);
  return w;
}

TpsWarp TpsWarp::fit(const TpsParams& params) {
  const auto src = control_points(params);
  if (params.displacements.size() != src.size()) {
    throw std::invalid_argument("TPS expects " + std::to_string(src.size()) + " displacements, got " +
                                std::to_string(params.displacements.size()));
  }
  std::vector<Pixel> dst(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = {src[i].x + params.displacements[i].x, src[i].y + params.displacements[i].y};
  }
  return fit(src, dst, params.regularization);
}

Pixel TpsWarp::apply(Pixel p) const { return {evaluate(centers_, coef_x_, p), evaluate(centers_, coef_y_, p)}; }

Pixel TpsWarp::invert(Pixel p, int max_iterations, double tolerance) const {
  Pixel s = p;
  for (int it = 0; it < max_iterations; ++it) {
    const Pixel f = apply(s);
    const double ex = p.x - f.x, ey = p.y - f.y;
    s.x += ex;
    s.y += ey;
    if (std::abs(ex) + std::abs(ey) < tolerance) break;
  }
  return s;
}

Pixel clamp_to_image(Pixel p, std::size_t image_h, std::size_t image_w) {
  return {std::clamp(p.x, 0.0, static_cast<double>(image_w) - 1.0),
          std::clamp(p.y, 0.0, static_cast<double>(image_h) - 1.0)};
}

std::vector<Pixel> tps_warp(const std::vector<Pixel>& points, const TpsParams& params) {
  const auto warp = TpsWarp::fit(params);
  std::vector<Pixel> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(clamp_to_image(warp.apply(p), params.image_h, params.image_w));
  return out;
}

TpsParams random_tps(std::size_t image_h, std::size_t image_w, double sigma_fraction, std::uint64_t seed,
                     std::size_t control) {
  TpsParams p;
  p.control_rows = p.control_cols = control;
  p.image_h = image_h;
  p.image_w = image_w;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nx(0.0, sigma_fraction * static_cast<double>(image_w));
  std::normal_distribution<double> ny(0.0, sigma_fraction * static_cast<double>(image_h));
  for (std::size_t i = 0; i < control * control; ++i) {
    const double dx = nx(rng);
    p.displacements.push_back({dx, ny(rng)});
  }
  return p;
}

}  // namespace sce
