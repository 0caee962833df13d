#include "sce/regressor.hpp"

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace sce {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// N x 9C patch matrix of a grid; taps outside the grid are zero.
RowMatrix im2col(const FeatureGrid& g) {
  const std::size_t h = g.geometry.grid_h, w = g.geometry.grid_w, c = g.channels();
  RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(h * w), static_cast<Eigen::Index>(9 * c));
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t q = 0; q < w; ++q) {
      const auto row = static_cast<Eigen::Index>(r * w + q);
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const long sr = static_cast<long>(r) + ky - 1, sq = static_cast<long>(q) + kx - 1;
          if (sr < 0 || sq < 0 || sr >= static_cast<long>(h) || sq >= static_cast<long>(w)) continue;
          const auto src = g.features.row(static_cast<std::size_t>(sr) * w + static_cast<std::size_t>(sq));
          const auto base = static_cast<Eigen::Index>((ky * 3 + kx) * c);
          for (std::size_t k = 0; k < c; ++k) cols(row, base + static_cast<Eigen::Index>(k)) = src[k];
        }
      }
    }
  }
  return cols;
}

Eigen::Map<const RowMatrix> view(const Matrix& m) {
  return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}
Eigen::Map<RowMatrix> view(Matrix& m) {
  return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

struct Decoded {
  RowMatrix probs;           // N x (L*I) softmax weights per heatmap
  std::vector<double> xs;    // per heatmap
  std::vector<double> ys;
  std::vector<Pixel> out;    // per landmark
};

Decoded decode(const RegressorParams& p, const RowMatrix& heat, std::size_t grid_w) {
  const std::size_t n = static_cast<std::size_t>(heat.rows()), m = p.landmarks * p.heatmaps;
  Decoded d{RowMatrix(heat.rows(), heat.cols()), std::vector<double>(m), std::vector<double>(m), {}};
  for (std::size_t j = 0; j < m; ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    const double mx = heat.col(col).maxCoeff();
    double z = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double e = std::exp((heat(static_cast<Eigen::Index>(k), col) - mx) / p.temperature);
      d.probs(static_cast<Eigen::Index>(k), col) = e;
      z += e;
      sx += e * static_cast<double>(k % grid_w);
      sy += e * static_cast<double>(k / grid_w);
    }
    d.probs.col(col) /= z;
    d.xs[j] = sx / z;
    d.ys[j] = sy / z;
  }
  for (std::size_t l = 0; l < p.landmarks; ++l) {
    double ox = p.head_bias[2 * l], oy = p.head_bias[2 * l + 1];
    for (std::size_t i = 0; i < p.heatmaps; ++i) {
      const std::size_t j = l * p.heatmaps + i;
      ox += p.head_weight(2 * l, 2 * i) * d.xs[j] + p.head_weight(2 * l, 2 * i + 1) * d.ys[j];
      oy += p.head_weight(2 * l + 1, 2 * i) * d.xs[j] + p.head_weight(2 * l + 1, 2 * i + 1) * d.ys[j];
    }
    d.out.push_back({ox, oy});
  }
  return d;
}

RowMatrix heat_from_cols(const RegressorParams& p, const RowMatrix& cols) {
  RowMatrix heat = cols * view(p.conv_weight);
  const Eigen::Map<const Eigen::RowVectorXd> bias(p.conv_bias.data(), static_cast<Eigen::Index>(p.conv_bias.size()));
  heat.rowwise() += bias;
  return heat;
}

void check_params(const RegressorParams& p, std::size_t channels) {
  const std::size_t m = p.landmarks * p.heatmaps;
  if (p.in_channels != channels || p.conv_weight.rows() != 9 * channels || p.conv_weight.cols() != m ||
      p.conv_bias.size() != m || p.head_weight.rows() != 2 * p.landmarks || p.head_weight.cols() != 2 * p.heatmaps ||
      p.head_bias.size() != 2 * p.landmarks) {
    throw std::invalid_argument("regressor parameters do not match the input features");
  }
  if (!(p.temperature > 0.0)) throw std::invalid_argument("regressor temperature must be > 0");
}

}  // namespace

RegressorParams RegressorParams::initialize(std::size_t landmarks, std::size_t heatmaps, std::size_t in_channels,
                                            std::size_t patch_size, double temperature, std::uint64_t seed) {
  if (landmarks < 1 || heatmaps < 1 || in_channels < 1) throw std::invalid_argument("regressor dims must be >= 1");
  RegressorParams p;
  p.landmarks = landmarks;
  p.heatmaps = heatmaps;
  p.in_channels = in_channels;
  p.temperature = temperature;
  p.conv_weight = Matrix(9 * in_channels, landmarks * heatmaps);
  p.conv_bias.assign(landmarks * heatmaps, 0.0);
  std::mt19937_64 rng(mix_seed(seed, 0x72656772));
  const double bound = 1.0 / std::sqrt(static_cast<double>(9 * in_channels));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& w : p.conv_weight.data()) w = u(rng);

  const double ps = static_cast<double>(patch_size);
  p.head_weight = Matrix(2 * landmarks, 2 * heatmaps);
  p.head_bias.assign(2 * landmarks, ps / 2.0 - 0.5);
  for (std::size_t l = 0; l < landmarks; ++l) {
    for (std::size_t i = 0; i < heatmaps; ++i) {
      p.head_weight(2 * l, 2 * i) = ps / static_cast<double>(heatmaps);
      p.head_weight(2 * l + 1, 2 * i + 1) = ps / static_cast<double>(heatmaps);
    }
  }
  return p;
}

std::uint64_t RegressorParams::checksum() const {
  Fnv1a h;
  h.update_u64(landmarks);
  h.update_u64(heatmaps);
  h.update_u64(in_channels);
  h.update_doubles(std::vector<double>{temperature});
  h.update_doubles(conv_weight.data());
  h.update_doubles(conv_bias);
  h.update_doubles(head_weight.data());
  h.update_doubles(head_bias);
  return h.digest();
}

FeatureGrid concat_channels(const FeatureGrid& a, const FeatureGrid& b) {
  if (a.geometry != b.geometry) throw std::invalid_argument("concat_channels: geometry mismatch");
  FeatureGrid out{a.geometry, Matrix(a.token_count(), a.channels() + b.channels())};
  for (std::size_t t = 0; t < a.token_count(); ++t) {
    auto dst = out.features.row(t);
    const auto ra = a.features.row(t), rb = b.features.row(t);
    std::copy(ra.begin(), ra.end(), dst.begin());
    std::copy(rb.begin(), rb.end(), dst.begin() + static_cast<std::ptrdiff_t>(ra.size()));
  }
  return out;
}

Matrix regressor_heatmaps(const RegressorParams& params, const FeatureGrid& input) {
  check_params(params, input.channels());
  const RowMatrix heat = heat_from_cols(params, im2col(input));
  Matrix out(static_cast<std::size_t>(heat.rows()), static_cast<std::size_t>(heat.cols()));
  view(out) = heat;
  return out;
}

std::vector<Pixel> regressor_forward(const RegressorParams& params, const FeatureGrid& stage1, const FeatureGrid& stage2) {
  const FeatureGrid input = concat_channels(stage1, stage2);
  check_params(params, input.channels());
  return decode(params, heat_from_cols(params, im2col(input)), input.geometry.grid_w).out;
}

void RegressorTrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("regressor learning rate must be > 0");
  if (heatmaps < 1) throw std::invalid_argument("heatmap count must be >= 1");
  if (!(temperature > 0.0)) throw std::invalid_argument("soft-argmax temperature must be > 0");
}

std::vector<Pixel> mean_landmark_positions(std::span<const AnnotatedSample> samples) {
  if (samples.empty()) throw std::invalid_argument("mean_landmark_positions: no samples");
  std::vector<Pixel> mean(samples.front().landmarks.size());
  for (const auto& s : samples) {
    for (std::size_t l = 0; l < mean.size(); ++l) {
      mean[l].x += s.landmarks[l].x;
      mean[l].y += s.landmarks[l].y;
    }
  }
  for (auto& m : mean) {
    m.x /= static_cast<double>(samples.size());
    m.y /= static_cast<double>(samples.size());
  }
  return mean;
}

RegressorResult train_regressor(std::span<const AnnotatedSample> samples, const Projector& projector,
                                const RegressorTrainConfig& cfg) {
  cfg.validate();
  if (samples.empty()) throw std::invalid_argument("train_regressor: need at least one annotated sample");
  const auto t0 = std::chrono::steady_clock::now();

  const auto& geo = samples.front().backbone->main.geometry;
  std::vector<RowMatrix> cols;
  for (const auto& s : samples) {
    const auto& b = *s.backbone;
    cols.push_back(im2col(concat_channels(b.main, project(projector, b.main))));
  }
  const std::size_t L = samples.front().landmarks.size(), I = cfg.heatmaps;
  const std::size_t channels = static_cast<std::size_t>(cols.front().cols()) / 9;
  const std::size_t n = geo.token_count(), w = geo.grid_w;

  RegressorResult r{RegressorParams::initialize(L, I, channels, geo.patch_size, cfg.temperature, cfg.seed), {}};
  RegressorParams& p = r.params;
  const double mu = cfg.optimizer == Optimizer::momentum ? 0.9 : 0.0;
  RowMatrix vel_conv = RowMatrix::Zero(static_cast<Eigen::Index>(9 * channels), static_cast<Eigen::Index>(L * I));
  std::vector<double> vel_cb(L * I, 0.0), vel_hb(2 * L, 0.0);
  Matrix vel_hw(2 * L, 2 * I);
  const double scale = 1.0 / static_cast<double>(samples.size() * L);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    RowMatrix g_conv = RowMatrix::Zero(vel_conv.rows(), vel_conv.cols());
    std::vector<double> g_cb(L * I, 0.0), g_hb(2 * L, 0.0), losses;
    Matrix g_hw(2 * L, 2 * I);

    for (std::size_t s = 0; s < samples.size(); ++s) {
      const RowMatrix heat = heat_from_cols(p, cols[s]);
      const Decoded d = decode(p, heat, w);
      RowMatrix g_heat(heat.rows(), heat.cols());
      for (std::size_t l = 0; l < L; ++l) {
        const double ex = d.out[l].x - samples[s].landmarks[l].x;
        const double ey = d.out[l].y - samples[s].landmarks[l].y;
        losses.push_back(ex * ex + ey * ey);
        const double gx = 2.0 * ex * scale, gy = 2.0 * ey * scale;
        g_hb[2 * l] += gx;
        g_hb[2 * l + 1] += gy;
        for (std::size_t i = 0; i < I; ++i) {
          const std::size_t j = l * I + i;
          g_hw(2 * l, 2 * i) += gx * d.xs[j];
          g_hw(2 * l, 2 * i + 1) += gx * d.ys[j];
          g_hw(2 * l + 1, 2 * i) += gy * d.xs[j];
          g_hw(2 * l + 1, 2 * i + 1) += gy * d.ys[j];
          // Back through the head, then through the soft-argmax expectation.
          const double dx = gx * p.head_weight(2 * l, 2 * i) + gy * p.head_weight(2 * l + 1, 2 * i);
          const double dy = gx * p.head_weight(2 * l, 2 * i + 1) + gy * p.head_weight(2 * l + 1, 2 * i + 1);
          const auto col = static_cast<Eigen::Index>(j);
          double bias_grad = 0.0;
          for (std::size_t k = 0; k < n; ++k) {
            const double pk = d.probs(static_cast<Eigen::Index>(k), col);
            const double v = pk * (dx * (static_cast<double>(k % w) - d.xs[j]) + dy * (static_cast<double>(k / w) - d.ys[j])) /
                             p.temperature;
            g_heat(static_cast<Eigen::Index>(k), col) = v;
            bias_grad += v;
          }
          g_cb[j] += bias_grad;
        }
      }
      g_conv.noalias() += cols[s].transpose() * g_heat;
    }

    const double mse = pairwise_sum(losses) / static_cast<double>(losses.size());
    if (!std::isfinite(mse)) throw DivergenceError(step, "non-finite regressor loss");
    r.trace.loss.push_back(mse);

    auto conv = view(p.conv_weight);
    vel_conv = mu * vel_conv + g_conv;
    conv -= cfg.learning_rate * vel_conv;
    const auto update = [&](std::vector<double>& param, std::vector<double>& vel, const std::vector<double>& g) {
      for (std::size_t i = 0; i < param.size(); ++i) {
        vel[i] = mu * vel[i] + g[i];
        param[i] -= cfg.learning_rate * vel[i];
      }
    };
    update(p.conv_bias, vel_cb, g_cb);
    update(p.head_bias, vel_hb, g_hb);
    update(p.head_weight.data(), vel_hw.data(), g_hw.data());
  }
  r.trace.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.trace.checksum = p.checksum();
  return r;
}

std::vector<std::vector<Pixel>> predict_landmarks(const RegressorParams& params, const Projector& projector,
                                                  std::span<const AnnotatedSample> samples) {
  std::vector<std::vector<Pixel>> out;
  for (const auto& s : samples) out.push_back(regressor_forward(params, s.backbone->main, project(projector, s.backbone->main)));
  return out;
}

}  // namespace sce
