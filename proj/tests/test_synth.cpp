#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <set>

#include "sce/partition.hpp"
#include "sce/synth.hpp"
#include "sce/tps.hpp"

using namespace sce;

namespace {

// Dense solve of [K P; P^T 0][w; a] = [v; 0] evaluated at one point.
Pixel tps_oracle(const std::vector<Pixel>& src, const std::vector<Pixel>& dst, Pixel p) {
  const int n = static_cast<int>(src.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n + 3, n + 3);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + 3, 2);
  const auto u = [](double r2) { return r2 == 0.0 ? 0.0 : 0.5 * r2 * std::log(r2); };
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double dx = src[i].x - src[j].x, dy = src[i].y - src[j].y;
      A(i, j) = u(dx * dx + dy * dy);
    }
    A(i, n) = A(n, i) = 1.0;
    A(i, n + 1) = A(n + 1, i) = src[i].x;
    A(i, n + 2) = A(n + 2, i) = src[i].y;
    rhs(i, 0) = dst[i].x;
    rhs(i, 1) = dst[i].y;
  }
  const Eigen::MatrixXd sol = A.fullPivLu().solve(rhs);
  Pixel out{sol(n, 0) + sol(n + 1, 0) * p.x + sol(n + 2, 0) * p.y, sol(n, 1) + sol(n + 1, 1) * p.x + sol(n + 2, 1) * p.y};
  for (int i = 0; i < n; ++i) {
    const double dx = p.x - src[i].x, dy = p.y - src[i].y;
    out.x += sol(i, 0) * u(dx * dx + dy * dy);
    out.y += sol(i, 1) * u(dx * dx + dy * dy);
  }
  return out;
}

std::vector<double> logits(const BackboneOutput& b) {
  std::vector<double> out(b.keys.rows());
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = dot(b.keys.row(t), b.cls_query);
  return out;
}

}  // namespace

TEST_CASE("zero displacements give the identity warp") {
  TpsParams p;
  p.displacements.assign(9, Pixel{0.0, 0.0});
  const auto out = tps_warp({{10.0, 20.0}, {0.0, 0.0}, {95.0, 50.5}}, p);
  CHECK(out[0].x == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(out[0].y == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(out[2].x == doctest::Approx(95.0).epsilon(1e-12));
}

TEST_CASE("equal displacements translate every point") {
  TpsParams p;
  p.displacements.assign(9, Pixel{2.5, -1.25});
  const TpsWarp w = TpsWarp::fit(p);
  for (Pixel q : {Pixel{10, 20}, Pixel{47.5, 47.5}, Pixel{80, 3}}) {
    const Pixel r = w.apply(q);
    CHECK(r.x == doctest::Approx(q.x + 2.5).epsilon(1e-10));
    CHECK(r.y == doctest::Approx(q.y - 1.25).epsilon(1e-10));
  }
}

TEST_CASE("random warps match a dense linear solve") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const TpsParams p = random_tps(96, 96, 0.05, seed);
    const TpsWarp w = TpsWarp::fit(p);
    const auto src = control_points(p);
    std::vector<Pixel> dst;
    for (std::size_t i = 0; i < src.size(); ++i) dst.push_back({src[i].x + p.displacements[i].x, src[i].y + p.displacements[i].y});
    for (Pixel q : {Pixel{5, 7}, Pixel{33.3, 61.2}, Pixel{90, 90}, src[4]}) {
      const Pixel a = w.apply(q), b = tps_oracle(src, dst, q);
      CHECK(a.x == doctest::Approx(b.x).epsilon(1e-9));
      CHECK(a.y == doctest::Approx(b.y).epsilon(1e-9));
    }
    // The spline interpolates its control points and inverts them.
    for (std::size_t i = 0; i < src.size(); ++i) {
      CHECK(w.apply(src[i]).x == doctest::Approx(dst[i].x).epsilon(1e-9));
      const Pixel back = w.invert(dst[i]);
      CHECK(back.x == doctest::Approx(src[i].x).epsilon(1e-7));
      CHECK(back.y == doctest::Approx(src[i].y).epsilon(1e-7));
    }
  }
}

TEST_CASE("degenerate control grids are singular") {
  const std::vector<Pixel> line = {{0, 0}, {1, 1}, {2, 2}, {3, 3}};
  CHECK_THROWS_AS(TpsWarp::fit(line, line, 0.0), TpsSingularError);
}

TEST_CASE("warped points are clamped to the image") {
  TpsParams p;
  p.displacements.assign(9, Pixel{50.0, 0.0});
  const auto out = tps_warp({{80.0, 10.0}}, p);
  CHECK(out[0].x == 95.0);
}

TEST_CASE("generator is deterministic") {
  const auto spec = default_face_spec();
  Fnv1a a, b;
  hash_sample(generate_sample(spec, 11), a);
  hash_sample(generate_sample(spec, 11), b);
  CHECK(a.digest() == b.digest());
  Fnv1a c;
  hash_sample(generate_sample(spec, 12), c);
  CHECK(a.digest() != c.digest());
}

TEST_CASE("default face layout") {
  const auto spec = default_face_spec();
  CHECK(spec.geometry.image_h() == 96);
  CHECK(spec.landmarks.size() == 5);
  CHECK(landmark_tokens(spec).size() == 5);
  const auto b = generate_backbone_output(spec, 1);
  CHECK(b.keys.rows() == 144);
  CHECK(b.cls_query.size() == b.main.channels());
  // Rescaled layouts keep their landmarks inside the image.
  const auto small = default_face_spec(GridGeometry{6, 6, 8});
  CHECK_NOTHROW(small.validate());
  CHECK(small.landmarks[0].x < 48.0);
}

TEST_CASE("noise-free landmarks out-score every other token") {
  auto spec = default_face_spec();
  spec.sigma_landmark = spec.sigma_background = 0.0;
  const auto lm = landmark_tokens(spec);
  const std::set<std::size_t> lms(lm.begin(), lm.end());
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto l = logits(generate_backbone_output(spec, seed));
    double lo = 1e300, hi = -1e300;
    for (std::size_t t = 0; t < l.size(); ++t) {
      if (lms.count(t)) {
        lo = std::min(lo, l[t]);
      } else {
        hi = std::max(hi, l[t]);
      }
    }
    CHECK(lo > hi);
  }
}

TEST_CASE("noise-free tokens take one value per region and landmark") {
  auto spec = default_face_spec();
  spec.sigma_landmark = spec.sigma_background = 0.0;
  const auto b = generate_backbone_output(spec, 5);
  std::set<std::vector<double>> distinct;
  for (std::size_t t = 0; t < b.main.token_count(); ++t) {
    const auto r = b.main.features.row(t);
    distinct.insert({r.begin(), r.end()});
  }
  CHECK(distinct.size() == spec.region_count + spec.landmarks.size());
}

TEST_CASE("landmark keys are boosted by beta along the query") {
  const auto spec = default_face_spec();
  const auto lm = landmark_tokens(spec);
  const std::set<std::size_t> lms(lm.begin(), lm.end());
  std::vector<double> diffs;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto l = logits(generate_backbone_output(spec, seed));
    double s_lm = 0.0, s_bg = 0.0;
    for (std::size_t t = 0; t < l.size(); ++t) (lms.count(t) ? s_lm : s_bg) += l[t];
    diffs.push_back(s_lm / lms.size() - s_bg / (l.size() - lms.size()));
  }
  double mean = 0.0, var = 0.0;
  for (double d : diffs) mean += d / diffs.size();
  for (double d : diffs) var += (d - mean) * (d - mean) / (diffs.size() - 1);
  CHECK(std::abs(mean - spec.beta) <= 3.0 * std::sqrt(var / diffs.size()) + 1e-12);
}

TEST_CASE("top-eta split recovers planted landmark patches") {
  const auto spec = default_face_spec();
  const auto lm = landmark_tokens(spec);
  std::size_t found = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 64; ++seed) {
    const auto b = generate_backbone_output(spec, seed);
    const auto part = split_tokens(cls_similarity(b.cls_query, b.keys), 0.25);
    const std::set<std::size_t> att(part.attentive.begin(), part.attentive.end());
    for (auto t : lm) found += att.count(t);
    total += lm.size();
  }
  CHECK(static_cast<double>(found) / total >= 0.95);
}

TEST_CASE("pairs") {
  const auto spec = default_face_spec();
  SUBCASE("same identity without deformation keeps landmarks") {
    const auto p = make_pair(spec, PairKind::same, 3, 0.0);
    CHECK(p.reference.landmarks == p.test.landmarks);
    CHECK(p.reference.identity_seed == p.test.identity_seed);
  }
  SUBCASE("different identity draws a fresh identity") {
    const auto p = make_pair(spec, PairKind::different, 3);
    CHECK(p.reference.identity_seed != p.test.identity_seed);
    CHECK(p.reference.landmarks.size() == p.test.landmarks.size());
  }
  SUBCASE("batch hash is pinned") {
    const auto batch = make_pair_batch(spec, 500, 500, 2024);
    REQUIRE(batch.size() == 1000);
    CHECK(batch[499].kind == PairKind::same);
    CHECK(batch[500].kind == PairKind::different);
    CHECK(hex64(hash_pairs(batch)) == "cd453144bb4e2b1f");
  }
}
