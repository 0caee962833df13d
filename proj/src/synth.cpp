#include "sce/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>
#include <string>

#include "sce/tensor.hpp"

namespace sce {

namespace {

using Rng = std::mt19937_64;

// Seed streams; fixed so that outputs stay reproducible across versions.
enum Stream : std::uint64_t {
  kClassMeans = 1,
  kIdentity = 2,
  kImage = 3,
  kPairTps = 10,
  kPairRefNoise = 11,
  kPairTestNoise = 12,
  kPairIdentity = 13,
  kBatchJitter = 20,
};

std::vector<double> gaussian(Rng& rng, std::size_t n, double sigma) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = sigma * nd(rng);
  return v;
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

// Orthonormalizes `count` Gaussian vectors against `against` and each other.
std::vector<std::vector<double>> orthonormal_set(Rng& rng, std::size_t dim, std::size_t count,
                                                 const std::vector<std::vector<double>>& against) {
  std::vector<std::vector<double>> basis = against;
  std::vector<std::vector<double>> out;
  while (out.size() < count) {
    auto v = gaussian(rng, dim, 1.0);
    for (const auto& b : basis) axpy(-dot(v, b), b, v);
    const double n = norm(v);
    if (n < 1e-8) continue;
    for (auto& x : v) x /= n;
    basis.push_back(v);
    out.push_back(std::move(v));
  }
  return out;
}

// Class-level quantities shared by every identity.
struct ClassModel {
  std::vector<std::vector<double>> landmark_means;
  std::vector<std::vector<double>> region_means;
  std::vector<std::vector<double>> landmark_aux;
  std::vector<std::vector<double>> region_aux;
  std::vector<std::vector<double>> landmark_keys;
  std::vector<std::vector<double>> region_keys;
  std::vector<std::vector<double>> global_basis;
  std::vector<double> cls_query;
};

ClassModel build_class_model(const SyntheticFaceSpec& spec) {
  Rng rng(mix_seed(spec.prototype_seed, kClassMeans));
  const std::size_t d = spec.channels, da = spec.aux_channels;
  const std::size_t L = spec.landmarks.size();
  ClassModel m;
  m.cls_query = orthonormal_set(rng, d, 1, {}).front();

  std::size_t groups = 0;
  for (auto g : spec.landmark_groups) groups = std::max(groups, g + 1);
  std::vector<std::vector<double>> group_means;
  for (std::size_t g = 0; g < groups; ++g) group_means.push_back(gaussian(rng, d, 1.0));
  for (std::size_t l = 0; l < L; ++l) {
    auto v = gaussian(rng, d, spec.group_spread);
    axpy(1.0, group_means[spec.landmark_groups[l]], v);
    m.landmark_means.push_back(std::move(v));
  }
  for (std::size_t r = 0; r < spec.region_count; ++r) m.region_means.push_back(gaussian(rng, d, 1.0));
  for (std::size_t l = 0; l < L; ++l) m.landmark_aux.push_back(gaussian(rng, da, spec.aux_scale));
  for (std::size_t r = 0; r < spec.region_count; ++r) m.region_aux.push_back(gaussian(rng, da, spec.aux_scale));

  // Key prototypes live in the complement of the CLS query, so the query
  // logit of a key row is exactly its boost plus noise.
  const auto project_out_query = [&](std::vector<double> v) {
    axpy(-dot(v, m.cls_query), m.cls_query, v);
    return v;
  };
  for (std::size_t l = 0; l < L; ++l) m.landmark_keys.push_back(project_out_query(gaussian(rng, d, 1.0)));
  for (std::size_t r = 0; r < spec.region_count; ++r) m.region_keys.push_back(project_out_query(gaussian(rng, d, 1.0)));

  m.global_basis = orthonormal_set(rng, d, std::min(spec.global_rank, d), {});
  return m;
}

// Identity-level prototypes perturbed around the class means.
struct IdentityModel {
  std::vector<std::vector<double>> landmark_protos;
  std::vector<std::vector<double>> region_protos;
  std::vector<std::vector<double>> landmark_aux;
  std::vector<std::vector<double>> region_aux;
};

IdentityModel build_identity(const SyntheticFaceSpec& spec, const ClassModel& m) {
  Rng rng(mix_seed(spec.identity_seed, kIdentity) ^ spec.prototype_seed);
  const auto perturb = [&](const std::vector<std::vector<double>>& means, double sigma) {
    std::vector<std::vector<double>> out;
    for (const auto& mu : means) {
      auto v = gaussian(rng, mu.size(), sigma);
      axpy(1.0, mu, v);
      out.push_back(std::move(v));
    }
    return out;
  };
  IdentityModel id;
  id.landmark_protos = perturb(m.landmark_means, spec.sigma_identity);
  id.region_protos = perturb(m.region_means, spec.sigma_identity);
  id.landmark_aux = perturb(m.landmark_aux, spec.sigma_identity * spec.aux_scale * 0.25);
  id.region_aux = perturb(m.region_aux, spec.sigma_identity * spec.aux_scale * 0.25);
  return id;
}

// Landmark index owning each token, or -1. The lowest landmark index wins
// when two landmarks share a patch.
std::vector<long> landmark_owner(const SyntheticFaceSpec& spec) {
  const FeatureGrid probe{spec.geometry, Matrix(spec.geometry.token_count(), 1)};
  std::vector<long> owner(spec.geometry.token_count(), -1);
  for (std::size_t l = spec.landmarks.size(); l-- > 0;) {
    owner[probe.token_containing(spec.landmarks[l])] = static_cast<long>(l);
  }
  return owner;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void SyntheticFaceSpec::validate() const {
  const auto& g = geometry;
  if (g.grid_h == 0 || g.grid_w == 0 || g.patch_size == 0) throw std::invalid_argument("empty geometry");
  if (landmarks.size() < 2) throw std::invalid_argument("at least two landmarks are required");
  if (landmark_groups.size() != landmarks.size()) throw std::invalid_argument("landmark_groups size mismatch");
  for (const auto& p : landmarks) {
    if (!(p.x >= 0.0 && p.y >= 0.0 && p.x <= static_cast<double>(g.image_w()) - 1.0 &&
          p.y <= static_cast<double>(g.image_h()) - 1.0)) {
      throw std::invalid_argument("landmark outside the image");
    }
  }
  if (region_layout.size() != g.token_count()) throw std::invalid_argument("region layout size mismatch");
  for (auto r : region_layout) {
    if (r >= region_count) throw std::invalid_argument("region id out of range");
  }
  if (left_eye >= landmarks.size() || right_eye >= landmarks.size() || left_eye == right_eye) {
    throw std::invalid_argument("invalid eye landmark indices");
  }
  if (channels < 1 || aux_channels < 1) throw std::invalid_argument("channel counts must be positive");
  for (double s : {sigma_landmark, sigma_background, sigma_aux, sigma_global, sigma_identity, group_spread, aux_scale}) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw std::invalid_argument("noise scales must be finite and >= 0");
  }
}

SyntheticFaceSpec default_face_spec() { return default_face_spec(GridGeometry{12, 12, 8}); }

SyntheticFaceSpec default_face_spec(const GridGeometry& geometry) {
  SyntheticFaceSpec s;
  s.geometry = geometry;
  // Layout drawn on a 96 x 96 canvas, rescaled to the image size.
  const double sx = static_cast<double>(geometry.image_w()) / 96.0, sy = static_cast<double>(geometry.image_h()) / 96.0;
  const auto at = [&](double x, double y) { return Pixel{(x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5}; };
  s.landmarks = {at(34.0, 38.0), at(61.0, 38.0), at(47.5, 54.0), at(37.0, 70.0), at(58.0, 70.0)};
  s.landmark_groups = {0, 0, 1, 2, 2};
  s.region_count = 5;
  const FeatureGrid probe{s.geometry, Matrix(s.geometry.token_count(), 1)};
  s.region_layout.resize(s.geometry.token_count());
  for (std::size_t t = 0; t < s.geometry.token_count(); ++t) {
    const Pixel p = probe.patch_center(t);
    const Pixel c{(p.x + 0.5) / sx - 0.5, (p.y + 0.5) / sy - 0.5};
    const double ex = (c.x - 47.5) / 38.0, ey = (c.y - 50.0) / 46.0;
    std::uint32_t region;
    if (ex * ex + ey * ey > 1.0) {
      region = 0;  // background
    } else if (c.y < 30.0) {
      region = 1;  // forehead
    } else if (c.y > 78.0) {
      region = 4;  // chin
    } else {
      region = c.x < 47.5 ? 2 : 3;  // cheeks
    }
    s.region_layout[t] = region;
  }
  return s;
}

std::vector<std::size_t> landmark_tokens(const SyntheticFaceSpec& spec) {
  const FeatureGrid probe{spec.geometry, Matrix(spec.geometry.token_count(), 1)};
  std::set<std::size_t> s;
  for (const auto& p : spec.landmarks) s.insert(probe.token_containing(p));
  return {s.begin(), s.end()};
}

BackboneOutput generate_backbone_output(const SyntheticFaceSpec& spec, std::uint64_t seed) {
  spec.validate();
  const ClassModel cm = build_class_model(spec);
  const IdentityModel id = build_identity(spec, cm);
  const std::size_t n = spec.geometry.token_count(), d = spec.channels, da = spec.aux_channels;
  const auto owner = landmark_owner(spec);

  Rng rng(mix_seed(seed, kImage));
  std::normal_distribution<double> nd(0.0, 1.0);

  std::vector<double> offset(d, 0.0);
  for (const auto& b : cm.global_basis) axpy(spec.sigma_global * nd(rng), b, offset);

  BackboneOutput out;
  out.main = FeatureGrid{spec.geometry, Matrix(n, d)};
  out.aux = FeatureGrid{spec.geometry, Matrix(n, da)};
  out.keys = Matrix(n, d);
  out.cls_query = cm.cls_query;

  const double aux_noise = spec.sigma_aux * static_cast<double>(spec.aux_layer + 1) / 4.0;
  for (std::size_t t = 0; t < n; ++t) {
    const bool is_landmark = owner[t] >= 0;
    const auto cls = is_landmark ? static_cast<std::size_t>(owner[t]) : spec.region_layout[t];
    const auto& proto = is_landmark ? id.landmark_protos[cls] : id.region_protos[cls];
    const auto& aux = is_landmark ? id.landmark_aux[cls] : id.region_aux[cls];
    const auto& key = is_landmark ? cm.landmark_keys[cls] : cm.region_keys[cls];
    const double sigma = is_landmark ? spec.sigma_landmark : spec.sigma_background;

    auto f = out.main.features.row(t);
    for (std::size_t c = 0; c < d; ++c) f[c] = proto[c] + offset[c] + sigma * nd(rng);
    auto a = out.aux.features.row(t);
    for (std::size_t c = 0; c < da; ++c) a[c] = aux[c] + aux_noise * nd(rng);
    auto k = out.keys.row(t);
    const double boost = is_landmark ? spec.beta : 0.0;
    for (std::size_t c = 0; c < d; ++c) k[c] = key[c] + boost * cm.cls_query[c] + sigma * nd(rng);
  }
  return out;
}

Sample generate_sample(const SyntheticFaceSpec& spec, std::uint64_t seed) {
  return Sample{generate_backbone_output(spec, seed), spec.landmarks, spec.identity_seed};
}

SyntheticFaceSpec warp_spec(const SyntheticFaceSpec& spec, const TpsWarp& warp) {
  SyntheticFaceSpec out = spec;
  const auto& g = spec.geometry;
  for (auto& p : out.landmarks) p = clamp_to_image(warp.apply(p), g.image_h(), g.image_w());
  const FeatureGrid probe{g, Matrix(g.token_count(), 1)};
  for (std::size_t t = 0; t < g.token_count(); ++t) {
    const Pixel src = warp.invert(probe.patch_center(t));
    out.region_layout[t] = spec.region_layout[probe.token_containing(src)];
  }
  return out;
}

SyntheticFaceSpec jitter_spec(const SyntheticFaceSpec& spec, std::uint64_t seed, double tps_sigma, double shift_sigma_px) {
  auto params = random_tps(spec.geometry.image_h(), spec.geometry.image_w(), tps_sigma, seed);
  Rng rng(mix_seed(seed, kBatchJitter));
  std::normal_distribution<double> nd(0.0, shift_sigma_px);
  const double sx = nd(rng);
  const double sy = nd(rng);
  for (auto& d : params.displacements) {
    d.x += sx;
    d.y += sy;
  }
  return warp_spec(spec, TpsWarp::fit(params));
}

EvalPair make_pair(const SyntheticFaceSpec& spec, PairKind kind, std::uint64_t seed, double tps_sigma) {
  EvalPair pair;
  pair.kind = kind;
  pair.reference = generate_sample(spec, mix_seed(seed, kPairRefNoise));
  const auto params = random_tps(spec.geometry.image_h(), spec.geometry.image_w(), tps_sigma, mix_seed(seed, kPairTps));
  SyntheticFaceSpec test_spec = warp_spec(spec, TpsWarp::fit(params));
  if (kind == PairKind::different) {
    test_spec.identity_seed = mix_seed(seed, kPairIdentity);
    if (test_spec.identity_seed == spec.identity_seed) ++test_spec.identity_seed;
  }
  pair.test = generate_sample(test_spec, mix_seed(seed, kPairTestNoise));
  return pair;
}

std::vector<EvalPair> make_pair_batch(const SyntheticFaceSpec& spec, std::size_t n_same, std::size_t n_different,
                                      std::uint64_t master_seed, double tps_sigma, double shift_sigma_px) {
  std::vector<EvalPair> pairs;
  pairs.reserve(n_same + n_different);
  for (std::size_t k = 0; k < n_same + n_different; ++k) {
    const std::uint64_t seed = mix_seed(master_seed, 1000 + k);
    SyntheticFaceSpec ref = jitter_spec(spec, mix_seed(seed, kBatchJitter), tps_sigma, shift_sigma_px);
    ref.identity_seed = mix_seed(seed, kIdentity);
    pairs.push_back(make_pair(ref, k < n_same ? PairKind::same : PairKind::different, seed, tps_sigma));
  }
  return pairs;
}

std::uint64_t hash_sample(const Sample& s, Fnv1a& h) {
  h.update_doubles(s.backbone.main.features.data());
  h.update_doubles(s.backbone.aux.features.data());
  h.update_doubles(s.backbone.cls_query);
  h.update_doubles(s.backbone.keys.data());
  for (const auto& p : s.landmarks) h.update_doubles(std::vector<double>{p.x, p.y});
  return h.digest();
}

std::uint64_t hash_pairs(const std::vector<EvalPair>& pairs) {
  Fnv1a h;
  for (const auto& p : pairs) {
    h.update_u64(p.kind == PairKind::same ? 0 : 1);
    hash_sample(p.reference, h);
    hash_sample(p.test, h);
  }
  return h.digest();
}

}  // namespace sce
