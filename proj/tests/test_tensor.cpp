#include <doctest.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "sce/feature_grid.hpp"
#include "sce/tensor.hpp"

using namespace sce;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "sce_tensor_tests";
  fs::create_directories(dir);
  return dir / name;
}

void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(v & 0xff);
  b.push_back(v >> 8);
}

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) b.push_back((v >> (8 * k)) & 0xff);
}

void put_u64(std::vector<std::uint8_t>& b, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) b.push_back((v >> (8 * k)) & 0xff);
}

TensorIoError::Kind decode_error(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_tensor(bytes);
  } catch (const TensorIoError& e) {
    return e.kind();
  }
  FAIL("decode succeeded");
  return TensorIoError::Kind::io;
}

}  // namespace

TEST_CASE("f64 tensor roundtrips through a file bit-exactly") {
  Tensor t{DType::f64, {2, 3}, {1.0, -2.5, 3.0e-300, 0.1, -0.0, 1e308}};
  const auto path = temp_file("a.scet");
  write_tensor(path, t);
  const Tensor back = read_tensor(path);
  CHECK(back.dims == t.dims);
  CHECK(back.dtype == DType::f64);
  REQUIRE(back.data.size() == t.data.size());
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    CHECK(std::bit_cast<std::uint64_t>(back.data[i]) == std::bit_cast<std::uint64_t>(t.data[i]));
  }
}

TEST_CASE("rank zero is rejected and a one-element tensor roundtrips") {
  CHECK_THROWS_AS(encode_tensor(Tensor{DType::f64, {}, {1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(encode_tensor(Tensor{DType::f64, {0}, {}}), std::invalid_argument);
  const Tensor s{DType::f32, {1}, {0.25}};
  CHECK(decode_tensor(encode_tensor(s)) == s);
}

TEST_CASE("hand-encoded header with one f32 scalar decodes") {
  std::vector<std::uint8_t> b = {'S', 'C', 'E', 'T'};
  put_u32(b, 1);
  put_u16(b, 1);
  put_u16(b, 1);
  CHECK(b.size() == 12);
  put_u64(b, 1);
  const float v = -7.75f;
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(b, bits);
  const Tensor t = decode_tensor(b);
  CHECK(t.dtype == DType::f32);
  CHECK(t.dims == std::vector<std::uint64_t>{1});
  CHECK(t.data == std::vector<double>{-7.75});
  CHECK(encode_tensor(t) == b);
}

TEST_CASE("decode errors are distinguished") {
  const auto good = encode_tensor(Tensor{DType::f64, {2, 2}, {1, 2, 3, 4}});
  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(decode_error(bad_magic) == TensorIoError::Kind::bad_magic);

  auto bad_version = good;
  bad_version[4] = 9;
  CHECK(decode_error(bad_version) == TensorIoError::Kind::bad_version);

  auto bad_dtype = good;
  bad_dtype[8] = 7;
  CHECK(decode_error(bad_dtype) == TensorIoError::Kind::bad_dtype);

  CHECK(decode_error({good.begin(), good.begin() + 6}) == TensorIoError::Kind::truncated);
  CHECK(decode_error({good.begin(), good.end() - 3}) == TensorIoError::Kind::truncated);

  auto short_payload = good;
  short_payload.resize(good.size() - 8);
  CHECK(decode_error(short_payload) == TensorIoError::Kind::length_mismatch);
  auto long_payload = good;
  long_payload.resize(good.size() + 8, 0);
  CHECK(decode_error(long_payload) == TensorIoError::Kind::length_mismatch);
}

TEST_CASE("missing file reports the path") {
  const fs::path p = temp_file("does_not_exist.scet");
  fs::remove(p);
  try {
    read_tensor(p);
    FAIL("expected an error");
  } catch (const TensorIoError& e) {
    CHECK(e.kind() == TensorIoError::Kind::io);
    CHECK(e.path() == p);
  }
}

TEST_CASE("f32 payloads with representable values roundtrip") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(-10.0f, 10.0f);
  Tensor t{DType::f32, {5, 7, 3}, {}};
  for (int i = 0; i < 105; ++i) t.data.push_back(u(rng));
  const Tensor back = decode_tensor(encode_tensor(t));
  CHECK(back == t);
}

TEST_CASE("feature grid assembly") {
  Tensor tokens{DType::f64, {144, 64}, std::vector<double>(144 * 64)};
  for (std::size_t i = 0; i < tokens.data.size(); ++i) tokens.data[i] = static_cast<double>(i);
  const FeatureGrid g = assemble_feature_grid(tokens, GridGeometry{12, 12, 8});
  CHECK(g.geometry.image_h() == 96);
  CHECK(g.geometry.image_w() == 96);
  CHECK(g.token_count() == 144);
  CHECK(g.position(13) == GridPos{1, 1});
  CHECK(g.token_at({11, 3}) == 135);
  CHECK(g.features(135, 0) == 135.0 * 64);

  const FeatureGrid one = assemble_feature_grid(Tensor{DType::f64, {1, 4}, {1, 2, 3, 4}}, GridGeometry{1, 1, 8});
  CHECK(one.token_count() == 1);

  CHECK_THROWS_AS(assemble_feature_grid(Tensor{DType::f64, {143, 2}, std::vector<double>(286)}, GridGeometry{12, 12, 8}),
                  std::invalid_argument);

  const FeatureGrid g3 = assemble_feature_grid(Tensor{DType::f64, {2, 3, 1}, {0, 1, 2, 3, 4, 5}}, GridGeometry{2, 3, 4});
  CHECK(g3.features(4, 0) == 4.0);
  CHECK_THROWS_AS(assemble_feature_grid(Tensor{DType::f64, {3, 2, 1}, {0, 1, 2, 3, 4, 5}}, GridGeometry{2, 3, 4}),
                  std::invalid_argument);
}

TEST_CASE("patch centers and containing patches") {
  const FeatureGrid g{GridGeometry{12, 12, 8}, Matrix(144, 1)};
  CHECK(g.patch_center(0) == Pixel{3.5, 3.5});
  CHECK(g.patch_center(13) == Pixel{11.5, 11.5});
  CHECK(g.token_containing(Pixel{34.0, 38.0}) == 4 * 12 + 4);
  CHECK(g.token_containing(Pixel{-3.0, 200.0}) == 11 * 12);
}

TEST_CASE("bilinear upsampling") {
  SUBCASE("identity factor") {
    const FeatureGrid g{GridGeometry{2, 3, 1}, Matrix(6, 2, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12})};
    const auto m = bilinear_upsample(g, 2, 3);
    CHECK(m.values == g.features.data());
  }
  SUBCASE("constant grid") {
    const FeatureGrid g{GridGeometry{3, 3, 4}, Matrix(9, 2, 2.5)};
    const auto m = bilinear_upsample(g, 12, 12);
    for (double v : m.values) CHECK(v == 2.5);
  }
  SUBCASE("midpoint of a 2x2 grid") {
    const FeatureGrid g{GridGeometry{2, 2, 1}, Matrix(4, 1, {0, 1, 1, 2})};
    const auto m = bilinear_upsample(g, 3, 3);
    CHECK(m.at(1, 1)[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(m.at(0, 0)[0] == 0.0);
    CHECK(m.at(2, 2)[0] == 2.0);
  }
  SUBCASE("affine channel is reproduced at patch centers and bounds are kept") {
    const GridGeometry geo{4, 5, 8};
    FeatureGrid g{geo, Matrix(20, 2)};
    for (std::size_t t = 0; t < 20; ++t) {
      const auto p = g.position(t);
      g.features(t, 0) = 0.3 * p.row - 1.7 * p.col + 2.0;
      g.features(t, 1) = std::sin(static_cast<double>(t));
    }
    const auto m = bilinear_upsample(g, geo.image_h(), geo.image_w());
    for (std::size_t t = 0; t < 20; ++t) {
      const Pixel c = g.patch_center(t);
      CHECK(sample_bilinear(g, c)[0] == doctest::Approx(g.features(t, 0)).epsilon(1e-12));
    }
    for (std::size_t y = 0; y < m.height; ++y) {
      for (std::size_t x = 0; x < m.width; ++x) {
        const double gx = (x + 0.5) / 8.0 - 0.5, gy = (y + 0.5) / 8.0 - 0.5;
        if (gx < 0.0 || gy < 0.0 || gx > 4.0 || gy > 3.0) continue;
        CHECK(std::abs(m.at(x, y)[0] - (0.3 * gy - 1.7 * gx + 2.0)) < 1e-9);
      }
    }
    double lo = 1e9, hi = -1e9;
    for (std::size_t t = 0; t < 20; ++t) {
      lo = std::min(lo, g.features(t, 1));
      hi = std::max(hi, g.features(t, 1));
    }
    for (std::size_t k = 1; k < m.values.size(); k += 2) {
      CHECK(m.values[k] >= lo);
      CHECK(m.values[k] <= hi);
    }
  }
  SUBCASE("target smaller than the grid is rejected") {
    const FeatureGrid g{GridGeometry{4, 4, 2}, Matrix(16, 1)};
    CHECK_THROWS_AS(bilinear_upsample(g, 3, 8), std::invalid_argument);
  }
}
