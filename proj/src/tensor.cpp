#include "sce/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace sce {

namespace {

static_assert(std::numeric_limits<float>::is_iec559 && std::numeric_limits<double>::is_iec559);

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename U>
U get_le(const std::uint8_t* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

std::string kind_name(TensorIoError::Kind k) {
  switch (k) {
    case TensorIoError::Kind::io: return "io";
    case TensorIoError::Kind::bad_magic: return "bad magic";
    case TensorIoError::Kind::bad_version: return "bad version";
    case TensorIoError::Kind::bad_dtype: return "bad dtype";
    case TensorIoError::Kind::bad_rank: return "bad rank";
    case TensorIoError::Kind::truncated: return "truncated";
    case TensorIoError::Kind::length_mismatch: return "length mismatch";
  }
  return "unknown";
}

}  // namespace

TensorIoError::TensorIoError(Kind kind, const std::filesystem::path& path, const std::string& what)
    : std::runtime_error(path.string() + ": " + kind_name(kind) + ": " + what), kind_(kind), path_(path) {}

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::f32: return 4;
    case DType::f64: return 8;
  }
  throw std::invalid_argument("unknown dtype");
}

std::uint64_t Tensor::element_count() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void Tensor::validate() const {
  if (dims.empty()) throw std::invalid_argument("tensor rank must be >= 1");
  for (auto d : dims) {
    if (d == 0) throw std::invalid_argument("tensor dims must be >= 1");
  }
  if (element_count() != data.size()) {
    throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                " != product of dims " + std::to_string(element_count()));
  }
}

Tensor Tensor::from_matrix(const Matrix& m, DType dtype) {
  return Tensor{dtype, {m.rows(), m.cols()}, m.data()};
}

Tensor Tensor::from_vector(const std::vector<double>& v, DType dtype) {
  return Tensor{dtype, {v.size()}, v};
}

Matrix Tensor::to_matrix() const {
  validate();
  const std::size_t cols = dims.back();
  return Matrix(data.size() / cols, cols, data);
}

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  t.validate();
  std::vector<std::uint8_t> out;
  out.reserve(kScetFixedHeaderBytes + 8 * t.dims.size() + dtype_size(t.dtype) * t.data.size());
  out.insert(out.end(), std::begin(kScetMagic), std::end(kScetMagic));
  put_le<std::uint32_t>(out, kScetVersion);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.dtype));
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.dims.size()));
  for (auto d : t.dims) put_le<std::uint64_t>(out, d);
  if (t.dtype == DType::f32) {
    for (double v : t.data) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  } else {
    for (double v : t.data) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Tensor decode_tensor(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& origin) {
  using K = TensorIoError::Kind;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kScetMagic, 4) != 0) {
    throw TensorIoError(K::bad_magic, origin, "expected \"SCET\"");
  }
  if (bytes.size() < kScetFixedHeaderBytes) throw TensorIoError(K::truncated, origin, "short header");
  const auto version = get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kScetVersion) {
    throw TensorIoError(K::bad_version, origin, "unsupported version " + std::to_string(version));
  }
  const auto code = get_le<std::uint16_t>(bytes.data() + 8);
  if (code != static_cast<std::uint16_t>(DType::f32) && code != static_cast<std::uint16_t>(DType::f64)) {
    throw TensorIoError(K::bad_dtype, origin, "dtype code " + std::to_string(code));
  }
  Tensor t;
  t.dtype = static_cast<DType>(code);
  const auto rank = get_le<std::uint16_t>(bytes.data() + 10);
  if (rank == 0) throw TensorIoError(K::bad_rank, origin, "rank 0");

  std::size_t pos = kScetFixedHeaderBytes;
  if (bytes.size() < pos + 8ull * rank) throw TensorIoError(K::truncated, origin, "short dims");
  std::uint64_t count = 1;
  for (std::uint16_t i = 0; i < rank; ++i, pos += 8) {
    const auto d = get_le<std::uint64_t>(bytes.data() + pos);
    if (d == 0) throw TensorIoError(K::bad_rank, origin, "zero-sized dim");
    t.dims.push_back(d);
    count *= d;
  }

  const std::size_t width = dtype_size(t.dtype);
  const std::size_t payload = bytes.size() - pos;
  if (payload % width != 0) throw TensorIoError(K::truncated, origin, "partial scalar at end of payload");
  if (payload / width != count) {
    throw TensorIoError(K::length_mismatch, origin,
                        "dims declare " + std::to_string(count) + " scalars, payload holds " +
                            std::to_string(payload / width));
  }
  t.data.resize(count);
  for (std::uint64_t i = 0; i < count; ++i, pos += width) {
    t.data[i] = t.dtype == DType::f32
                    ? static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(bytes.data() + pos)))
                    : std::bit_cast<double>(get_le<std::uint64_t>(bytes.data() + pos));
  }
  return t;
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  const auto bytes = encode_tensor(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw TensorIoError(TensorIoError::Kind::io, path, "cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw TensorIoError(TensorIoError::Kind::io, path, "write failed");
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TensorIoError(TensorIoError::Kind::io, path, "cannot open for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_tensor(bytes, path);
}

}  // namespace sce
