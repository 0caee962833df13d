#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "sce/matrix.hpp"

namespace sce {

// SCET on-disk layout, all fields little-endian:
//   bytes 0..3   magic "SCET"
//   bytes 4..7   u32 format version
//   bytes 8..9   u16 dtype code (1 = f32, 2 = f64)
//   bytes 10..11 u16 rank
//   rank x u64   dims
//   payload      product(dims) scalars of the declared dtype

enum class DType : std::uint16_t { f32 = 1, f64 = 2 };

inline constexpr char kScetMagic[4] = {'S', 'C', 'E', 'T'};
inline constexpr std::uint32_t kScetVersion = 1;
inline constexpr std::size_t kScetFixedHeaderBytes = 12;

std::size_t dtype_size(DType t);

/// In memory every tensor holds doubles; dtype only controls the on-disk
/// width. An f32 tensor whose values are all f32-representable roundtrips
/// bit-exactly.
struct Tensor {
  DType dtype = DType::f64;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;

  std::uint64_t element_count() const;
  std::size_t rank() const { return dims.size(); }

  /// Throws std::invalid_argument when dims or data length are inconsistent.
  void validate() const;

  static Tensor from_matrix(const Matrix& m, DType dtype = DType::f64);
  static Tensor from_vector(const std::vector<double>& v, DType dtype = DType::f64);
  /// Collapses all leading dims into rows; a rank-1 tensor becomes one row.
  Matrix to_matrix() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

class TensorIoError : public std::runtime_error {
 public:
  enum class Kind { io, bad_magic, bad_version, bad_dtype, bad_rank, truncated, length_mismatch };

  TensorIoError(Kind kind, const std::filesystem::path& path, const std::string& what);
  Kind kind() const { return kind_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  Kind kind_;
  std::filesystem::path path_;
};

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& origin = {});

void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

}  // namespace sce
