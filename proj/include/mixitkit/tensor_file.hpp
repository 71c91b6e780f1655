#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mixitkit {

/// AVTK raw tensor container:
///
///   bytes 0..3   magic "AVTK"
///   u32 LE       version (1)
///   u8           dtype: 0 = f32 LE, 1 = f64 LE
///   u8           rank
///   rank x u64 LE dims
///   row-major payload
enum class TensorDtype : uint8_t { kFloat32 = 0, kFloat64 = 1 };

struct Tensor {
  std::vector<uint64_t> dims;
  std::vector<double> values;  // row-major; always widened to double in memory
  TensorDtype dtype = TensorDtype::kFloat32;

  std::size_t numel() const;
};

constexpr uint32_t kAvtkVersion = 1;

std::string encode_avtk(const Tensor& t);
Tensor decode_avtk(const std::string& bytes, const std::string& what = "AVTK");

void write_avtk(const std::filesystem::path& path, const Tensor& t);
Tensor read_avtk(const std::filesystem::path& path);

}  // namespace mixitkit
