#include "mixitkit/tensor_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mixitkit/error.hpp"

namespace mixitkit {

std::size_t Tensor::numel() const {
  std::size_t n = 1;
  for (uint64_t d : dims) n *= static_cast<std::size_t>(d);
  return n;
}

namespace {

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(const std::string& in, std::size_t pos) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    v |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

}  // namespace

std::string encode_avtk(const Tensor& t) {
  if (t.values.size() != t.numel()) throw InvalidInput("AVTK: payload size does not match dims");
  if (t.dims.size() > 255) throw InvalidInput("AVTK: rank exceeds 255");
  std::string out = "AVTK";
  put_le<uint32_t>(out, kAvtkVersion);
  out.push_back(static_cast<char>(t.dtype));
  out.push_back(static_cast<char>(t.dims.size()));
  for (uint64_t d : t.dims) put_le<uint64_t>(out, d);
  if (t.dtype == TensorDtype::kFloat32) {
    for (double v : t.values) put_le<uint32_t>(out, std::bit_cast<uint32_t>(static_cast<float>(v)));
  } else {
    for (double v : t.values) put_le<uint64_t>(out, std::bit_cast<uint64_t>(v));
  }
  return out;
}

Tensor decode_avtk(const std::string& in, const std::string& what) {
  if (in.size() < 10 || in.compare(0, 4, "AVTK") != 0) throw FormatError(what + ": bad AVTK magic");
  const uint32_t version = get_le<uint32_t>(in, 4);
  if (version != kAvtkVersion)
    throw FormatError(what + ": unsupported AVTK version " + std::to_string(version));
  const auto dtype = static_cast<uint8_t>(in[8]);
  if (dtype > 1) throw FormatError(what + ": unknown AVTK dtype " + std::to_string(dtype));
  const auto rank = static_cast<uint8_t>(in[9]);
  std::size_t pos = 10;
  if (in.size() < pos + 8u * rank) throw FormatError(what + ": truncated AVTK dims");
  Tensor t;
  t.dtype = static_cast<TensorDtype>(dtype);
  for (int i = 0; i < rank; ++i, pos += 8) t.dims.push_back(get_le<uint64_t>(in, pos));
  const std::size_t n = t.numel();
  const std::size_t width = t.dtype == TensorDtype::kFloat32 ? 4 : 8;
  if (in.size() != pos + n * width) throw FormatError(what + ": AVTK payload size mismatch");
  t.values.resize(n);
  for (std::size_t i = 0; i < n; ++i, pos += width) {
    t.values[i] = t.dtype == TensorDtype::kFloat32
                      ? static_cast<double>(std::bit_cast<float>(get_le<uint32_t>(in, pos)))
                      : std::bit_cast<double>(get_le<uint64_t>(in, pos));
  }
  return t;
}

void write_avtk(const std::filesystem::path& path, const Tensor& t) {
  const std::string bytes = encode_avtk(t);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("short write to " + path.string());
}

Tensor read_avtk(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_avtk(bytes, path.string());
}

}  // namespace mixitkit
