#include "mixitkit/audio.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "mixitkit/error.hpp"

namespace mixitkit {

Waveform SourceStack::waveform(int m) const {
  auto s = source(m);
  return Waveform(std::vector<double>(s.begin(), s.end()), sample_rate);
}

Waveform SourceStack::sum() const {
  Waveform out = Waveform::zeros(length, sample_rate);
  for (int m = 0; m < num_sources; ++m) {
    auto s = source(m);
    for (std::size_t t = 0; t < length; ++t) out.samples[t] += s[t];
  }
  return out;
}

void validate(const Waveform& x) {
  if (x.sample_rate <= 0) throw InvalidInput("waveform sample_rate must be positive");
  for (double v : x.samples)
    if (!std::isfinite(v)) throw InvalidInput("waveform contains non-finite samples");
}

void validate(const SourceStack& s) {
  if (s.sample_rate <= 0) throw InvalidInput("source stack sample_rate must be positive");
  if (s.num_sources < 1) throw InvalidInput("source stack needs at least one source");
  if (s.data.size() != static_cast<std::size_t>(s.num_sources) * s.length)
    throw InvalidInput("source stack rows do not share one length");
  for (double v : s.data)
    if (!std::isfinite(v)) throw InvalidInput("source stack contains non-finite samples");
}

double power_db(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  const double mean = x.empty() ? 0.0 : acc / static_cast<double>(x.size());
  return 10.0 * std::log10(mean + kPowerFloor);
}

template <typename Real>
void mixture_consistency_inplace(std::span<Real> sources, int num_sources, std::span<const Real> mixture) {
  const std::size_t n = mixture.size();
  if (num_sources < 1 || sources.size() != n * static_cast<std::size_t>(num_sources))
    throw InvalidInput("mixture_consistency: source length does not match mixture length");
  const Real inv_m = Real(1) / static_cast<Real>(num_sources);
  for (std::size_t t = 0; t < n; ++t) {
    Real total = 0;
    for (int m = 0; m < num_sources; ++m) total += sources[m * n + t];
    const Real share = (mixture[t] - total) * inv_m;
    for (int m = 0; m < num_sources; ++m) sources[m * n + t] += share;
  }
}

template <typename Real>
void mixture_consistency_backward(std::span<Real> grad, int num_sources) {
  const std::size_t n = grad.size() / static_cast<std::size_t>(num_sources);
  const Real inv_m = Real(1) / static_cast<Real>(num_sources);
  for (std::size_t t = 0; t < n; ++t) {
    Real total = 0;
    for (int m = 0; m < num_sources; ++m) total += grad[m * n + t];
    const Real share = total * inv_m;
    for (int m = 0; m < num_sources; ++m) grad[m * n + t] -= share;
  }
}

template void mixture_consistency_inplace<double>(std::span<double>, int, std::span<const double>);
template void mixture_consistency_inplace<float>(std::span<float>, int, std::span<const float>);
template void mixture_consistency_backward<double>(std::span<double>, int);
template void mixture_consistency_backward<float>(std::span<float>, int);

SourceStack mixture_consistency(const SourceStack& stack, const Waveform& mixture) {
  if (stack.length != mixture.size())
    throw InvalidInput("mixture_consistency: stack length " + std::to_string(stack.length) +
                       " != mixture length " + std::to_string(mixture.size()));
  SourceStack out = stack;
  mixture_consistency_inplace<double>(out.data, out.num_sources, mixture.view());
  return out;
}

// ---------------------------------------------------------------------------
// WAV

namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xFFFE;

uint16_t le16(const unsigned char* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }
uint32_t le32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

void put16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}
void put32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw FormatError(where + "not a RIFF/WAVE file");

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const uint32_t len = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size()) {
      // Tolerate a truncated data chunk size only if it is the data chunk.
      if (std::memcmp(chunk, "data", 4) != 0) throw FormatError(where + "truncated chunk");
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16) throw FormatError(where + "fmt chunk too short");
      format = le16(chunk + 8);
      channels = le16(chunk + 10);
      rate = le32(chunk + 12);
      bits = le16(chunk + 22);
      if (format == kFormatExtensible) {
        if (len < 40) throw FormatError(where + "extensible fmt chunk too short");
        format = le16(chunk + 8 + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_len = std::min<std::size_t>(len, bytes.size() - body);
      break;
    }
    pos = body + len + (len & 1u);
  }
  if (!have_fmt) throw FormatError(where + "missing fmt chunk");
  if (data == nullptr) throw FormatError(where + "missing data chunk");
  if (channels != 1)
    throw Unsupported(where + std::to_string(channels) + " channels; only mono is supported");
  if (rate == 0) throw FormatError(where + "zero sample rate");

  Waveform out;
  out.sample_rate = static_cast<int>(rate);
  if (format == kFormatPcm && bits == 16) {
    const std::size_t n = data_len / 2;
    out.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      out.samples[i] = static_cast<int16_t>(le16(data + 2 * i)) / 32768.0;
  } else if (format == kFormatFloat && bits == 32) {
    const std::size_t n = data_len / 4;
    out.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const uint32_t u = le32(data + 4 * i);
      out.samples[i] = static_cast<double>(std::bit_cast<float>(u));
    }
  } else {
    throw Unsupported(where + "unsupported encoding (format " + std::to_string(format) + ", " +
                      std::to_string(bits) + " bits)");
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const Waveform& x) {
  if (x.sample_rate <= 0) throw InvalidInput("write_wav: sample_rate must be positive");
  const uint32_t data_len = static_cast<uint32_t>(x.size() * 2);
  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  put32(out, 36 + data_len);
  out += "WAVEfmt ";
  put32(out, 16);
  put16(out, kFormatPcm);
  put16(out, 1);
  put32(out, static_cast<uint32_t>(x.sample_rate));
  put32(out, static_cast<uint32_t>(x.sample_rate) * 2);
  put16(out, 2);
  put16(out, 16);
  out += "data";
  put32(out, data_len);
  for (double v : x.samples) {
    const double q = std::round(std::clamp(v, -1.0, 1.0) * 32768.0);
    put16(out, static_cast<uint16_t>(static_cast<int16_t>(std::clamp(q, -32768.0, 32767.0))));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to " + path.string());
}

}  // namespace mixitkit
