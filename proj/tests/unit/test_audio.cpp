#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "mixitkit/audio.hpp"
#include "mixitkit/error.hpp"
#include "mixitkit/features.hpp"
#include "mixitkit/rng.hpp"
#include "mixitkit/tensor_file.hpp"

using namespace mixitkit;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "mixitkit_test_audio";
  std::filesystem::create_directories(dir);
  return dir / name;
}

Waveform sine(double hz, double seconds, int rate, double amp = 1.0) {
  const auto n = static_cast<std::size_t>(seconds * rate);
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = amp * std::sin(2.0 * std::numbers::pi * hz * i / rate);
  return Waveform(std::move(s), rate);
}

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void put16(std::string& s, uint16_t v) {
  s.push_back(static_cast<char>(v & 0xFF));
  s.push_back(static_cast<char>(v >> 8));
}
void put32(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::string wav_header(uint16_t format, uint16_t channels, uint16_t bits, uint32_t rate, uint32_t data_bytes) {
  std::string s = "RIFF";
  put32(s, 36 + data_bytes);
  s += "WAVEfmt ";
  put32(s, 16);
  put16(s, format);
  put16(s, channels);
  put32(s, rate);
  put32(s, rate * channels * bits / 8);
  put16(s, static_cast<uint16_t>(channels * bits / 8));
  put16(s, bits);
  s += "data";
  put32(s, data_bytes);
  return s;
}

}  // namespace

TEST_CASE("wav round trip of silence is exact") {
  const auto p = temp_path("zeros.wav");
  write_wav(p, Waveform::zeros(16000, 16000));
  const Waveform back = read_wav(p);
  CHECK(back.sample_rate == 16000);
  REQUIRE(back.size() == 16000);
  for (double v : back.samples) CHECK(v == 0.0);
}

TEST_CASE("wav round trip of a full-scale sine is within one LSB") {
  const auto p = temp_path("sine.wav");
  const Waveform x = sine(440.0, 1.0, 16000);
  write_wav(p, x);
  const Waveform back = read_wav(p);
  REQUIRE(back.size() == x.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(back.samples[i] - x.samples[i]));
  CHECK(worst <= std::ldexp(1.0, -15));
}

TEST_CASE("wav reader rejects stereo and malformed files") {
  std::string stereo = wav_header(1, 2, 16, 16000, 8);
  stereo.append(8, '\0');
  write_bytes(temp_path("stereo.wav"), stereo);
  CHECK_THROWS_AS(read_wav(temp_path("stereo.wav")), Unsupported);

  write_bytes(temp_path("junk.wav"), "RIFX0000WAVE");
  CHECK_THROWS_AS(read_wav(temp_path("junk.wav")), FormatError);

  std::string u8 = wav_header(1, 1, 8, 16000, 4);
  u8.append(4, '\x80');
  write_bytes(temp_path("u8.wav"), u8);
  CHECK_THROWS_AS(read_wav(temp_path("u8.wav")), Unsupported);
}

TEST_CASE("wav reader accepts 32-bit float") {
  std::string f32 = wav_header(3, 1, 32, 8000, 8);
  const float vals[2] = {0.25f, -0.75f};
  f32.append(reinterpret_cast<const char*>(vals), 8);
  write_bytes(temp_path("f32.wav"), f32);
  const Waveform w = read_wav(temp_path("f32.wav"));
  CHECK(w.sample_rate == 8000);
  REQUIRE(w.size() == 2);
  CHECK(w.samples[0] == 0.25);
  CHECK(w.samples[1] == -0.75);
}

TEST_CASE("power_db reference values") {
  std::vector<double> ones(1000, 1.0);
  CHECK(power_db(ones) == doctest::Approx(0.0).epsilon(0).scale(1).epsilon(1e-9));
  CHECK(std::abs(power_db(std::vector<double>(100, 0.0)) + 120.0) < 1e-9);
  Rng rng(3);
  auto x = random_vec(rng, 512);
  for (double a : {0.5, 2.0, 10.0}) {
    auto y = x;
    for (auto& v : y) v *= a;
    CHECK(std::abs(power_db(y) - power_db(x) - 20.0 * std::log10(a)) < 1e-6);
  }
  auto y = x;
  for (auto& v : y) v *= 2.0;
  CHECK(std::abs(power_db(y) - power_db(x) - 6.0206) < 1e-4);
}

TEST_CASE("mixture consistency") {
  Rng rng(11);
  SUBCASE("sources already summing to the mixture are unchanged") {
    SourceStack s(3, 64, 8000);
    s.data = random_vec(rng, s.data.size());
    const Waveform x = s.sum();
    const SourceStack out = mixture_consistency(s, x);
    for (std::size_t i = 0; i < s.data.size(); ++i) CHECK(std::abs(out.data[i] - s.data[i]) < 1e-12);
  }
  SUBCASE("zero sources split the mixture evenly") {
    SourceStack s(2, 50, 8000);
    const Waveform x(random_vec(rng, 50), 8000);
    const SourceStack out = mixture_consistency(s, x);
    for (int m = 0; m < 2; ++m)
      for (std::size_t t = 0; t < 50; ++t) CHECK(out.source(m)[t] == doctest::Approx(x.samples[t] / 2));
  }
  SUBCASE("random stacks sum to the mixture and the projection is idempotent") {
    for (int trial = 0; trial < 20; ++trial) {
      SourceStack s(4, 200, 8000);
      s.data = random_vec(rng, s.data.size());
      const Waveform x(random_vec(rng, 200), 8000);
      const SourceStack once = mixture_consistency(s, x);
      const Waveform total = once.sum();
      double worst = 0.0;
      for (std::size_t t = 0; t < 200; ++t) worst = std::max(worst, std::abs(total.samples[t] - x.samples[t]));
      CHECK(worst <= 1e-6);
      const SourceStack twice = mixture_consistency(once, x);
      for (std::size_t i = 0; i < s.data.size(); ++i) CHECK(std::abs(twice.data[i] - once.data[i]) < 1e-12);
    }
  }
  SUBCASE("length mismatch") {
    SourceStack s(2, 10, 8000);
    CHECK_THROWS_AS(mixture_consistency(s, Waveform::zeros(11, 8000)), InvalidInput);
  }
  SUBCASE("backward is the adjoint of the projection") {
    const int m = 3;
    const std::size_t t = 40;
    auto a = random_vec(rng, m * t);
    auto g = random_vec(rng, m * t);
    const std::vector<double> zero_mix(t, 0.0);
    auto pa = a;
    mixture_consistency_inplace<double>(pa, m, zero_mix);
    auto pg = g;
    mixture_consistency_backward<double>(pg, m);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      lhs += pa[i] * g[i];
      rhs += a[i] * pg[i];
    }
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("log-mel frame count follows 1 + floor((T - win) / hop)") {
  // 0.96 s at 16 kHz: T = 15360, win = 400, hop = 160 -> 1 + floor(14960 / 160) = 94.
  const LogMelSpectrogram s = log_mel(Waveform::zeros(15360, 16000), 25.0, 10.0, 64);
  CHECK(s.num_frames == 94);
  CHECK(s.mel_bands == 64);
  // 96 frames need T = 400 + 95 * 160.
  CHECK(log_mel(Waveform::zeros(400 + 95 * 160, 16000), 25.0, 10.0, 64).num_frames == 96);
  CHECK_THROWS_AS(log_mel(Waveform::zeros(399, 16000), 25.0, 10.0, 64), InvalidInput);
  CHECK_THROWS_AS(log_mel(Waveform::zeros(1000, 16000), 25.0, 10.0, 0), InvalidInput);
}

TEST_CASE("log-mel of silence is the log floor") {
  const LogMelSpectrogram s = log_mel(Waveform::zeros(8000, 8000), 25.0, 10.0, 32);
  for (double v : s.frames) CHECK(v == std::log(1e-8));
}

TEST_CASE("mel filterbank matches an independent HTK construction") {
  const MelFrontEnd fe(16000, 25.0, 10.0, 64);
  CHECK(fe.window_samples() == 400);
  CHECK(fe.hop_samples() == 160);
  CHECK(fe.fft_size() == 512);
  const double top = 2595.0 * std::log10(1.0 + 8000.0 / 700.0);
  for (int b = 0; b < 64; ++b) {
    auto edge = [&](int i) { return 700.0 * (std::pow(10.0, top * i / 65.0 / 2595.0) - 1.0); };
    const double lo = edge(b), mid = edge(b + 1), hi = edge(b + 2);
    CHECK(fe.band_center_hz(b) == doctest::Approx(mid).epsilon(1e-12));
    for (int k = 0; k <= 256; ++k) {
      const double hz = k * 16000.0 / 512.0;
      const double expect = std::max(0.0, std::min((hz - lo) / (mid - lo), (hi - hz) / (hi - mid)));
      CHECK(fe.filter_weight(b, k) == doctest::Approx(expect).epsilon(1e-12).scale(1.0));
    }
  }
}

TEST_CASE("a sine at a band centre peaks in that band") {
  const MelFrontEnd fe(16000, 25.0, 10.0, 64);
  for (int b : {20, 30, 45, 60}) {
    const Waveform x = sine(fe.band_center_hz(b), 0.5, 16000, 0.5);
    const LogMelSpectrogram s = fe.compute(x.view());
    int best = 0;
    std::vector<double> mean(64, 0.0);
    for (int f = 0; f < s.num_frames; ++f)
      for (int k = 0; k < 64; ++k) mean[k] += s.at(f, k) / s.num_frames;
    for (int k = 1; k < 64; ++k)
      if (mean[k] > mean[best]) best = k;
    CHECK(best == b);
  }
}

TEST_CASE("log-mel is shift covariant at hop granularity") {
  Rng rng(5);
  const Waveform x(random_vec(rng, 4000, 0.3), 8000);
  const MelFrontEnd fe(8000, 25.0, 10.0, 24);
  std::vector<double> shifted(x.samples.begin() + fe.hop_samples(), x.samples.end());
  const LogMelSpectrogram a = fe.compute(x.view());
  const LogMelSpectrogram b = fe.compute(shifted);
  REQUIRE(b.num_frames == a.num_frames - 1);
  for (int f = 0; f < b.num_frames; ++f)
    for (int k = 0; k < 24; ++k) CHECK(std::abs(b.at(f, k) - a.at(f + 1, k)) < 1e-6);
}

TEST_CASE("log-mel backward matches central differences") {
  Rng rng(9);
  const MelFrontEnd fe(8000, 25.0, 10.0, 16);
  std::vector<double> x = random_vec(rng, 600, 0.2);
  const LogMelSpectrogram s = fe.compute(x);
  const std::vector<double> w = random_vec(rng, s.frames.size());
  auto loss = [&](const std::vector<double>& in) {
    const LogMelSpectrogram o = fe.compute(in);
    double l = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) l += w[i] * o.frames[i];
    return l;
  };
  std::vector<double> grad(x.size(), 0.0);
  fe.backward(x, w, grad);
  const double h = 1e-6;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t i = rng.uniform_int(x.size());
    auto xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (loss(xp) - loss(xm)) / (2 * h);
    CHECK(std::abs(fd - grad[i]) <= 1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("segmentation counts and padding") {
  auto spec = [](int frames) {
    LogMelSpectrogram s;
    s.num_frames = frames;
    s.mel_bands = 2;
    s.frames.resize(static_cast<std::size_t>(frames) * 2);
    for (std::size_t i = 0; i < s.frames.size(); ++i) s.frames[i] = static_cast<double>(i);
    return s;
  };
  CHECK(segment_spectrogram(spec(96), 96, 10).num_segments == 1);
  CHECK(segment_spectrogram(spec(106), 96, 10).num_segments == 2);
  CHECK(segment_spectrogram(spec(50), 96, 10).num_segments == 1);

  const SegmentBatch b = segment_spectrogram(spec(100), 96, 10);
  REQUIRE(b.num_segments == 2);
  const auto second = b.segment(1);
  // Second segment starts at frame 10; frames 10..99 are real, then 6 floor frames.
  for (int w = 0; w < 90; ++w)
    for (int k = 0; k < 2; ++k) CHECK(second[w * 2 + k] == static_cast<double>((10 + w) * 2 + k));
  for (int w = 90; w < 96; ++w)
    for (int k = 0; k < 2; ++k) CHECK(second[w * 2 + k] == std::log(1e-8));
  CHECK_THROWS_AS(segment_spectrogram(spec(10), 0, 1), InvalidInput);
}

TEST_CASE("segment backward is the adjoint of segmentation") {
  Rng rng(2);
  LogMelSpectrogram s;
  s.num_frames = 37;
  s.mel_bands = 3;
  s.frames = random_vec(rng, 37 * 3);
  const SegmentBatch b = segment_spectrogram(s, 8, 3);
  const auto g = random_vec(rng, b.data.size());
  std::vector<double> gf(s.frames.size(), 0.0);
  segment_backward(b, g, gf);
  // <seg(f), g> - (padding contribution) == <f, seg^T g>
  double lhs = 0.0, pad = 0.0, rhs = 0.0;
  for (int seg = 0; seg < b.num_segments; ++seg)
    for (int w = 0; w < 8; ++w)
      for (int k = 0; k < 3; ++k) {
        const std::size_t i = (static_cast<std::size_t>(seg) * 8 + w) * 3 + k;
        (seg * 3 + w < 37 ? lhs : pad) += b.data[i] * g[i];
      }
  for (std::size_t i = 0; i < gf.size(); ++i) rhs += s.frames[i] * gf[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("AVTK round trip and validation") {
  Tensor t;
  t.dims = {2, 3};
  t.values = {1.5, -2.0, 0.0, 3.25, 1e-3, 7.0};
  t.dtype = TensorDtype::kFloat32;
  const Tensor back = decode_avtk(encode_avtk(t));
  CHECK(back.dims == t.dims);
  for (std::size_t i = 0; i < 6; ++i) CHECK(back.values[i] == static_cast<double>(static_cast<float>(t.values[i])));

  t.dtype = TensorDtype::kFloat64;
  t.values[4] = 0.1;
  CHECK(decode_avtk(encode_avtk(t)).values == t.values);

  std::string bytes = encode_avtk(t);
  CHECK(bytes.substr(0, 4) == "AVTK");
  CHECK(bytes.size() == 4 + 4 + 1 + 1 + 2 * 8 + 6 * 8);
  CHECK_THROWS_AS(decode_avtk(bytes.substr(0, bytes.size() - 1)), FormatError);
  bytes[0] = 'X';
  CHECK_THROWS_AS(decode_avtk(bytes), FormatError);
}
