#pragma once

#include <cstddef>
#include <vector>

namespace mixitkit {

/// Toy stand-in for RGB frames: frames x grid x grid x channels, row-major.
struct VideoFeatures {
  int frames = 0;
  int grid = 0;
  int channels = 0;
  std::vector<double> data;

  VideoFeatures() = default;
  VideoFeatures(int f, int g, int c)
      : frames(f), grid(g), channels(c), data(static_cast<std::size_t>(f) * g * g * c, 0.0) {}

  std::size_t frame_size() const { return static_cast<std::size_t>(grid) * grid * channels; }
  double& at(int f, int y, int x, int c) {
    return data[((static_cast<std::size_t>(f) * grid + y) * grid + x) * channels + c];
  }
  double at(int f, int y, int x, int c) const {
    return data[((static_cast<std::size_t>(f) * grid + y) * grid + x) * channels + c];
  }
};

}  // namespace mixitkit
