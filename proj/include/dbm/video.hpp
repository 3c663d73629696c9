#pragma once

#include <cstddef>
#include <vector>

namespace dbm {

// RGB clip, values in [0, 1], stored [3 x T x H x W].
struct Video {
  std::size_t frames = 0, height = 0, width = 0;
  std::vector<double> data;

  static constexpr std::size_t kChannels = 3;

  Video() = default;
  Video(std::size_t t, std::size_t h, std::size_t w)
      : frames(t), height(h), width(w), data(kChannels * t * h * w, 0.0) {}

  std::size_t index(std::size_t c, std::size_t t, std::size_t y, std::size_t x) const {
    return ((c * frames + t) * height + y) * width + x;
  }
  double& at(std::size_t c, std::size_t t, std::size_t y, std::size_t x) {
    return data[index(c, t, y, x)];
  }
  double at(std::size_t c, std::size_t t, std::size_t y, std::size_t x) const {
    return data[index(c, t, y, x)];
  }
};

// Uniform-stride temporal subsample to `count` frames: frame i takes
// floor(i * T / count).
Video subsample_frames(const Video& v, std::size_t count);

}  // namespace dbm
