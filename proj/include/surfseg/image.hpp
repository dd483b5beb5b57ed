// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace surfseg {

// Interleaved float image, values nominally in [0,1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  bool empty() const { return data.empty(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

  float& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  bool operator==(const Image&) const = default;
};

// Reads an 8-bit PNG and converts it to the requested channel count
// (1 = gray, 3 = RGB, 4 = RGBA). Values are scaled to [0,1].
Image read_png(const std::filesystem::path& path, int channels);

// Writes an 8-bit PNG with 1, 3 or 4 channels; values are clamped to [0,1] and
// rounded to the nearest 8-bit level.
void write_png(const std::filesystem::path& path, const Image& image);

// Binary dilation of a one-channel mask (values >= 0.5 count as set) by a
// disk of the given pixel radius.
Image dilate_mask(const Image& mask, int radius);

}  // namespace surfseg
