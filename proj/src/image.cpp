// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "surfseg/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "surfseg/common.hpp"

namespace surfseg {
namespace {

png_uint_32 format_for(int channels) {
  switch (channels) {
    case 1:
      return PNG_FORMAT_GRAY;
    case 3:
      return PNG_FORMAT_RGB;
    case 4:
      return PNG_FORMAT_RGBA;
    default:
      throw ContractError("unsupported channel count " + std::to_string(channels));
  }
}

}  // namespace

Image read_png(const std::filesystem::path& path, int channels) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IoError(path.string() + ": " + img.message);
  }
  img.format = format_for(channels);
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError(path.string() + ": " + img.message);
  }
  Image out(static_cast<int>(img.width), static_cast<int>(img.height), channels);
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    out.data[i] = static_cast<float>(buffer[i]) / 255.0f;
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = format_for(image.channels);
  std::vector<std::uint8_t> buffer(image.data.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    const float v = std::clamp(image.data[i], 0.0f, 1.0f);
    buffer[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  if (!png_image_write_to_file(&img, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw IoError(path.string() + ": " + img.message);
  }
}

Image dilate_mask(const Image& mask, int radius) {
  if (mask.channels != 1) throw ContractError("dilate_mask expects a one-channel image");
  if (radius < 0) throw ContractError("dilation radius must be >= 0");
  Image out(mask.width, mask.height, 1, 0.0f);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (mask.at(x, y) < 0.5f) continue;
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          if (dx * dx + dy * dy > radius * radius) continue;
          const int xx = x + dx, yy = y + dy;
          if (xx >= 0 && yy >= 0 && xx < mask.width && yy < mask.height) out.at(xx, yy) = 1.0f;
        }
      }
    }
  }
  return out;
}

}  // namespace surfseg
