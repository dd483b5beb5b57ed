// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "surfseg/segmenter.hpp"

#include <algorithm>

namespace surfseg {

Image threshold_mask(const Image& pixel_alpha, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ContractError("threshold must lie in (0,1)");
  Image out(pixel_alpha.width, pixel_alpha.height, pixel_alpha.channels);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = pixel_alpha.data[i] >= threshold ? 1.0f : 0.0f;
  }
  return out;
}

namespace {

std::vector<std::uint8_t> region_flags(const SceneBundle& scene, std::size_t view,
                                       const std::vector<int>& px, const std::vector<int>& py,
                                       const SegmentOptions& options) {
  std::vector<std::uint8_t> flags(px.size(), 1);
  const View& v = scene.views[view];
  if (!options.use_masks || !v.coarse_mask) return flags;
  const Image region = dilate_mask(*v.coarse_mask, options.mask_dilation);
  for (std::size_t k = 0; k < px.size(); ++k) flags[k] = region.at(px[k], py[k]) >= 0.5f ? 1 : 0;
  return flags;
}

}  // namespace

SegmentationOutput segment_view(const RadianceField& field, const SceneBundle& scene,
                                std::size_t view_index, const RenderSettings& settings,
                                const SegmentOptions& options) {
  if (view_index >= scene.views.size()) throw RangeError("view index out of range");
  const View& view = scene.views[view_index];
  const int w = view.image.width, h = view.image.height;
  std::vector<Ray> rays;
  std::vector<int> px, py;
  rays.reserve(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      rays.push_back(scene.pixel_ray(view_index, x, y));
      px.push_back(x);
      py.push_back(y);
    }
  }
  const auto flags = region_flags(scene, view_index, px, py, options);
  const auto renders = render_rays(field, rays, flags, settings);

  SegmentationOutput out;
  out.pixel_alpha = Image(w, h, 1);
  out.foreground_rgba = Image(w, h, 4);
  out.background_rgb = Image(w, h, 3);
  out.composite = Image(w, h, 3);
  out.depth = Image(w, h, 1);
  for (std::size_t k = 0; k < renders.size(); ++k) {
    const PixelRender& r = renders[k];
    const int x = px[k], y = py[k];
    const double a = std::clamp(r.alpha, 0.0, 1.0);
    out.pixel_alpha.at(x, y) = static_cast<float>(a);
    for (int c = 0; c < 3; ++c) {
      const double straight = a > 0.0 ? std::clamp(r.fg_color[c] / a, 0.0, 1.0) : 0.0;
      out.foreground_rgba.at(x, y, c) = static_cast<float>(straight);
      out.background_rgb.at(x, y, c) = static_cast<float>(r.bg_color[c]);
      out.composite.at(x, y, c) = static_cast<float>(r.color[c]);
    }
    out.foreground_rgba.at(x, y, 3) = static_cast<float>(a);
    out.depth.at(x, y) = static_cast<float>(r.depth);
  }
  out.binary_mask = threshold_mask(out.pixel_alpha, options.threshold);
  return out;
}

SegmentationOutput segment_view(const TrainedModel& model, const SceneBundle& scene,
                                std::size_t view_index, double threshold) {
  SegmentOptions options;
  options.threshold = threshold;
  options.use_masks = model.config().use_masks;
  options.mask_dilation = model.config().mask_dilation;
  return segment_view(model.field(), scene, view_index, model.render_settings(), options);
}

Image render_alpha(const RadianceField& field, const SceneBundle& scene, std::size_t view_index,
                   const RenderSettings& settings, int stride) {
  if (view_index >= scene.views.size()) throw RangeError("view index out of range");
  if (stride < 1) throw ContractError("stride must be >= 1");
  const View& view = scene.views[view_index];
  const int w = (view.image.width + stride - 1) / stride;
  const int h = (view.image.height + stride - 1) / stride;
  std::vector<Ray> rays;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) rays.push_back(scene.pixel_ray(view_index, x * stride, y * stride));
  }
  const std::vector<std::uint8_t> flags(rays.size(), 1);
  const auto renders = render_rays(field, rays, flags, settings, /*alpha_only=*/true);
  Image out(w, h, 1);
  for (std::size_t k = 0; k < renders.size(); ++k) {
    out.data[k] = static_cast<float>(std::clamp(renders[k].alpha, 0.0, 1.0));
  }
  return out;
}

Image subsample(const Image& image, int stride) {
  if (stride < 1) throw ContractError("stride must be >= 1");
  const int w = (image.width + stride - 1) / stride;
  const int h = (image.height + stride - 1) / stride;
  Image out(w, h, image.channels);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < image.channels; ++c) out.at(x, y, c) = image.at(x * stride, y * stride, c);
    }
  }
  return out;
}

void write_segmentation(const std::filesystem::path& dir, const std::string& view_name,
                        const SegmentationOutput& out) {
  namespace fs = std::filesystem;
  const std::string file = fs::path(view_name).stem().string() + ".png";
  for (const char* sub : {"alpha", "mask", "fg", "bg"}) fs::create_directories(dir / sub);
  write_png(dir / "alpha" / file, out.pixel_alpha);
  write_png(dir / "mask" / file, out.binary_mask);
  write_png(dir / "fg" / file, out.foreground_rgba);
  write_png(dir / "bg" / file, out.background_rgb);
}

}  // namespace surfseg
