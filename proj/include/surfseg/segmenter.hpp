// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <vector>

#include "surfseg/image.hpp"
#include "surfseg/renderer.hpp"
#include "surfseg/scene_io.hpp"
#include "surfseg/trainer.hpp"

namespace surfseg {

inline constexpr double kDefaultMaskThreshold = 0.5;

struct SegmentationOutput {
  Image pixel_alpha;      // H x W x 1
  Image binary_mask;      // H x W x 1, pixel_alpha >= threshold
  Image foreground_rgba;  // H x W x 4, straight (unpremultiplied) color
  Image background_rgb;   // H x W x 3, background field alone
  Image composite;        // H x W x 3, full render
  Image depth;            // H x W x 1, t of the max-weight foreground section
};

// Elementwise alpha >= threshold. Throws ContractError unless threshold is in (0,1).
Image threshold_mask(const Image& pixel_alpha, double threshold = kDefaultMaskThreshold);

struct SegmentOptions {
  double threshold = kDefaultMaskThreshold;
  bool use_masks = true;
  int mask_dilation = 2;
};

// Renders every pixel of a view. The background image is the normalized
// background-field color, with the foreground region forced transparent.
SegmentationOutput segment_view(const RadianceField& field, const SceneBundle& scene,
                                std::size_t view_index, const RenderSettings& settings,
                                const SegmentOptions& options = {});

// Same, for a restored checkpoint. Mask usage and dilation follow the
// training configuration.
SegmentationOutput segment_view(const TrainedModel& model, const SceneBundle& scene,
                                std::size_t view_index, double threshold = kDefaultMaskThreshold);

// Pixel alpha only (no background or colors); pixels are rendered on a
// stride grid and the result has size ceil(W/stride) x ceil(H/stride).
Image render_alpha(const RadianceField& field, const SceneBundle& scene, std::size_t view_index,
                   const RenderSettings& settings, int stride = 1);

// Writes alpha/<stem>.png, mask/<stem>.png, fg/<stem>.png, bg/<stem>.png
// under `dir`.
void write_segmentation(const std::filesystem::path& dir, const std::string& view_name,
                        const SegmentationOutput& out);

// Subsamples an image on the same stride grid as render_alpha.
Image subsample(const Image& image, int stride);

}  // namespace surfseg
