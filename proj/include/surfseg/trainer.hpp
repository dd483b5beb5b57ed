// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "surfseg/autodiff.hpp"
#include "surfseg/checkpoint.hpp"
#include "surfseg/config.hpp"
#include "surfseg/fields.hpp"
#include "surfseg/losses.hpp"
#include "surfseg/renderer.hpp"
#include "surfseg/scene_io.hpp"

namespace surfseg {

struct RayBatch {
  std::size_t view = 0;
  std::vector<Ray> rays;
  std::vector<Vec3> colors;
  std::vector<int> px, py;
  std::optional<std::vector<double>> mask;  // coarse mask value per ray
  std::vector<std::uint8_t> fg_region;      // pixel inside the dilated mask (1 without masks)
};

struct BatchOptions {
  std::optional<std::size_t> view;  // forced view
  bool without_replacement = false;
  bool use_masks = true;
  // Dilated coarse masks per view (empty images for views without one).
  const std::vector<Image>* fg_regions = nullptr;
};

// One view uniformly at random, then m pixels uniformly within it.
RayBatch sample_batch(const SceneBundle& scene, std::mt19937_64& rng, int m,
                      const BatchOptions& options = {});

// Per-view dilated coarse masks (empty images when a view has none).
std::vector<Image> foreground_regions(const SceneBundle& scene, int dilation);

struct HistoryRow {
  long step = 0;  // iterations completed
  double color = 0.0;
  double eikonal = 0.0;
  double sparsity = 0.0;
  double mask = 0.0;  // NaN when the mask term was inactive for the whole window
  double b = 0.0;
};

void write_history_csv(const std::filesystem::path& path, const std::vector<HistoryRow>& rows);

class Trainer {
 public:
  Trainer(const SceneBundle& scene, TrainConfig config);
  // Resumes from a checkpoint (config taken from it).
  Trainer(const SceneBundle& scene, const Checkpoint& checkpoint);

  // One optimization step. Throws NumericError naming the iteration and the
  // term when a loss turns non-finite.
  LossParts step();
  // Steps until `iteration() == until`; `on_step` (optional) runs after every
  // step.
  void run(long until, const std::function<void(const Trainer&)>& on_step = {});

  long iteration() const { return iteration_; }
  const TrainConfig& config() const { return config_; }
  const FieldSet& fields() const { return fields_; }
  FieldSet& fields() { return fields_; }
  const OccupancyGrid& occupancy() const { return occupancy_; }
  const std::vector<HistoryRow>& history() const { return history_; }
  const SceneBundle& scene() const { return scene_; }
  const std::vector<Image>& fg_regions() const { return fg_regions_; }

  // Settings for inference renders of the current state.
  RenderSettings render_settings() const;

  Checkpoint checkpoint() const;

 private:
  void update_occupancy();
  bool occupancy_active() const;

  const SceneBundle& scene_;
  TrainConfig config_;
  LossWeights weights_;
  FieldSet fields_;
  ad::Adam adam_;
  ad::GradStore<float> grads_;
  OccupancyGrid occupancy_;
  std::mt19937_64 rng_;
  std::vector<Image> fg_regions_;
  long iteration_ = 0;
  std::vector<HistoryRow> history_;
  // Window sums since the last history row.
  HistoryRow window_;
  long window_steps_ = 0;
  long window_mask_steps_ = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<HistoryRow> history;
};

// Runs a full training. When `checkpoint_path` is set, periodic checkpoints
// (config.checkpoint_every) and the final one are written there.
TrainResult train(const SceneBundle& scene, const TrainConfig& config,
                  const std::optional<std::filesystem::path>& checkpoint_path = std::nullopt);

// Rebuilds fields (and the occupancy grid) from a checkpoint.
FieldSet fields_from_checkpoint(const Checkpoint& checkpoint);
OccupancyGrid occupancy_from_checkpoint(const Checkpoint& checkpoint);

// Read-only inference state restored from a checkpoint.
class TrainedModel {
 public:
  explicit TrainedModel(const Checkpoint& checkpoint);

  const FieldSet& fields() const { return *fields_; }
  const RadianceField& field() const { return *field_; }
  const OccupancyGrid& occupancy() const { return occupancy_; }
  const TrainConfig& config() const { return config_; }
  const NormTransform& norm() const { return norm_; }
  // The occupancy grid is attached when it was active at save time and
  // `use_occupancy` is set.
  RenderSettings render_settings(bool use_occupancy = true) const;

 private:
  TrainConfig config_;
  std::unique_ptr<FieldSet> fields_;
  std::unique_ptr<NeuralField> field_;
  OccupancyGrid occupancy_;
  long iteration_ = 0;
  NormTransform norm_;
  Vec3 horizon_ = Vec3::Constant(0.5);
};

struct BTrajectory {
  std::vector<long> steps;
  std::vector<double> b;
  double initial = 0.0;
  double final = 0.0;
  // Fraction of 500-step windows over which b increased.
  double increasing_fraction = 0.0;
};

BTrajectory b_trajectory(const std::vector<HistoryRow>& history, long window = 500);

}  // namespace surfseg
