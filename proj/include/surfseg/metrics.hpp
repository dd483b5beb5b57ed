// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "surfseg/image.hpp"

namespace surfseg {

struct ViewMetrics {
  double sad = 0.0;
  double mse = 0.0;
  double iou = 0.0;  // foreground IoU; 1 when both masks are empty
  double acc = 0.0;
};

// SAD_v = sum|a - m| / sad_divisor, MSE_v = mean (a - m)^2 * mse_factor.
struct MetricScales {
  double sad_divisor = 1000.0;
  double mse_factor = 1000.0;
};

struct EvalReport {
  std::vector<std::string> names;
  std::vector<ViewMetrics> views;
  ViewMetrics mean;
  double threshold = 0.5;
  MetricScales scales;

  std::size_t view_count() const { return views.size(); }
  std::string to_json() const;
  std::string to_table() const;
};

// Predictions are alpha maps in [0,1]; ground truth is binary (> 0.5 counts
// as foreground). Throws ContractError on list-length or size mismatches.
EvalReport evaluate(const std::vector<Image>& pred_alpha, const std::vector<Image>& gt_mask,
                    double threshold = 0.5, const MetricScales& scales = {},
                    const std::vector<std::string>& names = {});

ViewMetrics evaluate_view(const Image& pred_alpha, const Image& gt_mask, double threshold = 0.5,
                          const MetricScales& scales = {});

}  // namespace surfseg
