// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "surfseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "surfseg/common.hpp"
#include "surfseg/parallel.hpp"

namespace surfseg {

ViewMetrics evaluate_view(const Image& pred_alpha, const Image& gt_mask, double threshold,
                          const MetricScales& scales) {
  if (pred_alpha.width != gt_mask.width || pred_alpha.height != gt_mask.height) {
    throw ContractError("prediction is " + std::to_string(pred_alpha.width) + "x" +
                        std::to_string(pred_alpha.height) + " but ground truth is " +
                        std::to_string(gt_mask.width) + "x" + std::to_string(gt_mask.height));
  }
  if (pred_alpha.channels != 1 || gt_mask.channels != 1) {
    throw ContractError("evaluate expects single-channel maps");
  }
  const std::size_t n = pred_alpha.data.size();
  if (n == 0) throw ContractError("evaluate on an empty map");
  double abs_sum = 0.0, sq_sum = 0.0;
  std::size_t inter = 0, uni = 0, correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = pred_alpha.data[i];
    const bool g = gt_mask.data[i] > 0.5f;
    const double d = a - (g ? 1.0 : 0.0);
    abs_sum += std::abs(d);
    sq_sum += d * d;
    const bool p = a >= threshold;
    inter += (p && g);
    uni += (p || g);
    correct += (p == g);
  }
  ViewMetrics m;
  m.sad = abs_sum / scales.sad_divisor;
  m.mse = sq_sum / static_cast<double>(n) * scales.mse_factor;
  m.iou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  m.acc = static_cast<double>(correct) / static_cast<double>(n);
  return m;
}

EvalReport evaluate(const std::vector<Image>& pred_alpha, const std::vector<Image>& gt_mask,
                    double threshold, const MetricScales& scales,
                    const std::vector<std::string>& names) {
  if (pred_alpha.size() != gt_mask.size()) {
    throw ContractError("got " + std::to_string(pred_alpha.size()) + " predictions but " +
                        std::to_string(gt_mask.size()) + " ground-truth masks");
  }
  if (pred_alpha.empty()) throw ContractError("evaluate needs at least one view");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ContractError("threshold must lie in (0,1)");
  if (!names.empty() && names.size() != pred_alpha.size()) throw ContractError("name count mismatch");

  EvalReport r;
  r.threshold = threshold;
  r.scales = scales;
  r.views.resize(pred_alpha.size());
  parallel_for(0, pred_alpha.size(), 1, [&](std::size_t b, std::size_t e) {
    for (std::size_t v = b; v < e; ++v) r.views[v] = evaluate_view(pred_alpha[v], gt_mask[v], threshold, scales);
  });
  for (std::size_t v = 0; v < r.views.size(); ++v) {
    r.names.push_back(names.empty() ? "view" + std::to_string(v) : names[v]);
    r.mean.sad += r.views[v].sad;
    r.mean.mse += r.views[v].mse;
    r.mean.iou += r.views[v].iou;
    r.mean.acc += r.views[v].acc;
  }
  const double count = static_cast<double>(r.views.size());
  r.mean.sad /= count;
  r.mean.mse /= count;
  r.mean.iou /= count;
  r.mean.acc /= count;
  return r;
}

std::string EvalReport::to_json() const {
  using nlohmann::json;
  auto row = [](const ViewMetrics& m) {
    return json{{"sad", m.sad}, {"mse", m.mse}, {"miou", m.iou}, {"acc", m.acc}};
  };
  json views_json = json::array();
  for (std::size_t v = 0; v < views.size(); ++v) {
    json j = row(views[v]);
    j["name"] = names[v];
    views_json.push_back(j);
  }
  const json out = {{"view_count", views.size()},
                    {"threshold", threshold},
                    {"sad_divisor", scales.sad_divisor},
                    {"mse_factor", scales.mse_factor},
                    {"mean", row(mean)},
                    {"views", views_json}};
  return out.dump(2) + "\n";
}

std::string EvalReport::to_table() const {
  std::size_t width = 4;
  for (const auto& n : names) width = std::max(width, n.size());
  std::ostringstream ss;
  char buf[256];
  auto line = [&](const std::string& name, const ViewMetrics& m) {
    std::snprintf(buf, sizeof buf, "%-*s %10.4f %10.4f %8.4f %8.4f\n", static_cast<int>(width),
                  name.c_str(), m.sad, m.mse, m.iou, m.acc);
    ss << buf;
  };
  std::snprintf(buf, sizeof buf, "%-*s %10s %10s %8s %8s\n", static_cast<int>(width), "view", "SAD",
                "MSE", "mIoU", "Acc");
  ss << buf;
  for (std::size_t v = 0; v < views.size(); ++v) line(names[v], views[v]);
  line("mean", mean);
  return ss.str();
}

}  // namespace surfseg
