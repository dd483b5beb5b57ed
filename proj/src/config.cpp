// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "surfseg/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace surfseg {

using nlohmann::json;

void TrainConfig::validate() const {
  if (iterations < 1) throw ContractError("iterations must be >= 1");
  if (batch_rays < 1) throw ContractError("batch_rays must be >= 1");
  if (!(lr > 0.0)) throw ContractError("lr must be positive");
  if (warmup_steps < 0) throw ContractError("warmup_steps must be >= 0");
  if (!(grad_clip > 0.0)) throw ContractError("grad_clip must be positive");
  if (n_focor < 2 || n_baco < 2) throw ContractError("sample counts must be >= 2");
  if (checkpoint_every < 0) throw ContractError("checkpoint_every must be >= 0");
  if (log_every < 1) throw ContractError("log_every must be >= 1");
  if (occupancy_warmup < 0) throw ContractError("occupancy_warmup must be >= 0");
  if (mask_dilation < 0) throw ContractError("mask_dilation must be >= 0");
  loss.validate();
  occupancy.validate();
  fields.validate();
}

long TrainConfig::effective_mask_phase_end() const {
  return mask_phase_end >= 0 ? mask_phase_end : iterations / 5;
}

LossWeights TrainConfig::effective_loss() const {
  LossWeights w = loss;
  w.mask_phase_end = effective_mask_phase_end();
  return w;
}

namespace {

// Reads known keys from an object and rejects anything else.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ParseError(where_ + ": expected an object");
  }
  ~Reader() = default;

  template <class V>
  void get(const char* key, V& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<V>();
    } catch (const json::exception& e) {
      throw ParseError(where_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ParseError(where_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_grid(const json& j, const std::string& where, HashGridConfig& g) {
  Reader r(j, where);
  r.get("levels", g.levels);
  r.get("features_per_level", g.features_per_level);
  r.get("table_size", g.table_size);
  r.get("n_min", g.n_min);
  r.get("n_max", g.n_max);
  r.finish();
}

json grid_json(const HashGridConfig& g) {
  return {{"levels", g.levels},
          {"features_per_level", g.features_per_level},
          {"table_size", g.table_size},
          {"n_min", g.n_min},
          {"n_max", g.n_max}};
}

}  // namespace

TrainConfig TrainConfig::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  TrainConfig c;
  Reader r(j, "config");
  r.get("iterations", c.iterations);
  r.get("batch_rays", c.batch_rays);
  r.get("lr", c.lr);
  r.get("warmup_steps", c.warmup_steps);
  r.get("grad_clip", c.grad_clip);
  r.get("seed", c.seed);
  r.get("mask_phase_end", c.mask_phase_end);
  r.get("n_focor", c.n_focor);
  r.get("n_baco", c.n_baco);
  r.get("checkpoint_every", c.checkpoint_every);
  r.get("log_every", c.log_every);
  r.get("use_occupancy", c.use_occupancy);
  r.get("occupancy_warmup", c.occupancy_warmup);
  r.get("use_masks", c.use_masks);
  r.get("mask_dilation", c.mask_dilation);
  if (const json* l = r.child("loss")) {
    Reader lr(*l, "config.loss");
    lr.get("eikonal", c.loss.eikonal);
    lr.get("sparsity", c.loss.sparsity);
    lr.get("tau", c.loss.tau);
    lr.get("mask", c.loss.mask);
    lr.finish();
  }
  if (const json* o = r.child("occupancy")) {
    Reader orr(*o, "config.occupancy");
    orr.get("resolution", c.occupancy.resolution);
    orr.get("decay", c.occupancy.decay);
    orr.get("threshold", c.occupancy.threshold);
    orr.get("update_period", c.occupancy.update_period);
    orr.finish();
  }
  if (const json* f = r.child("fields")) {
    Reader fr(*f, "config.fields");
    if (const json* g = fr.child("focor_grid")) read_grid(*g, "config.fields.focor_grid", c.fields.focor_grid);
    if (const json* g = fr.child("baco_grid")) read_grid(*g, "config.fields.baco_grid", c.fields.baco_grid);
    fr.get("hidden", c.fields.hidden);
    fr.get("init_radius", c.fields.init_radius);
    fr.get("baco_init_radius", c.fields.baco_init_radius);
    fr.get("init_beta", c.fields.init_beta);
    fr.get("normal_eps", c.fields.normal_eps);
    fr.finish();
  }
  r.finish();
  c.fields.seed = c.seed;
  c.validate();
  return c;
}

TrainConfig TrainConfig::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json_string(ss.str());
}

std::string TrainConfig::to_json_string() const {
  const json j = {
      {"iterations", iterations},
      {"batch_rays", batch_rays},
      {"lr", lr},
      {"warmup_steps", warmup_steps},
      {"grad_clip", grad_clip},
      {"seed", seed},
      {"mask_phase_end", mask_phase_end},
      {"n_focor", n_focor},
      {"n_baco", n_baco},
      {"checkpoint_every", checkpoint_every},
      {"log_every", log_every},
      {"use_occupancy", use_occupancy},
      {"occupancy_warmup", occupancy_warmup},
      {"use_masks", use_masks},
      {"mask_dilation", mask_dilation},
      {"loss", {{"eikonal", loss.eikonal}, {"sparsity", loss.sparsity}, {"tau", loss.tau},
                {"mask", loss.mask}}},
      {"occupancy", {{"resolution", occupancy.resolution}, {"decay", occupancy.decay},
                     {"threshold", occupancy.threshold},
                     {"update_period", occupancy.update_period}}},
      {"fields", {{"focor_grid", grid_json(fields.focor_grid)},
                  {"baco_grid", grid_json(fields.baco_grid)},
                  {"hidden", fields.hidden},
                  {"init_radius", fields.init_radius},
                  {"baco_init_radius", fields.baco_init_radius},
                  {"init_beta", fields.init_beta},
                  {"normal_eps", fields.normal_eps}}}};
  return j.dump();
}

}  // namespace surfseg
