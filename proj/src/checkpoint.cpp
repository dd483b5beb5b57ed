// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "surfseg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace surfseg {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");

void put_floats(std::string& out, const std::vector<float>& v) {
  const std::size_t at = out.size();
  out.resize(at + v.size() * sizeof(float));
  if (!v.empty()) std::memcpy(out.data() + at, v.data(), v.size() * sizeof(float));
}

class BlobReader {
 public:
  BlobReader(const std::string& bytes, std::size_t pos) : bytes_(bytes), pos_(pos) {}
  std::vector<float> take(std::size_t count) {
    const std::size_t n = count * sizeof(float);
    if (pos_ + n > bytes_.size()) throw ParseError("checkpoint: truncated blob data");
    std::vector<float> v(count);
    if (n) std::memcpy(v.data(), bytes_.data() + pos_, n);
    pos_ += n;
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_;
};

}  // namespace

std::string Checkpoint::serialize() const {
  if (adam_m.size() != tensors.size() || adam_v.size() != tensors.size()) {
    throw ContractError("checkpoint: optimizer state does not match the tensors");
  }
  json shapes = json::array();
  for (const auto& t : tensors) {
    if (t.values.size() != static_cast<std::size_t>(t.rows) * t.cols) {
      throw ContractError("checkpoint: tensor '" + t.name + "' has inconsistent size");
    }
    shapes.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
  }
  const json header = {
      {"format", "surfseg-checkpoint"},
      {"version", version},
      {"config", json::parse(config.to_json_string())},
      {"tensors", shapes},
      {"adam_steps", adam_steps},
      {"occupancy", {{"resolution", occupancy_resolution},
                     {"initialized", occupancy_initialized},
                     {"count", occupancy.size()}}},
      {"iteration", iteration},
      {"rng_state", rng_state},
      {"norm", {{"scale", norm.scale},
                {"translation", {norm.translation.x(), norm.translation.y(), norm.translation.z()}}}},
      {"horizon", {horizon.x(), horizon.y(), horizon.z()}},
      {"blobs", {"params", "adam_m", "adam_v", "occupancy"}}};
  std::string out = header.dump();
  out.push_back('\n');
  for (const auto& t : tensors) put_floats(out, t.values);
  for (const auto& m : adam_m) put_floats(out, m);
  for (const auto& v : adam_v) put_floats(out, v);
  put_floats(out, occupancy);
  return out;
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  const std::size_t nl = bytes.find('\n');
  if (nl == std::string::npos) throw ParseError("checkpoint: missing header line");
  json h;
  try {
    h = json::parse(bytes.substr(0, nl));
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
  Checkpoint c;
  try {
    if (h.at("format") != "surfseg-checkpoint") throw ParseError("checkpoint: unknown format");
    c.version = h.at("version").get<int>();
    if (c.version != kCheckpointVersion) {
      throw ParseError("checkpoint: unsupported version " + std::to_string(c.version));
    }
    c.config = TrainConfig::from_json_string(h.at("config").dump());
    c.adam_steps = h.at("adam_steps").get<long>();
    c.occupancy_resolution = h.at("occupancy").at("resolution").get<int>();
    c.occupancy_initialized = h.at("occupancy").at("initialized").get<bool>();
    const std::size_t occ_count = h.at("occupancy").at("count").get<std::size_t>();
    c.iteration = h.at("iteration").get<long>();
    c.rng_state = h.at("rng_state").get<std::string>();
    c.norm.scale = h.at("norm").at("scale").get<double>();
    for (int a = 0; a < 3; ++a) {
      c.norm.translation[a] = h.at("norm").at("translation").at(a).get<double>();
      c.horizon[a] = h.at("horizon").at(a).get<double>();
    }
    BlobReader reader(bytes, nl + 1);
    for (const auto& s : h.at("tensors")) {
      ad::Tensor t;
      t.name = s.at("name").get<std::string>();
      t.rows = s.at("rows").get<int>();
      t.cols = s.at("cols").get<int>();
      c.tensors.push_back(std::move(t));
    }
    for (auto& t : c.tensors) t.values = reader.take(static_cast<std::size_t>(t.rows) * t.cols);
    for (const auto& t : c.tensors) c.adam_m.push_back(reader.take(t.values.size()));
    for (const auto& t : c.tensors) c.adam_v.push_back(reader.take(t.values.size()));
    c.occupancy = reader.take(occ_count);
    if (!reader.done()) throw ParseError("checkpoint: trailing bytes after the last blob");
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
  return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const std::string bytes = serialize();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

}  // namespace surfseg
