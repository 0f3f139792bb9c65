#pragma once

// Checkpoint = JSON manifest (model.json) + little-endian float32 blob
// (model.bin). Blob order, per layer: conv weights (out,in,ky,kx), conv bias,
// batchnorm running mean, running variance.

#include <skywatch/core/error.hpp>
#include <skywatch/imagery/png_io.hpp>
#include <skywatch/net/model.hpp>

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

namespace skywatch::net {

namespace fs = std::filesystem;

inline constexpr const char* kCheckpointFormat = "skywatch-fcn-v1";

struct CheckpointInfo {
  std::uint64_t rng_seed = 0;
  std::int64_t adam_step = 0;
};

inline nlohmann::json layer_to_json(const LayerSpec& l)
{
  return {{"kind", to_string(l.kind)},     {"kernel", l.kernel},
          {"in_channels", l.in_channels},  {"out_channels", l.out_channels},
          {"padding_mode", to_string(l.padding)}, {"has_bias", l.has_bias}};
}

inline LayerSpec layer_from_json(const nlohmann::json& j)
{
  try {
    LayerSpec l;
    l.kind = layer_kind_from_string(j.at("kind").get<std::string>());
    l.kernel = j.at("kernel").get<int>();
    l.in_channels = j.at("in_channels").get<int>();
    l.out_channels = j.at("out_channels").get<int>();
    l.padding = padding_from_string(j.at("padding_mode").get<std::string>());
    l.has_bias = j.at("has_bias").get<bool>();
    return l;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, std::string("bad layer spec: ") + e.what());
  }
}

namespace checkpoint_detail {

inline std::uint32_t to_little(std::uint32_t v)
{
  if constexpr (std::endian::native == std::endian::big)
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  return v;
}

inline void append(std::vector<std::uint8_t>& blob, const std::vector<float>& values)
{
  for (float f : values) {
    const std::uint32_t le = to_little(std::bit_cast<std::uint32_t>(f));
    std::uint8_t bytes[4];
    std::memcpy(bytes, &le, 4);
    blob.insert(blob.end(), bytes, bytes + 4);
  }
}

inline void take(const std::vector<std::uint8_t>& blob, std::size_t& pos, std::vector<float>& values)
{
  for (float& f : values) {
    std::uint32_t le;
    std::memcpy(&le, blob.data() + pos, 4);
    f = std::bit_cast<float>(to_little(le));
    pos += 4;
  }
}

inline std::size_t expected_floats(const FcnModel<float>& m)
{
  std::size_t n = 0;
  for (const auto& s : m.state)
    n += s.weight.size() + s.bias.size() + s.running_mean.size() + s.running_var.size();
  return n;
}

}  // namespace checkpoint_detail

inline void save_checkpoint(const FcnModel<float>& model, const fs::path& dir, std::int64_t adam_step = 0)
{
  fs::create_directories(dir);
  std::vector<std::uint8_t> blob;
  for (const auto& s : model.state) {
    checkpoint_detail::append(blob, s.weight);
    checkpoint_detail::append(blob, s.bias);
    checkpoint_detail::append(blob, s.running_mean);
    checkpoint_detail::append(blob, s.running_var);
  }
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : model.layers)
    layers.push_back(layer_to_json(l));
  const nlohmann::json manifest = {{"format", kCheckpointFormat},
                                   {"layers", layers},
                                   {"rng_seed", model.rng_seed},
                                   {"adam_step", adam_step},
                                   {"blob", "model.bin"},
                                   {"blob_floats", blob.size() / 4}};
  const std::string text = manifest.dump(1) + "\n";
  imagery::write_file_bytes(dir / "model.json", text.data(), text.size());
  imagery::write_file_bytes(dir / "model.bin", blob.data(), blob.size());
}

inline FcnModel<float> load_checkpoint(const fs::path& dir, CheckpointInfo* info = nullptr)
{
  const fs::path manifest_path = dir / "model.json";
  if (!fs::exists(manifest_path))
    fail(ErrorCode::io, "checkpoint manifest not found: " + manifest_path.string());
  nlohmann::json manifest;
  {
    std::ifstream in(manifest_path);
    try {
      manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorCode::format, std::string("corrupt checkpoint manifest: ") + e.what());
    }
  }
  std::vector<LayerSpec> layers;
  std::string blob_name = "model.bin";
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  try {
    for (const auto& l : manifest.at("layers"))
      layers.push_back(layer_from_json(l));
    seed = manifest.at("rng_seed").get<std::uint64_t>();
    step = manifest.at("adam_step").get<std::int64_t>();
    if (manifest.contains("blob"))
      blob_name = manifest.at("blob").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, std::string("bad checkpoint manifest: ") + e.what());
  }
  FcnModel<float> model = make_model<float>(layers);
  model.rng_seed = seed;
  const auto blob = imagery::read_file_bytes(dir / blob_name);
  const std::size_t expected = checkpoint_detail::expected_floats(model);
  if (blob.size() != expected * 4)
    fail(ErrorCode::format, "checkpoint blob holds " + std::to_string(blob.size()) + " bytes, manifest implies " +
                                std::to_string(expected * 4));
  std::size_t pos = 0;
  for (auto& s : model.state) {
    checkpoint_detail::take(blob, pos, s.weight);
    checkpoint_detail::take(blob, pos, s.bias);
    checkpoint_detail::take(blob, pos, s.running_mean);
    checkpoint_detail::take(blob, pos, s.running_var);
  }
  if (info)
    *info = {seed, step};
  return model;
}

}  // namespace skywatch::net
