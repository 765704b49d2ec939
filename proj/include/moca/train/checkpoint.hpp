#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "moca/autodiff/tensor.hpp"
#include "moca/errors.hpp"

namespace moca::train {

// Checkpoint layout inside a directory:
//   manifest.json  {"format", "config", "step", "seeds", "params": [{name, shape, offset}], "blob"}
//   params.f32     every parameter in manifest order, row-major, f32 little endian.
// `offset` counts f32 elements from the start of the blob.
inline constexpr const char* kCheckpointFormat = "moca-ckpt-1";
inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kBlobName = "params.f32";

using NamedParams = std::vector<std::pair<std::string, ad::Tensor>>;

struct CheckpointMeta {
  nlohmann::json config;
  std::uint64_t step = 0;
  nlohmann::json seeds;
};

namespace detail {

inline void put_f32(std::string& out, float f) {
  const auto u = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
}

inline float get_f32(const unsigned char* p) {
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(u);
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& dir, const NamedParams& params, const CheckpointMeta& meta) {
  std::filesystem::create_directories(dir);
  std::string blob;
  nlohmann::json table = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : params) {
    table.push_back({{"name", name}, {"shape", {t.rows(), t.cols()}}, {"offset", offset}});
    for (double v : t.values()) detail::put_f32(blob, static_cast<float>(v));
    offset += t.size();
  }
  const nlohmann::json manifest = {{"format", kCheckpointFormat}, {"config", meta.config}, {"step", meta.step},
                                   {"seeds", meta.seeds},         {"params", table},       {"blob", kBlobName}};
  std::ofstream(dir / kBlobName, std::ios::binary).write(blob.data(), static_cast<std::streamsize>(blob.size()));
  std::ofstream(dir / kManifestName) << manifest.dump(2) << "\n";
}

struct LoadedCheckpoint {
  CheckpointMeta meta;
  std::map<std::string, std::pair<ad::Shape, std::vector<double>>> tensors;
};

inline LoadedCheckpoint read_checkpoint(const std::filesystem::path& dir) {
  std::ifstream mf(dir / kManifestName);
  if (!mf) throw CheckpointError("missing " + (dir / kManifestName).string());
  nlohmann::json m;
  try {
    mf >> m;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("unreadable checkpoint manifest: ") + e.what());
  }
  if (m.value("format", "") != kCheckpointFormat) throw CheckpointError("unknown checkpoint format in " + dir.string());
  std::ifstream bf(dir / m.value("blob", std::string(kBlobName)), std::ios::binary);
  if (!bf) throw CheckpointError("missing checkpoint blob in " + dir.string());
  const std::string blob((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());
  LoadedCheckpoint out;
  out.meta = {m.at("config"), m.value("step", std::uint64_t{0}), m.value("seeds", nlohmann::json::object())};
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
  for (const auto& p : m.at("params")) {
    const std::string name = p.at("name");
    const std::size_t r = p.at("shape").at(0).get<std::size_t>(), c = p.at("shape").at(1).get<std::size_t>();
    const std::size_t off = p.at("offset").get<std::size_t>();
    if ((off + r * c) * 4 > blob.size()) throw CheckpointError("parameter " + name + " runs past the end of the blob");
    std::vector<double> v(r * c);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = detail::get_f32(bytes + 4 * (off + i));
    out.tensors[name] = {{r, c}, std::move(v)};
  }
  return out;
}

// Copies checkpoint values into `params`. Every parameter must be present
// with the same shape; checkpoint entries whose name starts with one of
// `ignore_prefixes` may be absent from `params`.
inline void load_parameters(const LoadedCheckpoint& ck, NamedParams& params,
                            const std::vector<std::string>& ignore_prefixes = {}) {
  
  for (auto& [name, t] : params) {
    auto it = ck.tensors.find(name);
    if (it == ck.tensors.end()) throw CheckpointError("checkpoint lacks parameter " + name);
    const auto& [shape, vals] = it->second;
    if (shape != t.shape()) {
      throw CheckpointError("shape mismatch for " + name + ": checkpoint " + ad::shape_str(shape[0], shape[1]) +
                            ", model " + ad::shape_str(t.rows(), t.cols()));
    }
    auto dst = t.mutable_data();
    std::copy(vals.begin(), vals.end(), dst.begin());

  }
  for (const auto& [name, _] : ck.tensors) {
    bool known = false;
    for (const auto& [n, t] : params) known = known || n == name;
    bool ignorable = false;
    for (const auto& p : ignore_prefixes) ignorable = ignorable || name.rfind(p, 0) == 0;
    if (!known && !ignorable) throw CheckpointError("checkpoint has unexpected parameter " + name);
  }

}

// Rounds every parameter to f32 so the in-memory model equals what a
// checkpoint would hold.
inline void round_to_f32(NamedParams& params) {
  for (auto& [name, t] : params)
    for (double& v : t.mutable_data()) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace moca::train
