// Copyright 2026 The BoxeR-lite Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "boxer/model/boxer_model.hpp"
#include "json.hpp"

namespace boxer {

/// Raised when a checkpoint cannot be read or does not fit the model.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kCheckpointMagic[4] = {'B', 'O', 'X', 'R'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class U>
void write_le(std::ostream& os, U v) {
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(bytes, sizeof(U));
}

template <class U>
U read_le(std::istream& is) {
  unsigned char bytes[sizeof(U)];
  is.read(reinterpret_cast<char*>(bytes), sizeof(U));
  if (!is) throw CheckpointError("truncated checkpoint");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace detail

/// Layout: magic "BOXR", u32 version, u64 manifest length, manifest JSON
/// (config, parameter names and shapes, caller extras), then every
/// parameter as little-endian float32 in manifest order.
template <class T>
void save_checkpoint(BoxerModel<T>& model, const std::string& path,
                     const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json manifest;
  manifest["config"] = model.config();
  manifest["extra"] = extra;
  nlohmann::json params = nlohmann::json::array();
  model.for_each_param([&](const std::string& name, Tensor<T>& t, ParamGroup) {
    params.push_back({{"name", name}, {"shape", t.shape()}});
  });
  manifest["params"] = params;
  const std::string text = manifest.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot write checkpoint " + path);
  os.write(kCheckpointMagic, 4);
  detail::write_le<std::uint32_t>(os, kCheckpointVersion);
  detail::write_le<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  model.for_each_param([&](const std::string&, Tensor<T>& t, ParamGroup) {
    for (T v : t.data()) detail::write_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  });
  if (!os) throw CheckpointError("failed writing checkpoint " + path);
}

struct CheckpointHeader {
  ModelConfig config;
  nlohmann::json manifest;
};

inline CheckpointHeader read_checkpoint_header(std::istream& is, const std::string& path) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw CheckpointError(path + " is not a checkpoint");
  const auto version = detail::read_le<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw CheckpointError(path + ": checkpoint version " + std::to_string(version) +
                          ", expected " + std::to_string(kCheckpointVersion));
  const auto len = detail::read_le<std::uint64_t>(is);
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw CheckpointError(path + ": truncated manifest");
  CheckpointHeader h;
  try {
    h.manifest = nlohmann::json::parse(text);
    h.config = h.manifest.at("config").get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path + ": bad manifest: " + e.what());
  }
  return h;
}

/// Rebuilds the model described by the checkpoint and loads its weights.
template <class T>
BoxerModel<T> load_checkpoint(const std::string& path, nlohmann::json* extra = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path);
  CheckpointHeader h = read_checkpoint_header(is, path);
  BoxerModel<T> model(h.config, 0);
  const auto& params = h.manifest.at("params");
  std::size_t index = 0;
  model.for_each_param([&](const std::string& name, Tensor<T>& t, ParamGroup) {
    if (index >= params.size() || params[index].at("name") != name ||
        params[index].at("shape").get<Shape>() != t.shape())
      throw CheckpointError(path + ": parameter '" + name + "' does not match the manifest");
    for (auto& v : t.mutable_data())
      v = static_cast<T>(std::bit_cast<float>(detail::read_le<std::uint32_t>(is)));
    ++index;
  });
  if (index != params.size()) throw CheckpointError(path + ": manifest lists extra parameters");
  if (extra) *extra = h.manifest.at("extra");
  return model;
}

}  // namespace boxer
