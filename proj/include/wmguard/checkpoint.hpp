// Copyright 2026 The wmguard Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Checkpoint format: a torch serialize archive with
//   meta/format_version  int
//   meta/kind            "autoencoder" | "stableguard"
//   meta/config          canonical run config JSON
//   meta/config_hash     hash of meta/config
//   meta/frozen          comma-separated frozen parameter groups
//   meta/step, meta/epoch
//   mpw_vae/...          parameters keyed by module path
//   forensic/...         (stableguard only)
//   optimizer/...        (optional, for resume)

#ifndef WMGUARD_CHECKPOINT_HPP_
#define WMGUARD_CHECKPOINT_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "wmguard/config.hpp"
#include "wmguard/moe_gfn.hpp"
#include "wmguard/mpw_vae.hpp"

namespace wmguard {

inline constexpr int64_t kCheckpointFormatVersion = 1;

struct CheckpointMeta {
  int64_t format_version = kCheckpointFormatVersion;
  std::string kind;
  std::string config_json;
  std::string config_hash;
  std::vector<std::string> frozen;
  int64_t step = 0;
  int64_t epoch = 0;
};

struct CheckpointContents {
  MpwVae vae{nullptr};
  ForensicNet forensic{nullptr};  // null for autoencoder checkpoints
};

// Atomic write (temporary file then rename). `forensic` and `optimizer` may
// be null.
void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta, MpwVae& vae,
                     ForensicNet* forensic, torch::optim::Optimizer* optimizer);

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

// Loads weights into already-constructed models. Throws CheckpointError on a
// version mismatch, a config-hash mismatch (when `expected_hash` is non-empty)
// or a missing section.
CheckpointMeta load_checkpoint(const std::filesystem::path& path, MpwVae& vae, ForensicNet* forensic,
                               torch::optim::Optimizer* optimizer, const std::string& expected_hash = "");

// Builds models from the config stored in the checkpoint and loads them.
struct LoadedRun {
  RunConfig config;
  CheckpointMeta meta;
  MpwVae vae{nullptr};
  ForensicNet forensic{nullptr};
  bool hash_mismatch = false;  // stored config no longer hashes to meta.config_hash
};
LoadedRun open_checkpoint(const std::filesystem::path& path);

}  // namespace wmguard

#endif  // WMGUARD_CHECKPOINT_HPP_
