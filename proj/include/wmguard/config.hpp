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

// Run configuration shared by every CLI command. A config is hashed from its
// canonical JSON form; checkpoints and reports carry that hash.

#ifndef WMGUARD_CONFIG_HPP_
#define WMGUARD_CONFIG_HPP_

#include <filesystem>
#include <string>

#include "json.hpp"

#include "wmguard/losses.hpp"
#include "wmguard/moe_gfn.hpp"
#include "wmguard/mpw_vae.hpp"
#include "wmguard/tamper_synth.hpp"

namespace wmguard {

struct PretrainConfig {
  int64_t epochs = 10;
  double lr = 2e-3;
  int64_t batch_size = 8;
  double target_psnr = 28.0;  // exit criterion on the training corpus
};

struct TrainConfig {
  double lr = 1e-4;
  int64_t batch_size = 8;
  int64_t epochs = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // <= 0 disables clipping
  int64_t checkpoint_every = 500;
  // Warm-up of the similarity and tamper terms: zero for the first
  // `warmup_hold` steps, then log-linear from `warmup_floor` to 1 over
  // `warmup_ramp` steps. hold = ramp = 0 optimizes the plain sum throughout.
  int64_t warmup_hold = 150;
  int64_t warmup_ramp = 300;
  double warmup_floor = 1e-3;
};

struct DataConfig {
  // PNG folder; empty means the procedural corpus below.
  std::string corpus_dir;
  int64_t synth_count = 2200;
  uint64_t synth_seed = 1;
  // Last `holdout` images are held out from training.
  int64_t holdout = 200;
};

struct RunConfig {
  uint64_t seed = 0;
  int64_t image_size = 64;
  int64_t bit_length = 32;
  AutoencoderConfig autoencoder;
  AdapterConfig adapter;
  ForensicConfig forensic;
  LossConfig loss;
  SpliceConfig splice;
  TrainConfig train;
  PretrainConfig pretrain;
  DataConfig data;

  // Copies image_size/bit_length into the nested configs and validates all.
  void finalize();
  void validate() const;

  nlohmann::json to_json() const;
  // Unknown keys are rejected; missing keys keep defaults.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);

  // FNV-1a of the canonical (sorted-key, compact) JSON.
  std::string hash() const;
  // Hash of the autoencoder-relevant subset, so a pretrained autoencoder is
  // reused across runs that only change the watermark/forensic side.
  std::string autoencoder_hash() const;
};

}  // namespace wmguard

#endif  // WMGUARD_CONFIG_HPP_
