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

#include "wmguard/config.hpp"

#include <algorithm>
#include <vector>

#include "wmguard/util.hpp"

namespace wmguard {
namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::vector<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown key " + (where.empty() ? key : where + "." + key));
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for ") + key + ": " + e.what());
  }
}

}  // namespace

void RunConfig::finalize() {
  adapter.bit_length = bit_length;
  forensic.bit_length = bit_length;
  forensic.image_size = image_size;
  validate();
}

void RunConfig::validate() const {
  if (image_size <= 0 || image_size % 16 != 0) throw ConfigError("image_size must be a positive multiple of 16");
  if (bit_length <= 0) throw ConfigError("bit_length must be positive");
  autoencoder.validate();
  adapter.validate();
  forensic.validate();
  if (loss.lambda0 < 0 || loss.lambda0 > 1) throw ConfigError("loss.lambda0 must lie in [0,1]");
  if (!(loss.lambda1 > 0) || !(loss.lambda2 > 0)) throw ConfigError("loss.lambda1 and lambda2 must be > 0");
  splice.validate();
  if (!(train.lr > 0)) throw ConfigError("train.lr must be > 0");
  if (train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (train.epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (train.checkpoint_every < 1) throw ConfigError("train.checkpoint_every must be >= 1");
  if (train.warmup_hold < 0 || train.warmup_ramp < 0) throw ConfigError("train warm-up lengths must be >= 0");
  if (!(train.warmup_floor > 0) || train.warmup_floor > 1) throw ConfigError("train.warmup_floor must lie in (0,1]");
  if (!(pretrain.lr > 0) || pretrain.batch_size < 1 || pretrain.epochs < 1) {
    throw ConfigError("pretrain lr, batch_size and epochs must be positive");
  }
  if (data.holdout < 0) throw ConfigError("data.holdout must be >= 0");
  if (data.corpus_dir.empty() && data.synth_count <= data.holdout) {
    throw ConfigError("data.synth_count must exceed data.holdout");
  }
}

json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["image_size"] = image_size;
  j["bit_length"] = bit_length;
  j["autoencoder"] = autoencoder;
  j["adapter"] = adapter;
  j["forensic"] = forensic;
  j["loss"] = loss;
  j["splice"] = splice;
  j["train"] = {{"lr", train.lr},
                {"batch_size", train.batch_size},
                {"epochs", train.epochs},
                {"betas", {train.beta1, train.beta2}},
                {"eps", train.eps},
                {"clip_norm", train.clip_norm},
                {"checkpoint_every", train.checkpoint_every},
                {"warmup_hold", train.warmup_hold},
                {"warmup_ramp", train.warmup_ramp},
                {"warmup_floor", train.warmup_floor}};
  j["pretrain"] = {{"epochs", pretrain.epochs},
                   {"lr", pretrain.lr},
                   {"batch_size", pretrain.batch_size},
                   {"target_psnr", pretrain.target_psnr}};
  j["data"] = {{"corpus_dir", data.corpus_dir},
               {"synth_count", data.synth_count},
               {"synth_seed", data.synth_seed},
               {"holdout", data.holdout}};
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  reject_unknown(j, {"seed", "image_size", "bit_length", "autoencoder", "adapter", "forensic", "loss", "splice",
                     "train", "pretrain", "data"},
                 "");
  read(j, "seed", c.seed);
  read(j, "image_size", c.image_size);
  read(j, "bit_length", c.bit_length);
  if (j.contains("autoencoder")) c.autoencoder = j.at("autoencoder").get<AutoencoderConfig>();
  if (j.contains("adapter")) c.adapter = j.at("adapter").get<AdapterConfig>();
  // bit_length/image_size must be in place before the forensic config validates.
  c.forensic.bit_length = c.bit_length;
  c.forensic.image_size = c.image_size;
  if (j.contains("forensic")) wmguard::from_json(j.at("forensic"), c.forensic);
  if (j.contains("loss")) c.loss = j.at("loss").get<LossConfig>();
  if (j.contains("splice")) c.splice = j.at("splice").get<SpliceConfig>();
  if (j.contains("train")) {
    const auto& t = j.at("train");
    reject_unknown(t, {"lr", "batch_size", "epochs", "betas", "eps", "clip_norm", "checkpoint_every", "warmup_hold",
                       "warmup_ramp", "warmup_floor"},
                   "train");
    read(t, "lr", c.train.lr);
    read(t, "batch_size", c.train.batch_size);
    read(t, "epochs", c.train.epochs);
    if (t.contains("betas")) {
      const auto b = t.at("betas").get<std::vector<double>>();
      if (b.size() != 2) throw ConfigError("train.betas must be [beta1, beta2]");
      c.train.beta1 = b[0];
      c.train.beta2 = b[1];
    }
    read(t, "eps", c.train.eps);
    read(t, "clip_norm", c.train.clip_norm);
    read(t, "checkpoint_every", c.train.checkpoint_every);
    read(t, "warmup_hold", c.train.warmup_hold);
    read(t, "warmup_ramp", c.train.warmup_ramp);
    read(t, "warmup_floor", c.train.warmup_floor);
  }
  if (j.contains("pretrain")) {
    const auto& p = j.at("pretrain");
    reject_unknown(p, {"epochs", "lr", "batch_size", "target_psnr"}, "pretrain");
    read(p, "epochs", c.pretrain.epochs);
    read(p, "lr", c.pretrain.lr);
    read(p, "batch_size", c.pretrain.batch_size);
    read(p, "target_psnr", c.pretrain.target_psnr);
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    reject_unknown(d, {"corpus_dir", "synth_count", "synth_seed", "holdout"}, "data");
    read(d, "corpus_dir", c.data.corpus_dir);
    read(d, "synth_count", c.data.synth_count);
    read(d, "synth_seed", c.data.synth_seed);
    read(d, "holdout", c.data.holdout);
  }
  c.finalize();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

std::string RunConfig::hash() const { return hash_hex(to_json().dump()); }

std::string RunConfig::autoencoder_hash() const {
  const auto full = to_json();
  const json subset = {{"image_size", full["image_size"]},
                       {"autoencoder", full["autoencoder"]},
                       {"pretrain", full["pretrain"]},
                       {"data", full["data"]},
                       {"seed", full["seed"]}};
  return hash_hex(subset.dump());
}

}  // namespace wmguard
