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

#include "wmguard/checkpoint.hpp"

#include <sstream>

#include "wmguard/util.hpp"

namespace wmguard {
namespace fs = std::filesystem;
namespace {

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) out += (i ? "," : "") + parts[i];
  return out;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string read_string(torch::serialize::InputArchive& a, const std::string& key) {
  c10::IValue v;
  if (!a.try_read(key, v) || !v.isString()) throw CheckpointError("checkpoint is missing " + key);
  return v.toStringRef();
}

int64_t read_int(torch::serialize::InputArchive& a, const std::string& key) {
  c10::IValue v;
  if (!a.try_read(key, v) || !v.isInt()) throw CheckpointError("checkpoint is missing " + key);
  return v.toInt();
}

CheckpointMeta read_meta(torch::serialize::InputArchive& a) {
  CheckpointMeta m;
  m.format_version = read_int(a, "meta/format_version");
  if (m.format_version != kCheckpointFormatVersion) {
    throw CheckpointError("unsupported checkpoint format version " + std::to_string(m.format_version) +
                          " (expected " + std::to_string(kCheckpointFormatVersion) + ")");
  }
  m.kind = read_string(a, "meta/kind");
  m.config_json = read_string(a, "meta/config");
  m.config_hash = read_string(a, "meta/config_hash");
  m.frozen = split(read_string(a, "meta/frozen"));
  m.step = read_int(a, "meta/step");
  m.epoch = read_int(a, "meta/epoch");
  return m;
}

torch::serialize::InputArchive open_archive(const fs::path& path) {
  if (!fs::exists(path)) throw CheckpointError("checkpoint not found: " + path.string());
  torch::serialize::InputArchive a;
  try {
    a.load_from(path.string());
  } catch (const c10::Error& e) {
    throw CheckpointError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  return a;
}

void load_section(torch::serialize::InputArchive& a, const std::string& key, torch::nn::Module& module) {
  torch::serialize::InputArchive sub;
  if (!a.try_read(key, sub)) throw CheckpointError("checkpoint has no section " + key);
  try {
    module.load(sub);
  } catch (const c10::Error& e) {
    throw CheckpointError("section " + key + " does not match the model: " + e.what_without_backtrace());
  }
}

}  // namespace

void save_checkpoint(const fs::path& path, const CheckpointMeta& meta, MpwVae& vae, ForensicNet* forensic,
                     torch::optim::Optimizer* optimizer) {
  torch::serialize::OutputArchive a;
  a.write("meta/format_version", c10::IValue(meta.format_version));
  a.write("meta/kind", c10::IValue(meta.kind));
  a.write("meta/config", c10::IValue(meta.config_json));
  a.write("meta/config_hash", c10::IValue(meta.config_hash));
  a.write("meta/frozen", c10::IValue(join(meta.frozen)));
  a.write("meta/step", c10::IValue(meta.step));
  a.write("meta/epoch", c10::IValue(meta.epoch));

  torch::serialize::OutputArchive enc, dec;
  vae->encoder()->save(enc);
  vae->decoder()->save(dec);
  a.write("mpw_vae/encoder", enc);
  a.write("mpw_vae/decoder", dec);
  if (meta.kind != "autoencoder") {
    torch::serialize::OutputArchive ad;
    vae->adapters()->save(ad);
    a.write("mpw_vae/adapters", ad);
  }
  if (forensic != nullptr && !forensic->is_empty()) {
    torch::serialize::OutputArchive f;
    (*forensic)->save(f);
    a.write("forensic", f);
  }
  if (optimizer != nullptr) {
    torch::serialize::OutputArchive o;
    optimizer->save(o);
    a.write("optimizer", o);
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  a.save_to(tmp.string());
  fs::rename(tmp, path);
}

CheckpointMeta read_checkpoint_meta(const fs::path& path) {
  auto a = open_archive(path);
  return read_meta(a);
}

CheckpointMeta load_checkpoint(const fs::path& path, MpwVae& vae, ForensicNet* forensic,
                               torch::optim::Optimizer* optimizer, const std::string& expected_hash) {
  auto a = open_archive(path);
  auto meta = read_meta(a);
  if (!expected_hash.empty() && meta.config_hash != expected_hash) {
    throw CheckpointError("checkpoint " + path.string() + " has config hash " + meta.config_hash + ", expected " +
                          expected_hash);
  }
  torch::NoGradGuard no_grad;
  load_section(a, "mpw_vae/encoder", *vae->encoder());
  load_section(a, "mpw_vae/decoder", *vae->decoder());
  if (meta.kind != "autoencoder") load_section(a, "mpw_vae/adapters", *vae->adapters());
  if (forensic != nullptr && !forensic->is_empty()) load_section(a, "forensic", **forensic);
  if (optimizer != nullptr) {
    torch::serialize::InputArchive o;
    if (!a.try_read("optimizer", o)) throw CheckpointError("checkpoint has no optimizer state");
    optimizer->load(o);
  }
  return meta;
}

LoadedRun open_checkpoint(const fs::path& path) {
  LoadedRun run;
  run.meta = read_checkpoint_meta(path);
  run.config = RunConfig::from_json(nlohmann::json::parse(run.meta.config_json));
  // A stale hash (e.g. written by an older code version) is reported, not fatal.
  run.hash_mismatch = run.config.hash() != run.meta.config_hash;
  run.vae = MpwVae(run.config.autoencoder, run.config.adapter);
  if (run.meta.kind == "stableguard") run.forensic = ForensicNet(run.config.forensic);
  load_checkpoint(path, run.vae, run.forensic.is_empty() ? nullptr : &run.forensic, nullptr);
  run.vae->freeze_autoencoder();
  run.vae->eval();
  if (!run.forensic.is_empty()) run.forensic->eval();
  return run;
}

}  // namespace wmguard
