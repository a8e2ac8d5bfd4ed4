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

// wmguard command line tool.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
// Relative output paths are resolved against $WMGUARD_OUTPUT_ROOT when set.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "wmguard/attacks.hpp"
#include "wmguard/checkpoint.hpp"
#include "wmguard/image_io.hpp"
#include "wmguard/metrics.hpp"
#include "wmguard/pipeline.hpp"
#include "wmguard/report.hpp"
#include "wmguard/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace wmguard;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

class UsageError : public Error {
 public:
  using Error::Error;
};

fs::path output_path(const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) {
    if (const char* root = std::getenv("WMGUARD_OUTPUT_ROOT"); root && *root) return fs::path(root) / path;
  }
  return path;
}

void require_exists(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw UsageError(std::string(what) + " not found: " + p.string());
}

void log_line(const std::string& s) { std::fprintf(stderr, "%s\n", s.c_str()); }

RunConfig load_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  require_exists(path, "config");
  auto cfg = RunConfig::load(path);
  cfg.validate();
  return cfg;
}

LoadedRun open_run(const fs::path& ckpt, const std::string& config_path) {
  require_exists(ckpt, "checkpoint");
  auto run = open_checkpoint(ckpt);
  if (run.hash_mismatch) log_line("warning: checkpoint config hash " + run.meta.config_hash + " is stale");
  if (!config_path.empty()) {
    const auto cfg = load_config(config_path);
    if (cfg.hash() != run.meta.config_hash) {
      log_line("warning: config " + config_path + " (hash " + cfg.hash() + ") differs from checkpoint hash " +
               run.meta.config_hash + "; using the checkpoint's config");
    }
  }
  if (run.forensic.is_empty()) throw UsageError(ckpt.string() + " holds only an autoencoder");
  return run;
}

json provenance_json(const RunConfig& cfg) { return {{"config_hash", cfg.hash()}, {"code_version", code_version()}}; }

// --- bits -------------------------------------------------------------------

struct BitSource {
  std::string hex;
  std::string manifest;
  bool random = false;
  uint64_t seed = 0;
};

// Resolves per-image bits: a shared hex string or a manifest (name -> hex).
WatermarkBits resolve_bits(const BitSource& src, const std::vector<std::string>& names, int64_t length) {
  if (!src.hex.empty()) {
    const auto one = WatermarkBits::from_hex(src.hex, length);
    return WatermarkBits(one.tensor().expand({static_cast<int64_t>(names.size()), length}).contiguous());
  }
  require_exists(src.manifest, "manifest");
  const auto m = json::parse(read_text_file(src.manifest));
  const auto& table = m.at("bits");
  std::vector<torch::Tensor> rows;
  for (const auto& n : names) {
    if (!table.contains(n)) throw UsageError("manifest has no bits for " + n);
    rows.push_back(WatermarkBits::from_hex(table.at(n).get<std::string>(), length).tensor());
  }
  return WatermarkBits(torch::cat(rows));
}

ImageFolder load_inputs(const std::string& dir, int64_t size) {
  require_exists(dir, "input directory");
  auto folder = load_folder(dir, size);
  if (folder.names.empty()) throw UsageError("no PNG images in " + dir);
  return folder;
}

// --- subcommands --------------------------------------------------------------

int cmd_synth(const std::string& out, int64_t count, int64_t size, uint64_t seed) {
  const auto dir = output_path(out);
  write_corpus(dir, synth_corpus(count, size, seed));
  json m = {{"count", count}, {"size", size}, {"seed", seed}, {"code_version", code_version()}};
  write_text_file(dir / "corpus.json", m.dump(2) + "\n");
  std::printf("wrote %lld images to %s\n", static_cast<long long>(count), dir.string().c_str());
  return 0;
}

int cmd_pretrain(const std::string& config_path, const std::string& out) {
  const auto cfg = load_config(config_path);
  const RunDirectory run{output_path(out)};
  fs::create_directories(run.results());
  write_text_file(run.config(), cfg.to_json().dump(2) + "\n");
  const auto corpus = load_corpus(cfg);
  PretrainResult r;
  auto vae = obtain_autoencoder(cfg, corpus, run.checkpoints() / "autoencoder.pt", log_line, &r);
  torch::NoGradGuard no_grad;
  const auto held = vae->decode_plain(vae->encode(corpus.holdout)).image;
  json j = provenance_json(cfg);
  j["autoencoder_hash"] = cfg.autoencoder_hash();
  j["holdout_psnr"] = mean_psnr(held, corpus.holdout);
  j["target_psnr"] = cfg.pretrain.target_psnr;
  write_text_file(run.results() / "pretrain.json", j.dump(2) + "\n");
  std::printf("autoencoder held-out PSNR %.2f dB\n", j["holdout_psnr"].get<double>());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out, const std::string& resume) {
  const auto cfg = load_config(config_path);
  const RunDirectory run{output_path(out)};
  const auto corpus = load_corpus(cfg);
  auto vae = obtain_autoencoder(cfg, corpus, run.checkpoints() / "autoencoder.pt", log_line);
  auto net = make_forensic(cfg);
  if (!resume.empty()) require_exists(resume, "resume checkpoint");
  const auto result = run_training(cfg, run, vae, net, corpus.train, resume, log_line);
  const auto m = write_evaluation(cfg, run, vae, net, corpus.holdout);
  std::printf("final checkpoint %s\n", result.final_checkpoint.string().c_str());
  std::printf("held-out PSNR %.2f dB SSIM %.4f bit_acc %.2f%% F1 %.4f IoU %.4f untampered coverage %.4f\n", m.psnr,
              m.ssim, m.clean.bit_acc, m.clean.f1, m.clean.iou, m.untampered_coverage);
  return 0;
}

int cmd_embed(const std::string& ckpt, const std::string& config_path, const std::string& input,
              const std::string& out, const BitSource& src) {
  auto run = open_run(ckpt, config_path);
  const auto& cfg = run.config;
  const auto folder = load_inputs(input, cfg.image_size);
  const int64_t n = static_cast<int64_t>(folder.names.size());
  WatermarkBits bits;
  if (src.random) {
    Rng rng(src.seed);
    bits = WatermarkBits::random(n, cfg.bit_length, rng);
  } else {
    bits = resolve_bits(src, folder.names, cfg.bit_length);
  }
  const auto dir = output_path(out);
  fs::create_directories(dir);
  json manifest = provenance_json(cfg);
  manifest["bit_length"] = cfg.bit_length;
  manifest["bits"] = json::object();
  torch::NoGradGuard no_grad;
  for (int64_t i = 0; i < n; ++i) {
    const auto z = run.vae->encode(folder.images.slice(0, i, i + 1));
    const WatermarkBits b(bits.tensor().slice(0, i, i + 1));
    save_png(dir / folder.names[i], run.vae->decode_watermarked(z, b).image);
    manifest["bits"][folder.names[i]] = bits.to_hex(i);
  }
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
  std::printf("embedded %lld images into %s\n", static_cast<long long>(n), dir.string().c_str());
  return 0;
}

int cmd_verify(const std::string& ckpt, const std::string& config_path, const std::string& input,
               const std::string& out, const BitSource& src) {
  auto run = open_run(ckpt, config_path);
  const auto& cfg = run.config;
  const auto folder = load_inputs(input, cfg.image_size);
  const auto bits = resolve_bits(src, folder.names, cfg.bit_length);
  torch::NoGradGuard no_grad;
  const auto logits = run.forensic->forward(folder.images).wm_logits;
  const auto per = bit_accuracy_per_sample(bits.tensor(), logits);
  MetricTable t;
  t.key_columns = {"image"};
  t.value_columns = {"bit_acc"};
  for (size_t i = 0; i < per.size(); ++i) t.rows.push_back({{{"image", folder.names[i]}}, {{"bit_acc", per[i]}}});
  const double mean = bit_accuracy(bits.tensor(), logits);
  t.rows.push_back({{{"image", "mean"}}, {{"bit_acc", mean}}});
  const auto dir = output_path(out);
  write_table(dir, "verify", t, provenance_of(cfg));
  std::printf("mean bit accuracy %.2f%% over %zu images\n", mean, per.size());
  return 0;
}

int cmd_localize(const std::string& ckpt, const std::string& config_path, const std::string& input,
                 const std::string& out) {
  auto run = open_run(ckpt, config_path);
  const auto& cfg = run.config;
  const auto folder = load_inputs(input, cfg.image_size);
  const auto dir = output_path(out);
  fs::create_directories(dir);
  torch::NoGradGuard no_grad;
  const auto logits = run.forensic->forward(folder.images).mask_logits;
  const auto mask = (logits >= 0).to(torch::kFloat32);
  // Red at 0.5 opacity where the prediction says tampered.
  const auto red = torch::tensor({1.0f, 0.0f, 0.0f}).view({1, 3, 1, 1});
  const auto alpha = 0.5 * mask;
  const auto overlay = folder.images * (1 - alpha) + red * alpha;
  MetricTable t;
  t.key_columns = {"image"};
  t.value_columns = {"coverage"};
  for (size_t i = 0; i < folder.names.size(); ++i) {
    const auto stem = fs::path(folder.names[i]).stem().string();
    save_mask_png(dir / (stem + "_mask.png"), mask, static_cast<int64_t>(i));
    save_png(dir / (stem + "_overlay.png"), overlay, static_cast<int64_t>(i));
    t.rows.push_back({{{"image", folder.names[i]}}, {{"coverage", mask[i].mean().item<double>()}}});
  }
  write_table(dir, "localize", t, provenance_of(cfg));
  std::printf("localized %zu images into %s\n", folder.names.size(), dir.string().c_str());
  return 0;
}

int cmd_attack(const std::string& ckpt, const std::string& config_path, const std::string& suite_path,
               const std::string& run_dir) {
  auto run = open_run(ckpt, config_path);
  const auto& cfg = run.config;
  std::vector<AttackSpec> specs = default_suite();
  if (!suite_path.empty()) {
    require_exists(suite_path, "attack suite");
    specs = load_attack_suite(suite_path);
  }
  // Default run directory: the one holding checkpoints/<ckpt>.
  fs::path root = run_dir.empty() ? fs::absolute(ckpt).parent_path().parent_path() : output_path(run_dir);
  const RunDirectory dir{root};
  const auto corpus = load_corpus(cfg);
  const auto table = write_robustness(cfg, dir, run.vae, run.forensic, corpus.holdout, specs);
  for (const auto& r : table.rows) {
    std::printf("%-12s %-6s bit_acc %6.2f%%  f1 %.4f\n", r.keys.at("attack").c_str(), r.keys.at("param").c_str(),
                r.values.at("bit_acc"), r.values.at("f1"));
  }
  return 0;
}

int cmd_report(const std::string& run_dir) {
  const RunDirectory dir{output_path(run_dir)};
  const auto out = build_report(dir);
  for (const auto& p : out.written) std::printf("wrote %s\n", p.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wmguard: generation-time watermarking and tamper localization"};
  app.set_version_flag("--version", code_version());
  app.require_subcommand(1);

  std::string config, out, ckpt, input, resume, suite, run_dir;
  int64_t count = 2200, size = 64;
  uint64_t seed = 1;
  BitSource bits;

  auto* synth = app.add_subcommand("synth", "write the procedural image corpus");
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--count", count, "number of images");
  synth->add_option("--size", size, "image side length");
  synth->add_option("--seed", seed, "corpus seed");

  auto* pretrain = app.add_subcommand("pretrain", "pretrain the toy autoencoder");
  pretrain->add_option("--config", config, "run config JSON");
  pretrain->add_option("--out", out, "run directory")->required();

  auto* train = app.add_subcommand("train", "joint adapter + forensic training");
  train->add_option("--config", config, "run config JSON");
  train->add_option("--out", out, "run directory")->required();
  train->add_option("--resume", resume, "checkpoint to resume from");

  auto add_ckpt = [&](CLI::App* c) {
    c->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
    c->add_option("--config", config, "config to compare against the checkpoint (warns on mismatch)");
  };
  auto add_bits = [&](CLI::App* c, bool allow_random) {
    auto* g = c->add_option_group("bits");
    g->add_option("--bits", bits.hex, "watermark as ceil(L/4) hex digits");
    g->add_option("--manifest", bits.manifest, "manifest.json written by embed");
    if (allow_random) g->add_flag("--random", bits.random, "per-image random bits, recorded in manifest.json");
    g->require_option(1);
  };

  auto* embed = app.add_subcommand("embed", "write watermarked reconstructions");
  add_ckpt(embed);
  embed->add_option("--input", input, "PNG directory")->required();
  embed->add_option("--out", out, "output directory")->required();
  embed->add_option("--seed", bits.seed, "seed for --random");
  add_bits(embed, true);

  auto* verify = app.add_subcommand("verify", "bit accuracy of extracted watermarks");
  add_ckpt(verify);
  verify->add_option("--input", input, "PNG directory")->required();
  verify->add_option("--out", out, "directory for verify.csv/json")->required();
  add_bits(verify, false);

  auto* localize = app.add_subcommand("localize", "predict tamper masks and overlays");
  add_ckpt(localize);
  localize->add_option("--input", input, "PNG directory")->required();
  localize->add_option("--out", out, "output directory")->required();

  auto* attack = app.add_subcommand("attack", "robustness table on the held-out split");
  add_ckpt(attack);
  attack->add_option("--suite", suite, "attack suite JSON (default: built-in suite)");
  attack->add_option("--run-dir", run_dir, "run directory for results/ (default: from checkpoint path)");

  auto* report = app.add_subcommand("report", "plots and summary for a run directory");
  report->add_option("--run-dir", run_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(out, count, size, seed);
    if (*pretrain) return cmd_pretrain(config, out);
    if (*train) return cmd_train(config, out, resume);
    if (*embed) return cmd_embed(ckpt, config, input, out, bits);
    if (*verify) return cmd_verify(ckpt, config, input, out, bits);
    if (*localize) return cmd_localize(ckpt, config, input, out);
    if (*attack) return cmd_attack(ckpt, config, suite, run_dir);
    if (*report) return cmd_report(run_dir);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
