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

#include "wmguard/pipeline.hpp"

#include "wmguard/checkpoint.hpp"
#include "wmguard/image_io.hpp"
#include "wmguard/util.hpp"

namespace wmguard {
namespace fs = std::filesystem;

Corpus load_corpus(const RunConfig& cfg) {
  ImageTensor all;
  if (!cfg.data.corpus_dir.empty()) {
    all = load_folder(cfg.data.corpus_dir, cfg.image_size).images;
  } else {
    all = synth_corpus(cfg.data.synth_count, cfg.image_size, cfg.data.synth_seed);
  }
  const int64_t n = all.size(0), h = cfg.data.holdout;
  if (n <= h) throw ConfigError("corpus has " + std::to_string(n) + " images, not more than holdout " + std::to_string(h));
  return {all.slice(0, 0, n - h), all.slice(0, n - h, n)};
}

MpwVae obtain_autoencoder(const RunConfig& cfg, const Corpus& corpus, const fs::path& path, const LogFn& log,
                          PretrainResult* result) {
  // Seeded before construction so the adapter initialization is the same
  // whether the autoencoder is loaded or pretrained.
  torch::manual_seed(cfg.seed);
  MpwVae vae(cfg.autoencoder, cfg.adapter);
  const auto want = cfg.autoencoder_hash();
  if (fs::exists(path)) {
    const auto meta = read_checkpoint_meta(path);
    if (meta.config_hash == want) {
      load_checkpoint(path, vae, nullptr, nullptr, want);
      if (log) log("reusing autoencoder " + path.string());
      vae->freeze_autoencoder();
      return vae;
    }
    if (log) log("autoencoder at " + path.string() + " has hash " + meta.config_hash + ", retraining");
  }
  const auto r = pretrain_autoencoder(vae, corpus.train, cfg.pretrain, cfg.seed, log);
  if (result) *result = r;
  if (!r.converged && log) {
    log("warning: autoencoder reached " + format_double(r.train_psnr) + " dB, below target " +
        format_double(cfg.pretrain.target_psnr));
  }
  CheckpointMeta meta;
  meta.kind = "autoencoder";
  meta.config_json = cfg.to_json().dump();
  meta.config_hash = want;
  meta.epoch = r.epochs_run;
  save_checkpoint(path, meta, vae, nullptr, nullptr);
  vae->freeze_autoencoder();
  return vae;
}

ForensicNet make_forensic(const RunConfig& cfg) {
  torch::manual_seed(mix_seed(cfg.seed, kForensicInitStream, 0));
  return ForensicNet(cfg.forensic);
}

TrainResult run_training(const RunConfig& cfg, const RunDirectory& run, MpwVae vae, ForensicNet forensic,
                         const ImageTensor& train_images, const fs::path& resume_from, const LogFn& log) {
  fs::create_directories(run.root);
  write_text_file(run.config(), cfg.to_json().dump(2) + "\n");
  Trainer trainer(cfg, vae, forensic);
  TrainOptions opts;
  opts.out_dir = run.root;
  opts.resume_from = resume_from;
  opts.progress = log;
  return trainer.train(train_images, opts);
}

HeldOutMetrics evaluate_held_out(const RunConfig& cfg, MpwVae& vae, ForensicNet& net, const ImageTensor& holdout) {
  HeldOutMetrics m;
  const auto set = build_eval_set(vae, holdout, cfg.splice, cfg.bit_length, kEvalSpliceSeed);
  const auto fid = evaluate_fidelity(set);
  m.psnr = fid.psnr_db;
  m.ssim = fid.ssim;
  m.clean = evaluate_forensics(net, set.spliced, set.bits, set.mask);
  const int64_t n_clean = std::min<int64_t>(100, holdout.size(0));
  m.untampered_coverage = predicted_coverage(net, set.watermarked.slice(0, 0, n_clean));
  return m;
}

Provenance provenance_of(const RunConfig& cfg) { return {cfg.hash(), code_version()}; }

HeldOutMetrics write_evaluation(const RunConfig& cfg, const RunDirectory& run, MpwVae& vae, ForensicNet& net,
                                const ImageTensor& holdout) {
  const auto m = evaluate_held_out(cfg, vae, net, holdout);
  const auto prov = provenance_of(cfg);
  MetricTable fid;
  fid.key_columns = {"run_id", "split"};
  fid.value_columns = {"psnr", "ssim", "bit_acc", "f1", "auc", "iou", "untampered_coverage"};
  MetricRow row;
  row.keys = {{"run_id", prov.config_hash}, {"split", "holdout"}};
  row.values = {{"psnr", m.psnr},
                {"ssim", m.ssim},
                {"bit_acc", m.clean.bit_acc},
                {"f1", m.clean.f1},
                {"iou", m.clean.iou},
                {"untampered_coverage", m.untampered_coverage}};
  if (m.clean.auc) row.values["auc"] = *m.clean.auc;
  fid.rows.push_back(row);
  write_table(run.results(), "fidelity", fid, prov, {{"holdout_images", holdout.size(0)}});

  const std::vector<std::pair<double, double>> bins = {{0.05, 0.15}, {0.15, 0.25}, {0.25, 0.35}, {0.35, 0.5}};
  const auto cov = coverage_sweep(net, vae, holdout, cfg.splice, cfg.bit_length, kEvalSpliceSeed, bins,
                                  prov.config_hash);
  write_table(run.results(), "coverage", cov, prov);
  return m;
}

MetricTable write_robustness(const RunConfig& cfg, const RunDirectory& run, MpwVae& vae, ForensicNet& net,
                             const ImageTensor& holdout, const std::vector<AttackSpec>& specs) {
  const auto set = build_eval_set(vae, holdout, cfg.splice, cfg.bit_length, kEvalSpliceSeed);
  const auto prov = provenance_of(cfg);
  auto table = run_suite(net, set, specs, prov.config_hash, "holdout");
  nlohmann::json suite = nlohmann::json::array();
  for (const auto& s : specs) suite.push_back(s);
  write_table(run.results(), "robustness", table, prov, {{"suite", suite}});
  return table;
}

}  // namespace wmguard
