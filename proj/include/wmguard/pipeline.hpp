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

// End-to-end run orchestration shared by the command line tool and the
// acceptance harness: corpus loading, autoencoder pretraining (cached by
// hash), joint training and held-out evaluation.

#ifndef WMGUARD_PIPELINE_HPP_
#define WMGUARD_PIPELINE_HPP_

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "wmguard/config.hpp"
#include "wmguard/evaluation.hpp"
#include "wmguard/moe_gfn.hpp"
#include "wmguard/mpw_vae.hpp"
#include "wmguard/report.hpp"
#include "wmguard/trainer.hpp"

namespace wmguard {

using LogFn = std::function<void(const std::string&)>;

struct Corpus {
  ImageTensor train;
  ImageTensor holdout;
};

// Loads `data.corpus_dir` or generates the procedural corpus, then splits off
// the last `data.holdout` images.
Corpus load_corpus(const RunConfig& cfg);

// Seeds for the held-out evaluation sets; fixed so reruns are byte-identical.
inline constexpr uint64_t kEvalSpliceSeed = 0xe7a1;
inline constexpr uint64_t kEvalCleanSeed = 0xc1ea;

// Loads the autoencoder checkpoint at `path` when its hash matches the
// config; otherwise pretrains on `corpus.train` and writes it.
MpwVae obtain_autoencoder(const RunConfig& cfg, const Corpus& corpus, const std::filesystem::path& path,
                          const LogFn& log, PretrainResult* result = nullptr);

// Forensic network with a seed-determined initialization.
inline constexpr uint64_t kForensicInitStream = 4;
ForensicNet make_forensic(const RunConfig& cfg);

// Writes config.json and runs the joint training into `run.root`.
TrainResult run_training(const RunConfig& cfg, const RunDirectory& run, MpwVae vae, ForensicNet forensic,
                         const ImageTensor& train_images, const std::filesystem::path& resume_from,
                         const LogFn& log);

struct HeldOutMetrics {
  double psnr = 0, ssim = 0;          // decode_plain vs decode_watermarked
  ForensicEval clean;                 // spliced, coverage in the configured range
  double untampered_coverage = 0;     // predicted coverage on watermarked images
};

HeldOutMetrics evaluate_held_out(const RunConfig& cfg, MpwVae& vae, ForensicNet& net, const ImageTensor& holdout);

// Held-out evaluation plus the coverage sweep, written to results/.
HeldOutMetrics write_evaluation(const RunConfig& cfg, const RunDirectory& run, MpwVae& vae, ForensicNet& net,
                                const ImageTensor& holdout);

// Robustness table for `specs` on the held-out spliced set, written to
// results/robustness.{csv,json}.
MetricTable write_robustness(const RunConfig& cfg, const RunDirectory& run, MpwVae& vae, ForensicNet& net,
                             const ImageTensor& holdout, const std::vector<AttackSpec>& specs);

Provenance provenance_of(const RunConfig& cfg);

}  // namespace wmguard

#endif  // WMGUARD_PIPELINE_HPP_
