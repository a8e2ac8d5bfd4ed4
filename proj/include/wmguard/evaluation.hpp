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

// Held-out evaluation: fidelity of the watermarked decode, clean forensics,
// and the robustness suite (attack after splicing).

#ifndef WMGUARD_EVALUATION_HPP_
#define WMGUARD_EVALUATION_HPP_

#include <optional>
#include <string>
#include <vector>

#include "wmguard/attacks.hpp"
#include "wmguard/metrics.hpp"
#include "wmguard/moe_gfn.hpp"
#include "wmguard/mpw_vae.hpp"
#include "wmguard/tamper_synth.hpp"

namespace wmguard {

struct EvalSet {
  ImageTensor original;
  ImageTensor reconstruction;  // decode_plain(encode(x))
  ImageTensor watermarked;     // decode_watermarked(encode(x), bits)
  ImageTensor spliced;
  torch::Tensor mask;  // B x 1 x H x W
  WatermarkBits bits;
};

// Deterministic in `seed`: bits, splice branches and masks come from one Rng.
EvalSet build_eval_set(MpwVae& vae, const ImageTensor& images, const SpliceConfig& splice, int64_t bit_length,
                       uint64_t seed, int64_t batch = 25);

struct ForensicEval {
  double bit_acc = 0;  // percent
  double f1 = 0, iou = 0;
  std::optional<double> auc;     // mean over images where it is defined
  double predicted_coverage = 0;  // mean fraction of pixels predicted tampered
};

// Per-image localization scores averaged over the set.
ForensicEval evaluate_forensics(ForensicNet& net, const ImageTensor& inputs, const WatermarkBits& bits,
                                const torch::Tensor& masks, int64_t batch = 25);

// Mean predicted tamper coverage (sigmoid >= 0.5) on `inputs`.
double predicted_coverage(ForensicNet& net, const ImageTensor& inputs, int64_t batch = 25);

FidelityReport evaluate_fidelity(const EvalSet& set);

// Table 3 rows plus the appendix degradations.
std::vector<AttackSpec> default_suite();

// One row per spec; keys run_id, split, attack, param. psnr/ssim compare the
// attacked input with the unattacked spliced input.
MetricTable run_suite(ForensicNet& net, const EvalSet& set, const std::vector<AttackSpec>& specs,
                      const std::string& run_id, const std::string& split);

// F1 as a function of tamper coverage: one row per [lo, hi) bin.
MetricTable coverage_sweep(ForensicNet& net, MpwVae& vae, const ImageTensor& images, const SpliceConfig& base,
                           int64_t bit_length, uint64_t seed, const std::vector<std::pair<double, double>>& bins,
                           const std::string& run_id);

// Column order shared by every metrics CSV.
std::vector<std::string> metric_key_columns();
std::vector<std::string> metric_value_columns();

}  // namespace wmguard

#endif  // WMGUARD_EVALUATION_HPP_
