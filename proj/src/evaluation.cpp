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

#include "wmguard/evaluation.hpp"

#include "wmguard/util.hpp"

namespace wmguard {

EvalSet build_eval_set(MpwVae& vae, const ImageTensor& images, const SpliceConfig& splice, int64_t bit_length,
                       uint64_t seed, int64_t batch) {
  check_image(images, "build_eval_set");
  torch::NoGradGuard no_grad;
  const int64_t n = images.size(0);
  Rng rng(seed);
  EvalSet set;
  set.original = images;
  set.bits = WatermarkBits::random(n, bit_length, rng);
  std::vector<torch::Tensor> rec, wm;
  for (int64_t i = 0; i < n; i += batch) {
    const int64_t end = std::min(n, i + batch);
    const auto z = vae->encode(images.slice(0, i, end));
    rec.push_back(vae->decode_plain(z).image);
    wm.push_back(vae->decode_watermarked(z, WatermarkBits(set.bits.tensor().slice(0, i, end))).image);
  }
  set.reconstruction = torch::cat(rec);
  set.watermarked = torch::cat(wm);
  const auto sample = make_training_sample(set.original, set.reconstruction, set.watermarked, set.bits, splice, rng);
  set.spliced = sample.spliced;
  set.mask = sample.mask.tensor();
  return set;
}

ForensicEval evaluate_forensics(ForensicNet& net, const ImageTensor& inputs, const WatermarkBits& bits,
                                const torch::Tensor& masks, int64_t batch) {
  torch::NoGradGuard no_grad;
  net->eval();
  const int64_t n = inputs.size(0);
  ForensicEval ev;
  double f1 = 0, iou = 0, auc_sum = 0, cov = 0;
  int64_t auc_count = 0;
  std::vector<torch::Tensor> wm_logits;
  for (int64_t i = 0; i < n; i += batch) {
    const int64_t end = std::min(n, i + batch);
    const auto out = net->forward(inputs.slice(0, i, end));
    wm_logits.push_back(out.wm_logits);
    for (int64_t k = 0; k < end - i; ++k) {
      const auto m = masks[i + k];
      const auto logits = out.mask_logits[k];
      const auto s = f1_iou(m, logits);
      f1 += s.f1;
      iou += s.iou;
      if (const auto a = auc(m, torch::sigmoid(logits))) {
        auc_sum += *a;
        ++auc_count;
      }
      cov += (logits >= 0).to(torch::kFloat64).mean().item<double>();
    }
  }
  ev.bit_acc = bit_accuracy(bits.tensor(), torch::cat(wm_logits));
  ev.f1 = f1 / static_cast<double>(n);
  ev.iou = iou / static_cast<double>(n);
  if (auc_count > 0) ev.auc = auc_sum / static_cast<double>(auc_count);
  ev.predicted_coverage = cov / static_cast<double>(n);
  return ev;
}

double predicted_coverage(ForensicNet& net, const ImageTensor& inputs, int64_t batch) {
  torch::NoGradGuard no_grad;
  net->eval();
  const int64_t n = inputs.size(0);
  double cov = 0;
  for (int64_t i = 0; i < n; i += batch) {
    const auto out = net->forward(inputs.slice(0, i, std::min(n, i + batch)));
    cov += (out.mask_logits >= 0).to(torch::kFloat64).mean({1, 2, 3}).sum().item<double>();
  }
  return cov / static_cast<double>(n);
}

FidelityReport evaluate_fidelity(const EvalSet& set) {
  return {mean_psnr(set.reconstruction, set.watermarked), ssim(set.reconstruction, set.watermarked)};
}

std::vector<AttackSpec> default_suite() {
  std::vector<AttackSpec> s;
  s.push_back({AttackKind::kIdentity, 0, 0});
  for (double sigma : {1.0, 3.0, 5.0}) s.push_back({AttackKind::kGaussian, sigma, 11});
  for (double q : {90.0, 80.0, 70.0}) s.push_back({AttackKind::kJpeg, q, 0});
  s.push_back({AttackKind::kPoisson, 255.0, 13});
  s.push_back({AttackKind::kResizeCycle, 0.5, 0});
  s.push_back({AttackKind::kResizeCycle, 0.25, 0});
  for (double f : {0.8, 1.2}) s.push_back({AttackKind::kBrightness, f, 0});
  for (double f : {0.8, 1.2}) s.push_back({AttackKind::kContrast, f, 0});
  for (double f : {0.8, 1.2}) s.push_back({AttackKind::kSaturation, f, 0});
  return s;
}

std::vector<std::string> metric_key_columns() { return {"run_id", "split", "attack", "param"}; }
std::vector<std::string> metric_value_columns() { return {"psnr", "ssim", "bit_acc", "f1", "auc", "iou"}; }

MetricTable run_suite(ForensicNet& net, const EvalSet& set, const std::vector<AttackSpec>& specs,
                      const std::string& run_id, const std::string& split) {
  MetricTable table;
  table.key_columns = metric_key_columns();
  table.value_columns = metric_value_columns();
  for (const auto& spec : specs) {
    spec.validate();
    const auto attacked = apply_attack(set.spliced, spec);
    const auto ev = evaluate_forensics(net, attacked, set.bits, set.mask);
    MetricRow row;
    row.keys = {{"run_id", run_id},
                {"split", split},
                {"attack", to_string(spec.kind)},
                {"param", spec.kind == AttackKind::kIdentity ? std::string("0") : format_double(spec.param)}};
    row.values = {{"psnr", mean_psnr(attacked, set.spliced)},
                  {"ssim", ssim(attacked, set.spliced)},
                  {"bit_acc", ev.bit_acc},
                  {"f1", ev.f1},
                  {"iou", ev.iou}};
    if (ev.auc) row.values["auc"] = *ev.auc;
    table.rows.push_back(std::move(row));
  }
  return table;
}

MetricTable coverage_sweep(ForensicNet& net, MpwVae& vae, const ImageTensor& images, const SpliceConfig& base,
                           int64_t bit_length, uint64_t seed, const std::vector<std::pair<double, double>>& bins,
                           const std::string& run_id) {
  MetricTable table;
  table.key_columns = {"run_id", "coverage_lo", "coverage_hi"};
  table.value_columns = {"bit_acc", "f1", "auc", "iou"};
  for (const auto& [lo, hi] : bins) {
    auto cfg = base;
    cfg.coverage_min = lo;
    cfg.coverage_max = hi;
    const auto set = build_eval_set(vae, images, cfg, bit_length, seed);
    const auto ev = evaluate_forensics(net, set.spliced, set.bits, set.mask);
    MetricRow row;
    row.keys = {{"run_id", run_id}, {"coverage_lo", format_double(lo)}, {"coverage_hi", format_double(hi)}};
    row.values = {{"bit_acc", ev.bit_acc}, {"f1", ev.f1}, {"iou", ev.iou}};
    if (ev.auc) row.values["auc"] = *ev.auc;
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace wmguard
