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

// Fidelity, watermark and localization metrics.
//
// Conventions (also written into every report header):
//   - PSNR of identical images is capped at 100 dB.
//   - Probabilities are binarized at 0.5; sigmoid(0) = 0.5 counts as positive.
//   - F1 = IoU = 1 when prediction and truth are both empty.
//   - AUC is exact Mann-Whitney over pixels (ties count 1/2), subsampled to
//     at most 1e5 pixels with a fixed seed; undefined for single-class masks.
//   - Localization scores are computed per image, then averaged.

#ifndef WMGUARD_METRICS_HPP_
#define WMGUARD_METRICS_HPP_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "wmguard/types.hpp"

namespace wmguard {

inline constexpr double kPsnrCapDb = 100.0;
inline constexpr int64_t kAucMaxPixels = 100000;
inline constexpr uint64_t kAucSubsampleSeed = 0x5eed;

// PSNR of a single image pair (any shape), data range 1.
double psnr(const torch::Tensor& a, const torch::Tensor& b);
// Per-image PSNR averaged over the batch.
double mean_psnr(const ImageTensor& a, const ImageTensor& b);

// Gaussian-window SSIM (11x11, sigma 1.5, K1=0.01, K2=0.03), valid windows
// only, averaged over windows, channels and batch.
double ssim(const ImageTensor& a, const ImageTensor& b);

// Percentage in [0, 100] over all bits in the batch.
double bit_accuracy(const torch::Tensor& bits, const torch::Tensor& w_logits);
// Per-sample percentages.
std::vector<double> bit_accuracy_per_sample(const torch::Tensor& bits, const torch::Tensor& w_logits);

struct F1Iou {
  double f1 = 0;
  double iou = 0;
};

struct Confusion {
  int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

F1Iou f1_iou_from_counts(const Confusion& c);
// Single mask (1 x H x W or H x W) against logits of the same shape.
F1Iou f1_iou(const torch::Tensor& mask, const torch::Tensor& m_logits);

// Exact rank-based AUC; std::nullopt when the mask has a single class.
std::optional<double> auc(const torch::Tensor& mask, const torch::Tensor& scores);

struct FidelityReport {
  double psnr_db = 0;
  double ssim = 0;
};

struct LocalizationReport {
  double f1 = 0, iou = 0;
  std::optional<double> auc;
  double threshold = 0.5;
};

// One evaluated row: grouping columns plus metric values. Missing metrics
// are absent from `values` and serialize as "n/a".
struct MetricRow {
  std::map<std::string, std::string> keys;
  std::map<std::string, double> values;
};

struct MetricTable {
  std::vector<std::string> key_columns;
  std::vector<std::string> value_columns;
  std::vector<MetricRow> rows;

  std::string to_csv() const;
  nlohmann::json to_json() const;
};

// Mean of every value column per distinct combination of group keys, in
// first-appearance order. A value absent from some rows is averaged over the
// rows that have it.
MetricTable aggregate(const std::vector<MetricRow>& reports, const std::vector<std::string>& group_keys,
                      const std::vector<std::string>& value_columns);

std::string metric_conventions();

}  // namespace wmguard

#endif  // WMGUARD_METRICS_HPP_
