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

// Self-supervised tamper synthesis: random masks and mask-guided splicing of a
// watermarked image with a watermark-free counterpart.

#ifndef WMGUARD_TAMPER_SYNTH_HPP_
#define WMGUARD_TAMPER_SYNTH_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "wmguard/types.hpp"

namespace wmguard {

struct SpliceConfig {
  // u <= p_threshold splices in the original image, otherwise the
  // autoencoder reconstruction.
  double p_threshold = 0.5;
  // Probability of a blob ("semantic") mask versus a box mask.
  double semantic_mask_prob = 0.5;
  double coverage_min = 0.05;
  double coverage_max = 0.5;
  uint64_t rng_seed = 0;

  void validate() const;
  std::string describe() const;
};

void to_json(nlohmann::json& j, const SpliceConfig& c);
void from_json(const nlohmann::json& j, SpliceConfig& c);

class MaskSamplingError : public Error {
 public:
  using Error::Error;
};

enum class MaskKind { kBlob, kBox };
enum class SourceKind { kOriginal, kReconstruction };

const char* to_string(SourceKind kind);

// Single H x W mask with coverage inside [coverage_min, coverage_max].
// Retries at most 100 times, then throws MaskSamplingError.
TamperMask sample_mask(const SpliceConfig& cfg, int64_t height, int64_t width, Rng& rng);

// One mask per sample, stacked to B x 1 x H x W.
TamperMask sample_masks(const SpliceConfig& cfg, int64_t batch, int64_t height, int64_t width,
                        Rng& rng);

// Raw shape generators; no coverage control.
torch::Tensor blob_mask(int64_t height, int64_t width, Rng& rng);
torch::Tensor box_mask(int64_t height, int64_t width, Rng& rng);

// out = (1 - M) * watermarked + M * clean, pixel-exact.
ImageTensor splice(const ImageTensor& watermarked, const ImageTensor& clean, const TamperMask& mask);

struct TrainingSample {
  ImageTensor spliced;
  TamperMask mask;
  WatermarkBits bits;
  std::vector<SourceKind> source_kind;  // one per batch entry
};

// Draws u ~ U(0,1) per sample and splices in `original` when u <= p_threshold,
// `reconstruction` otherwise. The mask is sampled from rng after the u draws.
TrainingSample make_training_sample(const ImageTensor& original, const ImageTensor& reconstruction,
                                    const ImageTensor& watermarked, const WatermarkBits& bits,
                                    const SpliceConfig& cfg, Rng& rng);

// Variant with the branch variables given explicitly.
TrainingSample make_training_sample(const ImageTensor& original, const ImageTensor& reconstruction,
                                    const ImageTensor& watermarked, const WatermarkBits& bits,
                                    const TamperMask& mask, const std::vector<double>& u,
                                    const SpliceConfig& cfg);

SourceKind choose_source(double u, const SpliceConfig& cfg);

}  // namespace wmguard

#endif  // WMGUARD_TAMPER_SYNTH_HPP_
