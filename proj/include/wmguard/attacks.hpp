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

// Image degradations used for robustness evaluation. Every attack maps a
// [0,1] batch to a [0,1] batch of the same shape.

#ifndef WMGUARD_ATTACKS_HPP_
#define WMGUARD_ATTACKS_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "wmguard/types.hpp"

namespace wmguard {

enum class AttackKind {
  kIdentity,
  kGaussian,
  kPoisson,
  kJpeg,
  kResizeCycle,
  kBrightness,
  kContrast,
  kSaturation,
};

const char* to_string(AttackKind kind);
AttackKind attack_kind_from_string(const std::string& name);

struct AttackSpec {
  AttackKind kind = AttackKind::kIdentity;
  // sigma on the 0-255 scale, JPEG quality, resize scale or color factor.
  // Poisson uses it as the photon peak.
  double param = 0;
  uint64_t seed = 0;

  void validate() const;
  std::string label() const;
};

void to_json(nlohmann::json& j, const AttackSpec& s);
void from_json(const nlohmann::json& j, AttackSpec& s);

// Suite file: a JSON list of {kind, param, seed}.
std::vector<AttackSpec> load_attack_suite(const std::string& path);

ImageTensor gaussian_noise(const ImageTensor& img, double sigma_255, uint64_t seed);
ImageTensor poisson_noise(const ImageTensor& img, double peak, uint64_t seed);
ImageTensor jpeg(const ImageTensor& img, int quality);
ImageTensor resize_cycle(const ImageTensor& img, double scale);

enum class ColorKind { kBrightness, kContrast, kSaturation };
ImageTensor color_jitter(const ImageTensor& img, ColorKind kind, double factor);

ImageTensor apply_attack(const ImageTensor& img, const AttackSpec& spec);

namespace jpeg_codec {

using Block = std::array<double, 64>;
using QuantTable = std::array<int, 64>;

// Orthonormal 8x8 DCT-II and its inverse (DCT-III), row-major blocks.
Block dct8x8(const Block& pixels);
Block idct8x8(const Block& coeffs);

// Standard luminance/chrominance tables scaled by the libjpeg quality rule.
QuantTable luma_table(int quality);
QuantTable chroma_table(int quality);

}  // namespace jpeg_codec

}  // namespace wmguard

#endif  // WMGUARD_ATTACKS_HPP_
