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

#include "wmguard/types.hpp"

#include <cctype>
#include <sstream>

namespace wmguard {

WatermarkBits::WatermarkBits(torch::Tensor bits) : bits_(std::move(bits)) {
  if (bits_.dim() != 2) {
    throw ShapeError("watermark bits must be B x L, got " + std::to_string(bits_.dim()) + " dims");
  }
  if (!torch::isFloatingType(bits_.scalar_type())) bits_ = bits_.to(torch::kFloat32);
  const bool binary = torch::logical_or(bits_ == 0, bits_ == 1).all().item<bool>();
  if (!binary) throw Error("watermark bits must be 0 or 1");
}

WatermarkBits WatermarkBits::random(int64_t batch, int64_t length, Rng& rng) {
  auto bits = torch::empty({batch, length}, torch::kFloat32);
  auto* p = bits.data_ptr<float>();
  for (int64_t i = 0; i < batch * length; ++i) p[i] = static_cast<float>(rng() >> 63);
  return WatermarkBits(bits);
}

WatermarkBits WatermarkBits::from_hex(const std::string& hex, int64_t length) {
  const auto digits = static_cast<size_t>((length + 3) / 4);
  if (hex.size() != digits) {
    throw ConfigError("bit string '" + hex + "' must have " + std::to_string(digits) +
                      " hex digits for L=" + std::to_string(length));
  }
  auto bits = torch::zeros({1, length}, torch::kFloat32);
  auto* p = bits.data_ptr<float>();
  for (size_t d = 0; d < digits; ++d) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(hex[d])));
    int v;
    if (c >= '0' && c <= '9') {
      v = c - '0';
    } else if (c >= 'a' && c <= 'f') {
      v = c - 'a' + 10;
    } else {
      throw ConfigError("invalid hex digit in bit string '" + hex + "'");
    }
    for (int k = 0; k < 4; ++k) {
      const int64_t idx = static_cast<int64_t>(d) * 4 + k;
      if (idx < length) p[idx] = static_cast<float>((v >> (3 - k)) & 1);
    }
  }
  return WatermarkBits(bits);
}

std::string WatermarkBits::to_hex(int64_t row) const {
  auto b = bits_[row].to(torch::kFloat32).contiguous();
  const auto* p = b.data_ptr<float>();
  const int64_t n = length();
  std::string out;
  for (int64_t d = 0; d < (n + 3) / 4; ++d) {
    int v = 0;
    for (int k = 0; k < 4; ++k) {
      const int64_t idx = d * 4 + k;
      v = (v << 1) | (idx < n && p[idx] > 0.5f ? 1 : 0);
    }
    out.push_back("0123456789abcdef"[v]);
  }
  return out;
}

TamperMask::TamperMask(torch::Tensor mask) : mask_(std::move(mask)) {
  if (mask_.dim() != 4 || mask_.size(1) != 1) {
    throw ShapeError("tamper mask must be B x 1 x H x W");
  }
  if (!torch::isFloatingType(mask_.scalar_type())) mask_ = mask_.to(torch::kFloat32);
  const bool binary = torch::logical_or(mask_ == 0, mask_ == 1).all().item<bool>();
  if (!binary) throw Error("tamper mask entries must be 0 or 1");
}

torch::Tensor TamperMask::coverage() const { return mask_.mean({1, 2, 3}); }

void check_image(const torch::Tensor& image, const char* what) {
  if (image.dim() != 4 || image.size(1) != 3) {
    std::ostringstream os;
    os << what << ": expected B x 3 x H x W image, got " << image.sizes();
    throw ShapeError(os.str());
  }
}

}  // namespace wmguard
