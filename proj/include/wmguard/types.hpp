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

#ifndef WMGUARD_TYPES_HPP_
#define WMGUARD_TYPES_HPP_

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace wmguard {

// All sampling in the library goes through explicit engines of this type so
// runs are reproducible and resumable.
using Rng = std::mt19937_64;

// Error hierarchy. Everything the library throws derives from Error so the
// CLI can map failures to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

// Batched image, B x 3 x H x W, values in [0, 1] at module boundaries.
using ImageTensor = torch::Tensor;

// Autoencoder latent, B x c_z x h_z x w_z.
struct LatentCode {
  torch::Tensor data;
};

// A batch of binary messages, B x L with entries in {0, 1}, stored as the
// floating dtype of the model so it can feed the adapter directly.
class WatermarkBits {
 public:
  WatermarkBits() = default;
  explicit WatermarkBits(torch::Tensor bits);

  // i.i.d. uniform bits.
  static WatermarkBits random(int64_t batch, int64_t length, Rng& rng);
  // Parses ceil(L/4) hex digits, most significant bit first.
  static WatermarkBits from_hex(const std::string& hex, int64_t length);

  const torch::Tensor& tensor() const { return bits_; }
  int64_t batch() const { return bits_.size(0); }
  int64_t length() const { return bits_.size(1); }
  // Maps {0,1} to {-1,+1}.
  torch::Tensor signed_tensor() const { return bits_ * 2 - 1; }
  std::string to_hex(int64_t row) const;
  WatermarkBits to(torch::Dtype dtype) const { return WatermarkBits(bits_.to(dtype)); }

 private:
  torch::Tensor bits_;
};

// Per-pixel tamper ground truth, B x 1 x H x W with entries in {0, 1}.
class TamperMask {
 public:
  TamperMask() = default;
  explicit TamperMask(torch::Tensor mask);

  const torch::Tensor& tensor() const { return mask_; }
  // Fraction of ones per sample.
  torch::Tensor coverage() const;

 private:
  torch::Tensor mask_;
};

// Per-location simplex weights over the three experts, B x 3 x h x w.
struct ExpertRouting {
  torch::Tensor weights;
};

struct ForensicOutput {
  torch::Tensor mask_logits;  // B x 1 x H x W
  torch::Tensor wm_logits;    // B x L
};

void check_image(const torch::Tensor& image, const char* what);

}  // namespace wmguard

#endif  // WMGUARD_TYPES_HPP_
