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

// Forensic network: stem, three-scale UNet, mixture-of-forensic-experts
// blocks and the two forensic heads (tamper mask and watermark bits).

#ifndef WMGUARD_MOE_GFN_HPP_
#define WMGUARD_MOE_GFN_HPP_

#include <array>
#include <string>
#include <vector>

#include "json.hpp"

#include "wmguard/types.hpp"

namespace wmguard {

enum class Placement { kNone, kEnc, kDec, kEncDec };

std::string to_string(Placement p);
Placement placement_from_string(const std::string& s);

// Spatial pooling in front of the watermark head's fully connected layer.
enum class WmPooling {
  kFlatten,       // FC sees every location (default)
  kGlobalAverage  // translation invariant; kept for comparison runs
};

enum class ExpertKind { kWatermark = 0, kTamper = 1, kBoundary = 2 };
const char* to_string(ExpertKind k);

struct ForensicConfig {
  int64_t bit_length = 32;
  int64_t image_size = 64;  // square inputs; position embeddings depend on it
  std::array<int64_t, 3> widths{32, 64, 128};
  int64_t stem_hidden = 16;
  int64_t patch_size = 8;
  int64_t heads = 4;
  int64_t mlp_ratio = 2;
  Placement placement = Placement::kDec;
  // Ablation toggles. Disabled experts are not constructed; without the
  // router the active expert outputs are summed.
  bool use_wm_expert = true;
  bool use_tamp_expert = true;
  bool use_bound_expert = true;
  bool use_router = true;
  WmPooling wm_pooling = WmPooling::kFlatten;

  void validate() const;
  int64_t active_experts() const;
};

void to_json(nlohmann::json& j, const ForensicConfig& c);
// Reads the "moe", "unet" and "wm_head" sections of a run config. Keys not
// present keep their defaults. bit_length and image_size are set by the caller.
void from_json(const nlohmann::json& j, ForensicConfig& c);

// Multi-head scaled dot-product self-attention over B x T x C tokens.
class MultiHeadSelfAttentionImpl : public torch::nn::Module {
 public:
  MultiHeadSelfAttentionImpl(int64_t dim, int64_t heads);
  torch::Tensor forward(const torch::Tensor& tokens);

 private:
  int64_t dim_, heads_;
  torch::nn::Linear qkv_{nullptr}, out_{nullptr};
};
TORCH_MODULE(MultiHeadSelfAttention);

// tokens + FFN(MHSA(Proj(LN(tokens + pos)))). The FFN output layer starts at
// zero so the branch is an exact identity at init.
class TransformerBranchImpl : public torch::nn::Module {
 public:
  TransformerBranchImpl(int64_t dim, int64_t tokens, int64_t heads, int64_t mlp_ratio);
  torch::Tensor forward(const torch::Tensor& tokens);
  torch::nn::Linear& ffn_out() { return fc2_; }

 private:
  int64_t tokens_;
  torch::Tensor pos_;
  torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Linear proj_{nullptr}, fc1_{nullptr}, fc2_{nullptr};
  MultiHeadSelfAttention attn_{nullptr};
};
TORCH_MODULE(TransformerBranch);

// Common interface so a MoFE block can hold any subset of experts.
class ExpertImpl : public torch::nn::Module {
 public:
  virtual ~ExpertImpl() = default;
  virtual torch::Tensor forward(const torch::Tensor& x) = 0;
  virtual ExpertKind kind() const = 0;
  virtual TransformerBranch& branch() = 0;
};

// Global attention over all h*w locations.
class WatermarkExpertImpl : public ExpertImpl {
 public:
  WatermarkExpertImpl(int64_t channels, int64_t h, int64_t w, const ForensicConfig& cfg);
  torch::Tensor forward(const torch::Tensor& x) override;
  ExpertKind kind() const override { return ExpertKind::kWatermark; }
  TransformerBranch& branch() override { return branch_; }

 private:
  TransformerBranch branch_{nullptr};
};

// Attention restricted to non-overlapping n x n patches.
class TamperExpertImpl : public ExpertImpl {
 public:
  TamperExpertImpl(int64_t channels, int64_t h, int64_t w, const ForensicConfig& cfg);
  torch::Tensor forward(const torch::Tensor& x) override;
  ExpertKind kind() const override { return ExpertKind::kTamper; }
  TransformerBranch& branch() override { return branch_; }
  int64_t effective_patch() const { return n_; }

 private:
  int64_t n_;
  TransformerBranch branch_{nullptr};
};

// Attention across the 2-D spectrum (real and imaginary parts as channels).
class BoundaryExpertImpl : public ExpertImpl {
 public:
  BoundaryExpertImpl(int64_t channels, int64_t h, int64_t w, const ForensicConfig& cfg);
  torch::Tensor forward(const torch::Tensor& x) override;
  ExpertKind kind() const override { return ExpertKind::kBoundary; }
  TransformerBranch& branch() override { return branch_; }

 private:
  TransformerBranch branch_{nullptr};
};

// Patch size actually used for an h x w map: min(n, h, w).
int64_t effective_patch_size(int64_t n, int64_t h, int64_t w);

// Orthonormal 2-D FFT per channel, returned as B x 2c x h x w (real then imag).
torch::Tensor spectrum_split(const torch::Tensor& x);
// Inverse of spectrum_split; returns the real part of the inverse transform.
torch::Tensor spectrum_merge(const torch::Tensor& spec);

// Per-location two-layer 1x1-conv perceptron c -> c/2 -> k, softmax over k.
class SoftRouterImpl : public torch::nn::Module {
 public:
  SoftRouterImpl(int64_t channels, int64_t experts);
  ExpertRouting forward(const torch::Tensor& x);
  torch::Tensor logits(const torch::Tensor& x);

 private:
  torch::nn::Conv2d fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(SoftRouter);

class MoFEImpl : public torch::nn::Module {
 public:
  MoFEImpl(int64_t channels, int64_t h, int64_t w, const ForensicConfig& cfg);

  torch::Tensor forward(const torch::Tensor& x);
  // Fuses with externally supplied weights (B x k x h x w).
  torch::Tensor fuse(const torch::Tensor& x, const torch::Tensor& weights);
  std::vector<torch::Tensor> expert_outputs(const torch::Tensor& x);
  ExpertRouting route(const torch::Tensor& x);

  size_t num_experts() const { return experts_.size(); }
  ExpertImpl& expert(size_t i) { return *experts_.at(i); }
  bool has_router() const { return !router_.is_empty(); }

 private:
  std::vector<std::shared_ptr<ExpertImpl>> experts_;
  SoftRouter router_{nullptr};
};
TORCH_MODULE(MoFE);

// conv3x3 -> GroupNorm -> SiLU, twice.
class ConvBlockImpl : public torch::nn::Module {
 public:
  ConvBlockImpl(int64_t in, int64_t out);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
  torch::nn::GroupNorm norm1_{nullptr}, norm2_{nullptr};
};
TORCH_MODULE(ConvBlock);

// Two stride-2 convs: H x W x 3 -> H/4 x W/4 x widths[0].
class StemImpl : public torch::nn::Module {
 public:
  StemImpl(int64_t hidden, int64_t out);
  torch::Tensor forward(const torch::Tensor& image);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
};
TORCH_MODULE(Stem);

class ForensicHeadsImpl : public torch::nn::Module {
 public:
  ForensicHeadsImpl(int64_t channels, int64_t feature_size, const ForensicConfig& cfg);
  ForensicOutput forward(const torch::Tensor& feature);

 private:
  int64_t out_size_;
  WmPooling pooling_;
  torch::nn::Conv2d mask1_{nullptr}, mask2_{nullptr}, wm1_{nullptr}, wm2_{nullptr};
  torch::nn::Linear fc_{nullptr};
};
TORCH_MODULE(ForensicHeads);

class ForensicNetImpl : public torch::nn::Module {
 public:
  explicit ForensicNetImpl(const ForensicConfig& cfg);

  ForensicOutput forward(const ImageTensor& image);
  // Final decoder-stage feature, before the heads.
  torch::Tensor features(const ImageTensor& image);

  const ForensicConfig& config() const { return cfg_; }
  size_t num_mofe_blocks() const;
  MoFE& enc_mofe(size_t i) { return enc_mofe_.at(i); }
  MoFE& dec_mofe(size_t i) { return dec_mofe_.at(i); }
  ForensicHeads& heads() { return heads_; }
  Stem& stem() { return stem_; }

 private:
  ForensicConfig cfg_;
  Stem stem_{nullptr};
  ConvBlock enc1_{nullptr}, enc2_{nullptr}, enc3_{nullptr};
  ConvBlock dec3_{nullptr}, dec2_{nullptr}, dec1_{nullptr};
  std::vector<MoFE> enc_mofe_, dec_mofe_;
  ForensicHeads heads_{nullptr};
};
TORCH_MODULE(ForensicNet);

}  // namespace wmguard

#endif  // WMGUARD_MOE_GFN_HPP_
