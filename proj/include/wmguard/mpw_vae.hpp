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

// Multiplexing watermark autoencoder: a small frozen convolutional
// autoencoder whose decoder carries one togglable residual watermark adapter
// after each decoder block. With the adapters off (or freshly initialized)
// the decoder is exactly the vanilla decoder.

#ifndef WMGUARD_MPW_VAE_HPP_
#define WMGUARD_MPW_VAE_HPP_

#include <array>
#include <string>
#include <vector>

#include "json.hpp"

#include "wmguard/types.hpp"

namespace wmguard {

// How the bit embedding is laid over a feature map before concatenation.
enum class EmbeddingLayout {
  kTiled,       // fc2 -> c_k channels, repeated at every location
  kSpatialGrid  // fc2 -> c_k x g x g grid, bilinearly resized to the feature
};

struct AutoencoderConfig {
  // Widths at full, half and quarter resolution.
  std::array<int64_t, 3> widths{16, 32, 64};
  int64_t latent_channels = 4;
  int64_t downsample = 4;  // fixed by the three-block layout

  void validate() const;
};

struct AdapterConfig {
  int64_t bit_length = 32;
  int64_t hidden = 256;  // d_a
  EmbeddingLayout layout = EmbeddingLayout::kSpatialGrid;
  int64_t grid = 8;

  void validate() const;
};

void to_json(nlohmann::json& j, const AutoencoderConfig& c);
void from_json(const nlohmann::json& j, AutoencoderConfig& c);
void to_json(nlohmann::json& j, const AdapterConfig& c);
void from_json(const nlohmann::json& j, AdapterConfig& c);

// GroupNorm -> SiLU -> conv -> GroupNorm -> SiLU -> conv, plus identity skip.
class ResBlockImpl : public torch::nn::Module {
 public:
  explicit ResBlockImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::GroupNorm norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
};
TORCH_MODULE(ResBlock);

class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const AutoencoderConfig& cfg);
  // Deterministic latent (no sampling).
  torch::Tensor forward(const torch::Tensor& image);

 private:
  torch::nn::Conv2d conv_in_{nullptr}, down1_{nullptr}, down2_{nullptr}, conv_out_{nullptr};
  ResBlock block1_{nullptr}, block2_{nullptr}, block3_{nullptr};
};
TORCH_MODULE(Encoder);

class WatermarkAdapterImpl : public torch::nn::Module {
 public:
  WatermarkAdapterImpl(const AdapterConfig& cfg, int64_t channels);

  // feature + conv2(silu(gn(conv1(silu(gn(concat(feature, embed(bits_pm1)))))))).
  // `signed_bits` is B x L in {-1, +1}.
  torch::Tensor forward(const torch::Tensor& feature, const torch::Tensor& signed_bits);

  // B x c_k x h x w embedding laid out for a feature of the given size.
  torch::Tensor embed(const torch::Tensor& signed_bits, int64_t height, int64_t width);

  int64_t channels() const { return channels_; }
  torch::nn::Conv2d& final_conv() { return conv2_; }

 private:
  AdapterConfig cfg_;
  int64_t channels_;
  torch::nn::Linear fc1_{nullptr}, fc2_{nullptr};
  torch::nn::GroupNorm norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
};
TORCH_MODULE(WatermarkAdapter);

// One adapter per decoder block plus the on/off toggle.
class AdapterStackImpl : public torch::nn::Module {
 public:
  AdapterStackImpl(const AdapterConfig& cfg, const std::vector<int64_t>& block_channels);

  bool enabled() const { return enabled_; }
  void set_enabled(bool on) { enabled_ = on; }
  size_t size() const { return adapters_.size(); }
  WatermarkAdapter& at(size_t block) { return adapters_.at(block); }
  const AdapterConfig& config() const { return cfg_; }

 private:
  AdapterConfig cfg_;
  bool enabled_ = true;
  std::vector<WatermarkAdapter> adapters_;
};
TORCH_MODULE(AdapterStack);

class DecoderImpl : public torch::nn::Module {
 public:
  explicit DecoderImpl(const AutoencoderConfig& cfg);

  // Pre-clamp image in roughly [0,1]. Adapters are applied after each block
  // when `adapters` is non-null and enabled.
  torch::Tensor forward(const torch::Tensor& latent, AdapterStackImpl* adapters = nullptr,
                        const torch::Tensor& signed_bits = {});

  // Output channels of each decoder block, in order.
  std::vector<int64_t> block_channels() const;

  // Runs the vanilla decoder and returns the feature after block `block_idx`.
  torch::Tensor block_feature(const torch::Tensor& latent, size_t block_idx);

  static constexpr size_t kBlocks = 3;

 private:
  AutoencoderConfig cfg_;
  torch::nn::Conv2d conv_in_{nullptr}, up1_{nullptr}, up2_{nullptr}, conv_out_{nullptr};
  ResBlock block1_{nullptr}, block2_{nullptr}, block3_{nullptr};
  torch::nn::GroupNorm norm_out_{nullptr};
};
TORCH_MODULE(Decoder);

struct DecodedImage {
  ImageTensor image;  // clamped to [0, 1]
  torch::Tensor raw;  // pre-clamp, keeps gradients everywhere
};

// Parameter groups. Encoder and decoder are frozen for watermark training.
inline constexpr const char* kEncoderGroup = "encoder";
inline constexpr const char* kDecoderGroup = "decoder";
inline constexpr const char* kAdapterGroup = "adapters";

class MpwVaeImpl : public torch::nn::Module {
 public:
  MpwVaeImpl(const AutoencoderConfig& ae, const AdapterConfig& adapter);

  LatentCode encode(const ImageTensor& image);
  DecodedImage decode_plain(const LatentCode& latent);
  // Identical to decode_plain when the adapters are disabled.
  DecodedImage decode_watermarked(const LatentCode& latent, const WatermarkBits& bits);
  torch::Tensor adapter_forward(const torch::Tensor& feature, const WatermarkBits& bits,
                                size_t block_idx);

  // Stops gradients into encoder and vanilla decoder.
  void freeze_autoencoder();
  std::vector<torch::Tensor> adapter_parameters();
  std::vector<torch::Tensor> autoencoder_parameters();

  Encoder& encoder() { return encoder_; }
  Decoder& decoder() { return decoder_; }
  AdapterStack& adapters() { return adapters_; }
  const AutoencoderConfig& ae_config() const { return ae_cfg_; }
  const AdapterConfig& adapter_config() const { return adapter_cfg_; }

 private:
  void check_bits(const WatermarkBits& bits, int64_t batch) const;

  AutoencoderConfig ae_cfg_;
  AdapterConfig adapter_cfg_;
  Encoder encoder_{nullptr};
  Decoder decoder_{nullptr};
  AdapterStack adapters_{nullptr};
};
TORCH_MODULE(MpwVae);

}  // namespace wmguard

#endif  // WMGUARD_MPW_VAE_HPP_
