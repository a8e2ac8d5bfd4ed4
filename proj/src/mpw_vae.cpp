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

#include "wmguard/mpw_vae.hpp"

#include <sstream>

namespace F = torch::nn::functional;
namespace nn = torch::nn;

namespace wmguard {
namespace {

int64_t groups_for(int64_t channels) {
  for (int64_t g : {8, 4, 2}) {
    if (channels % g == 0) return g;
  }
  return 1;
}

nn::Conv2d conv3x3(int64_t in, int64_t out, int64_t stride = 1) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

torch::Tensor upsample2x(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kNearest));
}

const char* layout_name(EmbeddingLayout l) {
  return l == EmbeddingLayout::kTiled ? "tiled" : "spatial_grid";
}

}  // namespace

void AutoencoderConfig::validate() const {
  for (const auto w : widths) {
    if (w <= 0) throw ConfigError("autoencoder widths must be positive");
  }
  if (latent_channels <= 0) throw ConfigError("autoencoder latent_channels must be positive");
  if (downsample != 4) throw ConfigError("autoencoder downsample factor is fixed at 4");
}

void AdapterConfig::validate() const {
  if (bit_length <= 0) throw ConfigError("bit_length must be positive");
  if (hidden <= 0) throw ConfigError("adapter hidden width must be positive");
  if (grid <= 0) throw ConfigError("adapter grid must be positive");
}

void to_json(nlohmann::json& j, const AutoencoderConfig& c) {
  j = nlohmann::json{{"widths", c.widths}, {"latent_channels", c.latent_channels}};
}

void from_json(const nlohmann::json& j, AutoencoderConfig& c) {
  for (const auto& [key, _] : j.items()) {
    if (key != "widths" && key != "latent_channels") throw ConfigError("unknown key autoencoder." + key);
  }
  if (j.contains("widths")) c.widths = j.at("widths").get<std::array<int64_t, 3>>();
  c.latent_channels = j.value("latent_channels", c.latent_channels);
  c.validate();
}

void to_json(nlohmann::json& j, const AdapterConfig& c) {
  j = nlohmann::json{{"hidden", c.hidden}, {"layout", layout_name(c.layout)}, {"grid", c.grid}};
}

void from_json(const nlohmann::json& j, AdapterConfig& c) {
  for (const auto& [key, _] : j.items()) {
    if (key != "hidden" && key != "layout" && key != "grid") throw ConfigError("unknown key adapter." + key);
  }
  c.hidden = j.value("hidden", c.hidden);
  c.grid = j.value("grid", c.grid);
  const auto layout = j.value("layout", std::string(layout_name(c.layout)));
  if (layout == "tiled") {
    c.layout = EmbeddingLayout::kTiled;
  } else if (layout == "spatial_grid") {
    c.layout = EmbeddingLayout::kSpatialGrid;
  } else {
    throw ConfigError("adapter.layout must be tiled or spatial_grid, got " + layout);
  }
  c.validate();
}

ResBlockImpl::ResBlockImpl(int64_t channels)
    : norm1_(register_module("norm1", nn::GroupNorm(groups_for(channels), channels))),
      norm2_(register_module("norm2", nn::GroupNorm(groups_for(channels), channels))),
      conv1_(register_module("conv1", conv3x3(channels, channels))),
      conv2_(register_module("conv2", conv3x3(channels, channels))) {}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x) {
  auto h = conv1_(F::silu(norm1_(x)));
  h = conv2_(F::silu(norm2_(h)));
  return x + h;
}

EncoderImpl::EncoderImpl(const AutoencoderConfig& cfg) {
  const auto& w = cfg.widths;
  conv_in_ = register_module("conv_in", conv3x3(3, w[0]));
  block1_ = register_module("block1", ResBlock(w[0]));
  down1_ = register_module("down1", conv3x3(w[0], w[1], 2));
  block2_ = register_module("block2", ResBlock(w[1]));
  down2_ = register_module("down2", conv3x3(w[1], w[2], 2));
  block3_ = register_module("block3", ResBlock(w[2]));
  conv_out_ = register_module("conv_out", conv3x3(w[2], cfg.latent_channels));
}

torch::Tensor EncoderImpl::forward(const torch::Tensor& image) {
  auto h = conv_in_(image * 2 - 1);
  h = down1_(block1_(h));
  h = down2_(block2_(h));
  return conv_out_(F::silu(block3_(h)));
}

WatermarkAdapterImpl::WatermarkAdapterImpl(const AdapterConfig& cfg, int64_t channels)
    : cfg_(cfg), channels_(channels) {
  const int64_t embed_out =
      cfg.layout == EmbeddingLayout::kTiled ? channels : channels * cfg.grid * cfg.grid;
  fc1_ = register_module("fc1", nn::Linear(cfg.bit_length, cfg.hidden));
  fc2_ = register_module("fc2", nn::Linear(cfg.hidden, embed_out));
  // Twice the groups over the concatenation keeps feature and embedding
  // channels in separate groups, so neither swamps the other's statistics.
  norm1_ = register_module("norm1", nn::GroupNorm(2 * groups_for(channels), 2 * channels));
  conv1_ = register_module("conv1", conv3x3(2 * channels, channels));
  norm2_ = register_module("norm2", nn::GroupNorm(groups_for(channels), channels));
  conv2_ = register_module("conv2", conv3x3(channels, channels));
  // Zero residual at init: an untrained adapter is an exact identity.
  nn::init::zeros_(conv2_->weight);
  nn::init::zeros_(conv2_->bias);
}

torch::Tensor WatermarkAdapterImpl::embed(const torch::Tensor& signed_bits, int64_t height,
                                          int64_t width) {
  auto e = fc2_(F::silu(fc1_(signed_bits)));
  const int64_t batch = signed_bits.size(0);
  if (cfg_.layout == EmbeddingLayout::kTiled) {
    return e.view({batch, channels_, 1, 1}).expand({batch, channels_, height, width});
  }
  e = e.view({batch, channels_, cfg_.grid, cfg_.grid});
  return F::interpolate(e, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{height, width})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

torch::Tensor WatermarkAdapterImpl::forward(const torch::Tensor& feature,
                                            const torch::Tensor& signed_bits) {
  if (feature.dim() != 4 || feature.size(1) != channels_) {
    std::ostringstream os;
    os << "adapter expects " << channels_ << " channels, got feature " << feature.sizes();
    throw ShapeError(os.str());
  }
  if (signed_bits.dim() != 2 || signed_bits.size(1) != cfg_.bit_length ||
      signed_bits.size(0) != feature.size(0)) {
    std::ostringstream os;
    os << "adapter expects B x " << cfg_.bit_length << " bits, got " << signed_bits.sizes();
    throw ShapeError(os.str());
  }
  const auto e = embed(signed_bits, feature.size(2), feature.size(3));
  const auto h = conv1_(F::silu(norm1_(torch::cat({feature, e}, 1))));
  return feature + conv2_(F::silu(norm2_(h)));
}

AdapterStackImpl::AdapterStackImpl(const AdapterConfig& cfg, const std::vector<int64_t>& block_channels)
    : cfg_(cfg) {
  for (size_t i = 0; i < block_channels.size(); ++i) {
    adapters_.push_back(
        register_module("adapter" + std::to_string(i), WatermarkAdapter(cfg, block_channels[i])));
  }
}

DecoderImpl::DecoderImpl(const AutoencoderConfig& cfg) : cfg_(cfg) {
  const auto& w = cfg.widths;
  conv_in_ = register_module("conv_in", conv3x3(cfg.latent_channels, w[2]));
  block1_ = register_module("block1", ResBlock(w[2]));
  up1_ = register_module("up1", conv3x3(w[2], w[1]));
  block2_ = register_module("block2", ResBlock(w[1]));
  up2_ = register_module("up2", conv3x3(w[1], w[0]));
  block3_ = register_module("block3", ResBlock(w[0]));
  norm_out_ = register_module("norm_out", nn::GroupNorm(groups_for(w[0]), w[0]));
  conv_out_ = register_module("conv_out", conv3x3(w[0], 3));
}

std::vector<int64_t> DecoderImpl::block_channels() const {
  return {cfg_.widths[2], cfg_.widths[1], cfg_.widths[0]};
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& latent, AdapterStackImpl* adapters,
                                   const torch::Tensor& signed_bits) {
  const bool inject = adapters != nullptr && adapters->enabled();
  auto after_block = [&](torch::Tensor h, size_t idx) {
    return inject ? adapters->at(idx)->forward(h, signed_bits) : h;
  };
  auto h = block1_(conv_in_(latent));
  h = after_block(h, 0);
  h = block2_(up1_(upsample2x(h)));
  h = after_block(h, 1);
  h = block3_(up2_(upsample2x(h)));
  h = after_block(h, 2);
  return (conv_out_(F::silu(norm_out_(h))) + 1) / 2;
}

torch::Tensor DecoderImpl::block_feature(const torch::Tensor& latent, size_t block_idx) {
  if (block_idx >= kBlocks) throw ShapeError("decoder block index out of range");
  auto h = block1_(conv_in_(latent));
  if (block_idx == 0) return h;
  h = block2_(up1_(upsample2x(h)));
  if (block_idx == 1) return h;
  return block3_(up2_(upsample2x(h)));
}

MpwVaeImpl::MpwVaeImpl(const AutoencoderConfig& ae, const AdapterConfig& adapter)
    : ae_cfg_(ae), adapter_cfg_(adapter) {
  ae.validate();
  adapter.validate();
  encoder_ = register_module(kEncoderGroup, Encoder(ae));
  decoder_ = register_module(kDecoderGroup, Decoder(ae));
  adapters_ = register_module(kAdapterGroup, AdapterStack(adapter, decoder_->block_channels()));
}

LatentCode MpwVaeImpl::encode(const ImageTensor& image) {
  check_image(image, "encode");
  if (image.size(2) % ae_cfg_.downsample != 0 || image.size(3) % ae_cfg_.downsample != 0) {
    std::ostringstream os;
    os << "encode: image size " << image.size(2) << "x" << image.size(3)
       << " not divisible by downsample factor " << ae_cfg_.downsample;
    throw ShapeError(os.str());
  }
  return {encoder_(image)};
}

DecodedImage MpwVaeImpl::decode_plain(const LatentCode& latent) {
  if (latent.data.dim() != 4 || latent.data.size(1) != ae_cfg_.latent_channels) {
    std::ostringstream os;
    os << "decode: expected B x " << ae_cfg_.latent_channels << " x h x w latent, got "
       << latent.data.sizes();
    throw ShapeError(os.str());
  }
  auto raw = decoder_(latent.data);
  return {raw.clamp(0, 1), raw};
}

void MpwVaeImpl::check_bits(const WatermarkBits& bits, int64_t batch) const {
  if (bits.length() != adapter_cfg_.bit_length) {
    throw ShapeError("watermark length " + std::to_string(bits.length()) + " does not match L=" +
                     std::to_string(adapter_cfg_.bit_length));
  }
  if (bits.batch() != batch && bits.batch() != 1) {
    throw ShapeError("watermark batch " + std::to_string(bits.batch()) + " does not match latent batch " +
                     std::to_string(batch));
  }
}

DecodedImage MpwVaeImpl::decode_watermarked(const LatentCode& latent, const WatermarkBits& bits) {
  const int64_t batch = latent.data.size(0);
  check_bits(bits, batch);
  if (!adapters_->enabled()) return decode_plain(latent);
  auto signed_bits = bits.signed_tensor().to(latent.data.scalar_type());
  if (signed_bits.size(0) != batch) signed_bits = signed_bits.expand({batch, bits.length()});
  auto raw = decoder_->forward(latent.data, adapters_.get(), signed_bits);
  return {raw.clamp(0, 1), raw};
}

torch::Tensor MpwVaeImpl::adapter_forward(const torch::Tensor& feature, const WatermarkBits& bits,
                                          size_t block_idx) {
  if (block_idx >= adapters_->size()) throw ShapeError("adapter index out of range");
  check_bits(bits, feature.size(0));
  auto signed_bits = bits.signed_tensor().to(feature.scalar_type());
  if (signed_bits.size(0) != feature.size(0)) signed_bits = signed_bits.expand({feature.size(0), -1});
  return adapters_->at(block_idx)->forward(feature, signed_bits);
}

void MpwVaeImpl::freeze_autoencoder() {
  for (auto& p : encoder_->parameters()) p.set_requires_grad(false);
  for (auto& p : decoder_->parameters()) p.set_requires_grad(false);
}

std::vector<torch::Tensor> MpwVaeImpl::adapter_parameters() { return adapters_->parameters(); }

std::vector<torch::Tensor> MpwVaeImpl::autoencoder_parameters() {
  auto params = encoder_->parameters();
  for (auto& p : decoder_->parameters()) params.push_back(p);
  return params;
}

}  // namespace wmguard
