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

#include "wmguard/moe_gfn.hpp"

#include <algorithm>
#include <cmath>
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

torch::Tensor up2(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

void check_feature(const torch::Tensor& x, int64_t channels, const char* who) {
  if (x.dim() != 4 || x.size(1) != channels) {
    std::ostringstream os;
    os << who << ": expected B x " << channels << " x h x w, got " << x.sizes();
    throw ShapeError(os.str());
  }
}

// B x c x h x w <-> B x (h*w) x c
torch::Tensor to_tokens(const torch::Tensor& x) { return x.flatten(2).transpose(1, 2); }
torch::Tensor from_tokens(const torch::Tensor& t, int64_t h, int64_t w) {
  return t.transpose(1, 2).reshape({t.size(0), t.size(2), h, w});
}

}  // namespace

std::string to_string(Placement p) {
  switch (p) {
    case Placement::kNone: return "none";
    case Placement::kEnc: return "enc";
    case Placement::kDec: return "dec";
    case Placement::kEncDec: return "encdec";
  }
  return "?";
}

Placement placement_from_string(const std::string& s) {
  if (s == "none") return Placement::kNone;
  if (s == "enc") return Placement::kEnc;
  if (s == "dec") return Placement::kDec;
  if (s == "encdec") return Placement::kEncDec;
  throw ConfigError("moe.placement must be one of none, enc, dec, encdec; got " + s);
}

const char* to_string(ExpertKind k) {
  switch (k) {
    case ExpertKind::kWatermark: return "wm";
    case ExpertKind::kTamper: return "tamp";
    case ExpertKind::kBoundary: return "bound";
  }
  return "?";
}

int64_t ForensicConfig::active_experts() const {
  return int64_t{use_wm_expert} + int64_t{use_tamp_expert} + int64_t{use_bound_expert};
}

void ForensicConfig::validate() const {
  if (bit_length <= 0) throw ConfigError("bit_length must be positive");
  if (image_size <= 0 || image_size % 16 != 0) {
    throw ConfigError("image_size must be a positive multiple of 16, got " + std::to_string(image_size));
  }
  for (const auto w : widths) {
    if (w <= 0 || w % heads != 0) {
      throw ConfigError("unet widths must be positive multiples of moe.heads");
    }
  }
  if (patch_size < 1) throw ConfigError("moe.n must be >= 1");
  if (heads < 1) throw ConfigError("moe.heads must be >= 1");
  if (mlp_ratio < 1) throw ConfigError("moe.mlp_ratio must be >= 1");
  if (stem_hidden < 1) throw ConfigError("stem hidden width must be >= 1");
  if (placement != Placement::kNone && active_experts() == 0) {
    throw ConfigError("a MoFE block needs at least one expert");
  }
}

void to_json(nlohmann::json& j, const ForensicConfig& c) {
  nlohmann::json experts = nlohmann::json::array();
  if (c.use_wm_expert) experts.push_back("wm");
  if (c.use_tamp_expert) experts.push_back("tamp");
  if (c.use_bound_expert) experts.push_back("bound");
  j = nlohmann::json{
      {"moe",
       {{"n", c.patch_size},
        {"placement", to_string(c.placement)},
        {"heads", c.heads},
        {"mlp_ratio", c.mlp_ratio},
        {"experts", experts},
        {"router", c.use_router}}},
      {"unet", {{"widths", c.widths}, {"stem_hidden", c.stem_hidden}}},
      {"wm_head", {{"pooling", c.wm_pooling == WmPooling::kFlatten ? "flatten" : "gap"}}}};
}

namespace {
void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& allowed, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown key " + where + "." + key);
    }
  }
}
}  // namespace

void from_json(const nlohmann::json& j, ForensicConfig& c) {
  reject_unknown(j, {"moe", "unet", "wm_head"}, "forensic");
  if (j.contains("moe")) {
    const auto& m = j.at("moe");
    reject_unknown(m, {"n", "placement", "heads", "mlp_ratio", "experts", "router"}, "moe");
    c.patch_size = m.value("n", c.patch_size);
    c.heads = m.value("heads", c.heads);
    c.mlp_ratio = m.value("mlp_ratio", c.mlp_ratio);
    if (m.contains("placement")) c.placement = placement_from_string(m.at("placement").get<std::string>());
    if (m.contains("experts")) {
      c.use_wm_expert = c.use_tamp_expert = c.use_bound_expert = false;
      for (const auto& e : m.at("experts")) {
        const auto name = e.get<std::string>();
        if (name == "wm") {
          c.use_wm_expert = true;
        } else if (name == "tamp") {
          c.use_tamp_expert = true;
        } else if (name == "bound") {
          c.use_bound_expert = true;
        } else {
          throw ConfigError("unknown expert " + name + " (expected wm, tamp, bound)");
        }
      }
    }
    c.use_router = m.value("router", c.use_router);
  }
  if (j.contains("unet")) {
    const auto& u = j.at("unet");
    reject_unknown(u, {"widths", "stem_hidden"}, "unet");
    if (u.contains("widths")) c.widths = u.at("widths").get<std::array<int64_t, 3>>();
    c.stem_hidden = u.value("stem_hidden", c.stem_hidden);
  }
  if (j.contains("wm_head")) {
    const auto& h = j.at("wm_head");
    reject_unknown(h, {"pooling"}, "wm_head");
    const auto p = h.value("pooling", std::string("flatten"));
    if (p == "flatten") {
      c.wm_pooling = WmPooling::kFlatten;
    } else if (p == "gap") {
      c.wm_pooling = WmPooling::kGlobalAverage;
    } else {
      throw ConfigError("wm_head.pooling must be flatten or gap, got " + p);
    }
  }
  c.validate();
}

MultiHeadSelfAttentionImpl::MultiHeadSelfAttentionImpl(int64_t dim, int64_t heads)
    : dim_(dim), heads_(heads) {
  if (dim % heads != 0) throw ConfigError("attention width must be divisible by the head count");
  qkv_ = register_module("qkv", nn::Linear(dim, 3 * dim));
  out_ = register_module("out", nn::Linear(dim, dim));
}

torch::Tensor MultiHeadSelfAttentionImpl::forward(const torch::Tensor& tokens) {
  const int64_t b = tokens.size(0), t = tokens.size(1), hd = dim_ / heads_;
  auto qkv = qkv_(tokens).view({b, t, 3, heads_, hd}).permute({2, 0, 3, 1, 4});
  auto q = qkv[0], k = qkv[1], v = qkv[2];
  auto attn = torch::softmax(torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(hd)), -1);
  auto y = torch::matmul(attn, v).transpose(1, 2).reshape({b, t, dim_});
  return out_(y);
}

TransformerBranchImpl::TransformerBranchImpl(int64_t dim, int64_t tokens, int64_t heads, int64_t mlp_ratio)
    : tokens_(tokens) {
  pos_ = register_parameter("pos", torch::randn({1, tokens, dim}) * 0.02);
  norm1_ = register_module("norm1", nn::LayerNorm(nn::LayerNormOptions({dim})));
  proj_ = register_module("proj", nn::Linear(dim, dim));
  attn_ = register_module("attn", MultiHeadSelfAttention(dim, heads));
  norm2_ = register_module("norm2", nn::LayerNorm(nn::LayerNormOptions({dim})));
  fc1_ = register_module("fc1", nn::Linear(dim, dim * mlp_ratio));
  fc2_ = register_module("fc2", nn::Linear(dim * mlp_ratio, dim));
  nn::init::zeros_(fc2_->weight);
  nn::init::zeros_(fc2_->bias);
}

torch::Tensor TransformerBranchImpl::forward(const torch::Tensor& tokens) {
  if (tokens.dim() != 3 || tokens.size(1) != tokens_) {
    std::ostringstream os;
    os << "transformer branch built for " << tokens_ << " tokens, got " << tokens.sizes();
    throw ShapeError(os.str());
  }
  auto h = attn_(proj_(norm1_(tokens + pos_)));
  return tokens + fc2_(F::gelu(fc1_(norm2_(h))));
}

int64_t effective_patch_size(int64_t n, int64_t h, int64_t w) { return std::min({n, h, w}); }

WatermarkExpertImpl::WatermarkExpertImpl(int64_t channels, int64_t h, int64_t w, const ForensicConfig& cfg) {
  branch_ = register_module("branch", TransformerBranch(channels, h * w, cfg.heads, cfg.mlp_ratio));
}

torch::Tensor WatermarkExpertImpl::forward(const torch::Tensor& x) {
  return from_tokens(branch_(to_tokens(x)), x.size(2), x.size(3));
}

TamperExpertImpl::TamperExpertImpl(int64_t channels, int64_t h, int64_t w, const ForensicConfig& cfg)
    : n_(effective_patch_size(cfg.patch_size, h, w)) {
  if (h % n_ != 0 || w % n_ != 0) {
    std::ostringstream os;
    os << "feature " << h << "x" << w << " not divisible by patch size " << n_;
    throw ShapeError(os.str());
  }
  branch_ = register_module("branch", TransformerBranch(channels, n_ * n_, cfg.heads, cfg.mlp_ratio));
}

torch::Tensor TamperExpertImpl::forward(const torch::Tensor& x) {
  const int64_t b = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3), n = n_;
  if (h % n != 0 || w % n != 0) throw ShapeError("tamper expert: feature not divisible by patch size");
  // B c (h/n) n (w/n) n -> (B h/n w/n) (n n) c
  auto t = x.reshape({b, c, h / n, n, w / n, n}).permute({0, 2, 4, 3, 5, 1}).reshape({-1, n * n, c});
  t = branch_(t);
  return t.reshape({b, h / n, w / n, n, n, c}).permute({0, 5, 1, 3, 2, 4}).reshape({b, c, h, w});
}

torch::Tensor spectrum_split(const torch::Tensor& x) {
  const auto f = torch::fft::fft2(x, c10::nullopt, {-2, -1}, "ortho");
  return torch::cat({torch::real(f), torch::imag(f)}, 1);
}

torch::Tensor spectrum_merge(const torch::Tensor& spec) {
  const int64_t c = spec.size(1) / 2;
  const auto f = torch::complex(spec.narrow(1, 0, c).contiguous(), spec.narrow(1, c, c).contiguous());
  return torch::real(torch::fft::ifft2(f, c10::nullopt, {-2, -1}, "ortho"));
}

BoundaryExpertImpl::BoundaryExpertImpl(int64_t channels, int64_t h, int64_t w, const ForensicConfig& cfg) {
  branch_ = register_module("branch", TransformerBranch(2 * channels, h * w, cfg.heads, cfg.mlp_ratio));
}

torch::Tensor BoundaryExpertImpl::forward(const torch::Tensor& x) {
  const int64_t h = x.size(2), w = x.size(3);
  auto spec = from_tokens(branch_(to_tokens(spectrum_split(x))), h, w);
  return spectrum_merge(spec);
}

SoftRouterImpl::SoftRouterImpl(int64_t channels, int64_t experts) {
  const int64_t hidden = std::max<int64_t>(channels / 2, 1);
  fc1_ = register_module("fc1", nn::Conv2d(nn::Conv2dOptions(channels, hidden, 1)));
  fc2_ = register_module("fc2", nn::Conv2d(nn::Conv2dOptions(hidden, experts, 1)));
}

torch::Tensor SoftRouterImpl::logits(const torch::Tensor& x) { return fc2_(F::gelu(fc1_(x))); }

ExpertRouting SoftRouterImpl::forward(const torch::Tensor& x) { return {torch::softmax(logits(x), 1)}; }

MoFEImpl::MoFEImpl(int64_t channels, int64_t h, int64_t w, const ForensicConfig& cfg) {
  if (cfg.use_wm_expert) {
    experts_.push_back(register_module("wm", std::make_shared<WatermarkExpertImpl>(channels, h, w, cfg)));
  }
  if (cfg.use_tamp_expert) {
    experts_.push_back(register_module("tamp", std::make_shared<TamperExpertImpl>(channels, h, w, cfg)));
  }
  if (cfg.use_bound_expert) {
    experts_.push_back(register_module("bound", std::make_shared<BoundaryExpertImpl>(channels, h, w, cfg)));
  }
  if (experts_.empty()) throw ConfigError("MoFE block needs at least one expert");
  if (cfg.use_router) {
    router_ = register_module("router", SoftRouter(channels, static_cast<int64_t>(experts_.size())));
  }
}

std::vector<torch::Tensor> MoFEImpl::expert_outputs(const torch::Tensor& x) {
  std::vector<torch::Tensor> outs;
  outs.reserve(experts_.size());
  for (auto& e : experts_) outs.push_back(e->forward(x));
  return outs;
}

ExpertRouting MoFEImpl::route(const torch::Tensor& x) {
  if (router_.is_empty()) throw ConfigError("MoFE block was built without a router");
  return router_(x);
}

torch::Tensor MoFEImpl::fuse(const torch::Tensor& x, const torch::Tensor& weights) {
  const auto outs = expert_outputs(x);
  if (weights.size(1) != static_cast<int64_t>(outs.size())) {
    throw ShapeError("routing weights do not match the number of experts");
  }
  auto y = weights.narrow(1, 0, 1) * outs[0];
  for (size_t i = 1; i < outs.size(); ++i) y = y + weights.narrow(1, static_cast<int64_t>(i), 1) * outs[i];
  return y;
}

torch::Tensor MoFEImpl::forward(const torch::Tensor& x) {
  if (!router_.is_empty()) return fuse(x, router_(x).weights);
  // No router: plain summation of the expert outputs.
  const auto outs = expert_outputs(x);
  auto y = outs[0];
  for (size_t i = 1; i < outs.size(); ++i) y = y + outs[i];
  return y;
}

ConvBlockImpl::ConvBlockImpl(int64_t in, int64_t out)
    : conv1_(register_module("conv1", conv3x3(in, out))),
      conv2_(register_module("conv2", conv3x3(out, out))),
      norm1_(register_module("norm1", nn::GroupNorm(groups_for(out), out))),
      norm2_(register_module("norm2", nn::GroupNorm(groups_for(out), out))) {}

torch::Tensor ConvBlockImpl::forward(const torch::Tensor& x) {
  auto h = F::silu(norm1_(conv1_(x)));
  return F::silu(norm2_(conv2_(h)));
}

StemImpl::StemImpl(int64_t hidden, int64_t out)
    : conv1_(register_module("conv1", conv3x3(3, hidden, 2))),
      conv2_(register_module("conv2", conv3x3(hidden, out, 2))) {}

torch::Tensor StemImpl::forward(const torch::Tensor& image) {
  return F::silu(conv2_(F::silu(conv1_(image * 2 - 1))));
}

ForensicHeadsImpl::ForensicHeadsImpl(int64_t channels, int64_t feature_size, const ForensicConfig& cfg)
    : out_size_(cfg.image_size), pooling_(cfg.wm_pooling) {
  auto reflect = [](int64_t in, int64_t out) {
    return nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1).padding_mode(torch::kReflect));
  };
  mask1_ = register_module("mask1", reflect(channels, channels));
  mask2_ = register_module("mask2", reflect(channels, 1));
  wm1_ = register_module("wm1", conv3x3(channels, channels));
  wm2_ = register_module("wm2", conv3x3(channels, channels));
  const int64_t fc_in = pooling_ == WmPooling::kFlatten ? channels * feature_size * feature_size : channels;
  fc_ = register_module("fc", nn::Linear(fc_in, cfg.bit_length));
}

ForensicOutput ForensicHeadsImpl::forward(const torch::Tensor& feature) {
  auto m = mask2_(F::silu(mask1_(feature)));
  m = F::interpolate(m, F::InterpolateFuncOptions()
                            .size(std::vector<int64_t>{out_size_, out_size_})
                            .mode(torch::kBilinear)
                            .align_corners(false));
  auto w = F::silu(wm2_(F::silu(wm1_(feature))));
  w = pooling_ == WmPooling::kFlatten ? w.flatten(1) : w.mean({2, 3});
  return {m, fc_(w)};
}

ForensicNetImpl::ForensicNetImpl(const ForensicConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  const auto& w = cfg.widths;
  const int64_t s1 = cfg.image_size / 4, s2 = s1 / 2, s3 = s2 / 2;
  stem_ = register_module("stem", Stem(cfg.stem_hidden, w[0]));
  enc1_ = register_module("enc1", ConvBlock(w[0], w[0]));
  enc2_ = register_module("enc2", ConvBlock(w[0], w[1]));
  enc3_ = register_module("enc3", ConvBlock(w[1], w[2]));
  dec3_ = register_module("dec3", ConvBlock(w[2], w[2]));
  dec2_ = register_module("dec2", ConvBlock(w[2] + w[1], w[1]));
  dec1_ = register_module("dec1", ConvBlock(w[1] + w[0], w[0]));
  const std::array<int64_t, 3> sizes{s1, s2, s3};
  const bool enc = cfg.placement == Placement::kEnc || cfg.placement == Placement::kEncDec;
  const bool dec = cfg.placement == Placement::kDec || cfg.placement == Placement::kEncDec;
  if (enc) {
    for (size_t i = 0; i < 3; ++i) {
      enc_mofe_.push_back(register_module("enc_mofe" + std::to_string(i), MoFE(w[i], sizes[i], sizes[i], cfg)));
    }
  }
  if (dec) {
    // Decoder stages run from coarse to fine.
    for (size_t i = 0; i < 3; ++i) {
      const size_t s = 2 - i;
      dec_mofe_.push_back(register_module("dec_mofe" + std::to_string(i), MoFE(w[s], sizes[s], sizes[s], cfg)));
    }
  }
  heads_ = register_module("heads", ForensicHeads(w[0], s1, cfg));
}

size_t ForensicNetImpl::num_mofe_blocks() const { return enc_mofe_.size() + dec_mofe_.size(); }

torch::Tensor ForensicNetImpl::features(const ImageTensor& image) {
  check_image(image, "forensic forward");
  if (image.size(2) != cfg_.image_size || image.size(3) != cfg_.image_size) {
    std::ostringstream os;
    os << "forensic network built for " << cfg_.image_size << "x" << cfg_.image_size << " inputs, got "
       << image.size(2) << "x" << image.size(3);
    throw ShapeError(os.str());
  }
  auto enc_hook = [&](torch::Tensor h, size_t i) { return enc_mofe_.empty() ? h : enc_mofe_[i]->forward(h); };
  auto dec_hook = [&](torch::Tensor h, size_t i) { return dec_mofe_.empty() ? h : dec_mofe_[i]->forward(h); };

  auto e1 = enc_hook(enc1_(stem_(image)), 0);
  auto e2 = enc_hook(enc2_(F::avg_pool2d(e1, F::AvgPool2dFuncOptions(2))), 1);
  auto e3 = enc_hook(enc3_(F::avg_pool2d(e2, F::AvgPool2dFuncOptions(2))), 2);
  auto d = dec_hook(dec3_(e3), 0);
  d = dec_hook(dec2_(torch::cat({up2(d), e2}, 1)), 1);
  d = dec_hook(dec1_(torch::cat({up2(d), e1}, 1)), 2);
  return d;
}

ForensicOutput ForensicNetImpl::forward(const ImageTensor& image) { return heads_(features(image)); }

}  // namespace wmguard
