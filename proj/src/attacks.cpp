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

#include "wmguard/attacks.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "wmguard/util.hpp"

namespace F = torch::nn::functional;

namespace wmguard {
namespace {

at::Generator make_generator(uint64_t seed) { return at::detail::createCPUGenerator(seed); }

torch::Tensor luma(const ImageTensor& img) {
  return 0.299 * img.select(1, 0) + 0.587 * img.select(1, 1) + 0.114 * img.select(1, 2);
}

}  // namespace

const char* to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::kIdentity: return "identity";
    case AttackKind::kGaussian: return "gaussian";
    case AttackKind::kPoisson: return "poisson";
    case AttackKind::kJpeg: return "jpeg";
    case AttackKind::kResizeCycle: return "resize_cycle";
    case AttackKind::kBrightness: return "brightness";
    case AttackKind::kContrast: return "contrast";
    case AttackKind::kSaturation: return "saturation";
  }
  return "unknown";
}

AttackKind attack_kind_from_string(const std::string& name) {
  for (const auto k : {AttackKind::kIdentity, AttackKind::kGaussian, AttackKind::kPoisson,
                       AttackKind::kJpeg, AttackKind::kResizeCycle, AttackKind::kBrightness,
                       AttackKind::kContrast, AttackKind::kSaturation}) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError("unknown attack kind '" + name + "'");
}

void AttackSpec::validate() const {
  auto bad = [&](const char* range) {
    throw ConfigError(std::string("attack ") + to_string(kind) + " param " + format_double(param) +
                      " outside " + range);
  };
  switch (kind) {
    case AttackKind::kIdentity: break;
    case AttackKind::kGaussian:
      if (!(param >= 0 && param <= 255)) bad("[0,255]");
      break;
    case AttackKind::kPoisson:
      if (!(param > 0)) bad("(0,inf)");
      break;
    case AttackKind::kJpeg:
      if (!(param >= 10 && param <= 95) || param != std::floor(param)) bad("integers in [10,95]");
      break;
    case AttackKind::kResizeCycle:
      if (!(param > 0 && param <= 1)) bad("(0,1]");
      break;
    case AttackKind::kBrightness:
    case AttackKind::kContrast:
    case AttackKind::kSaturation:
      if (!(param >= 0.5 && param <= 1.5)) bad("[0.5,1.5]");
      break;
  }
}

std::string AttackSpec::label() const {
  if (kind == AttackKind::kIdentity) return "identity";
  return std::string(to_string(kind)) + "(" + format_double(param) + ")";
}

void to_json(nlohmann::json& j, const AttackSpec& s) {
  j = nlohmann::json{{"kind", to_string(s.kind)}, {"param", s.param}, {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, AttackSpec& s) {
  for (const auto& [key, _] : j.items()) {
    if (key != "kind" && key != "param" && key != "seed") throw ConfigError("unknown attack key " + key);
  }
  s.kind = attack_kind_from_string(j.at("kind").get<std::string>());
  s.param = j.value("param", 0.0);
  if (s.kind == AttackKind::kPoisson && !j.contains("param")) s.param = 255.0;
  s.seed = j.value("seed", uint64_t{0});
  s.validate();
}

std::vector<AttackSpec> load_attack_suite(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse attack suite " + path + ": " + e.what());
  }
  if (!j.is_array()) throw ConfigError("attack suite must be a JSON list");
  return j.get<std::vector<AttackSpec>>();
}

ImageTensor gaussian_noise(const ImageTensor& img, double sigma_255, uint64_t seed) {
  if (sigma_255 < 0) throw ConfigError("gaussian sigma must be >= 0");
  if (sigma_255 == 0) return img.clone();
  auto gen = make_generator(seed);
  const auto noise = torch::randn(img.sizes(), gen, img.options()) * (sigma_255 / 255.0);
  return (img + noise).clamp(0, 1);
}

ImageTensor poisson_noise(const ImageTensor& img, double peak, uint64_t seed) {
  if (!(peak > 0)) throw ConfigError("poisson peak must be > 0");
  auto gen = make_generator(seed);
  const auto rates = (img.to(torch::kFloat64).clamp(0, 1) * peak);
  return (torch::poisson(rates, gen) / peak).clamp(0, 1).to(img.scalar_type());
}

ImageTensor resize_cycle(const ImageTensor& img, double scale) {
  if (!(scale > 0 && scale <= 1)) throw ConfigError("resize scale must lie in (0,1]");
  check_image(img, "resize_cycle");
  if (scale == 1.0) return img.clone();
  const int64_t h = img.size(2), w = img.size(3);
  const auto sh = std::max<int64_t>(1, std::llround(static_cast<double>(h) * scale));
  const auto sw = std::max<int64_t>(1, std::llround(static_cast<double>(w) * scale));
  auto opts = F::InterpolateFuncOptions().mode(torch::kBilinear).align_corners(false);
  const auto small = F::interpolate(img, opts.size(std::vector<int64_t>{sh, sw}));
  return F::interpolate(small, opts.size(std::vector<int64_t>{h, w})).clamp(0, 1);
}

ImageTensor color_jitter(const ImageTensor& img, ColorKind kind, double factor) {
  check_image(img, "color_jitter");
  if (factor < 0) throw ConfigError("color factor must be >= 0");
  switch (kind) {
    case ColorKind::kBrightness:
      return (img * factor).clamp(0, 1);
    case ColorKind::kContrast: {
      const auto mean = luma(img).mean({1, 2}).view({-1, 1, 1, 1});
      return (mean + factor * (img - mean)).clamp(0, 1);
    }
    case ColorKind::kSaturation: {
      const auto gray = luma(img).unsqueeze(1).expand_as(img);
      return (gray + factor * (img - gray)).clamp(0, 1);
    }
  }
  return img.clone();
}

namespace jpeg_codec {
namespace {

constexpr QuantTable kLumaBase = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

constexpr QuantTable kChromaBase = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

const std::array<double, 64>& dct_matrix() {
  static const std::array<double, 64> m = [] {
    std::array<double, 64> c{};
    for (int u = 0; u < 8; ++u) {
      const double a = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int x = 0; x < 8; ++x) c[u * 8 + x] = a * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
    }
    return c;
  }();
  return m;
}

QuantTable scaled(const QuantTable& base, int quality) {
  if (quality < 1 || quality > 100) throw ConfigError("jpeg quality must lie in [1,100]");
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  QuantTable out{};
  for (size_t i = 0; i < 64; ++i) out[i] = std::clamp((base[i] * scale + 50) / 100, 1, 255);
  return out;
}

// Plane stored row-major with dimensions padded to a multiple of 8 by edge
// replication.
struct Plane {
  int64_t h = 0, w = 0;
  std::vector<double> v;
  double& at(int64_t y, int64_t x) { return v[static_cast<size_t>(y * w + x)]; }
  double at(int64_t y, int64_t x) const { return v[static_cast<size_t>(y * w + x)]; }
};

Plane pad8(const Plane& p) {
  Plane out;
  out.h = (p.h + 7) / 8 * 8;
  out.w = (p.w + 7) / 8 * 8;
  out.v.resize(static_cast<size_t>(out.h * out.w));
  for (int64_t y = 0; y < out.h; ++y)
    for (int64_t x = 0; x < out.w; ++x) out.at(y, x) = p.at(std::min(y, p.h - 1), std::min(x, p.w - 1));
  return out;
}

void quantize_plane(Plane& p, const QuantTable& q) {
  for (int64_t by = 0; by < p.h; by += 8) {
    for (int64_t bx = 0; bx < p.w; bx += 8) {
      Block blk{};
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) blk[static_cast<size_t>(y * 8 + x)] = p.at(by + y, bx + x) - 128.0;
      auto c = dct8x8(blk);
      for (size_t i = 0; i < 64; ++i) c[i] = std::nearbyint(c[i] / q[i]) * q[i];
      const auto r = idct8x8(c);
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) p.at(by + y, bx + x) = r[static_cast<size_t>(y * 8 + x)] + 128.0;
    }
  }
}

}  // namespace

Block dct8x8(const Block& pixels) {
  const auto& c = dct_matrix();
  Block tmp{}, out{};
  // tmp = C * f, out = tmp * C^T
  for (int u = 0; u < 8; ++u)
    for (int x = 0; x < 8; ++x) {
      double s = 0;
      for (int k = 0; k < 8; ++k) s += c[u * 8 + k] * pixels[static_cast<size_t>(k * 8 + x)];
      tmp[static_cast<size_t>(u * 8 + x)] = s;
    }
  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v) {
      double s = 0;
      for (int k = 0; k < 8; ++k) s += tmp[static_cast<size_t>(u * 8 + k)] * c[v * 8 + k];
      out[static_cast<size_t>(u * 8 + v)] = s;
    }
  return out;
}

Block idct8x8(const Block& coeffs) {
  const auto& c = dct_matrix();
  Block tmp{}, out{};
  // tmp = C^T * F, out = tmp * C
  for (int x = 0; x < 8; ++x)
    for (int v = 0; v < 8; ++v) {
      double s = 0;
      for (int k = 0; k < 8; ++k) s += c[k * 8 + x] * coeffs[static_cast<size_t>(k * 8 + v)];
      tmp[static_cast<size_t>(x * 8 + v)] = s;
    }
  for (int x = 0; x < 8; ++x)
    for (int y = 0; y < 8; ++y) {
      double s = 0;
      for (int k = 0; k < 8; ++k) s += tmp[static_cast<size_t>(x * 8 + k)] * c[k * 8 + y];
      out[static_cast<size_t>(x * 8 + y)] = s;
    }
  return out;
}

QuantTable luma_table(int quality) { return scaled(kLumaBase, quality); }
QuantTable chroma_table(int quality) { return scaled(kChromaBase, quality); }

}  // namespace jpeg_codec

ImageTensor jpeg(const ImageTensor& img, int quality) {
  using namespace jpeg_codec;
  if (quality < 10 || quality > 95) throw ConfigError("jpeg quality must lie in [10,95]");
  check_image(img, "jpeg");
  const auto lq = luma_table(quality), cq = chroma_table(quality);
  const int64_t batch = img.size(0), h = img.size(2), w = img.size(3);
  const auto src = (img.to(torch::kFloat64).clamp(0, 1) * 255.0).round().contiguous();
  auto out = torch::empty({batch, 3, h, w}, torch::kFloat64);
  const auto s = src.accessor<double, 4>();
  auto o = out.accessor<double, 4>();
  const int64_t ch = (h + 1) / 2, cw = (w + 1) / 2;
  for (int64_t b = 0; b < batch; ++b) {
    Plane y{h, w, std::vector<double>(static_cast<size_t>(h * w))};
    Plane cb_full = y, cr_full = y;
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j) {
        const double r = s[b][0][i][j], g = s[b][1][i][j], bl = s[b][2][i][j];
        y.at(i, j) = 0.299 * r + 0.587 * g + 0.114 * bl;
        cb_full.at(i, j) = -0.168736 * r - 0.331264 * g + 0.5 * bl + 128.0;
        cr_full.at(i, j) = 0.5 * r - 0.418688 * g - 0.081312 * bl + 128.0;
      }
    // 4:2:0 by 2x2 box averaging with edge replication.
    Plane cb{ch, cw, std::vector<double>(static_cast<size_t>(ch * cw))}, cr = cb;
    for (int64_t i = 0; i < ch; ++i)
      for (int64_t j = 0; j < cw; ++j) {
        double sb = 0, sr = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int64_t yy = std::min(2 * i + dy, h - 1), xx = std::min(2 * j + dx, w - 1);
            sb += cb_full.at(yy, xx);
            sr += cr_full.at(yy, xx);
          }
        cb.at(i, j) = sb / 4.0;
        cr.at(i, j) = sr / 4.0;
      }
    auto yp = pad8(y), cbp = pad8(cb), crp = pad8(cr);
    quantize_plane(yp, lq);
    quantize_plane(cbp, cq);
    quantize_plane(crp, cq);
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j) {
        const double yv = yp.at(i, j);
        const double cbv = cbp.at(i / 2, j / 2) - 128.0, crv = crp.at(i / 2, j / 2) - 128.0;
        const double rgb[3] = {yv + 1.402 * crv, yv - 0.344136 * cbv - 0.714136 * crv, yv + 1.772 * cbv};
        for (int c = 0; c < 3; ++c) o[b][c][i][j] = std::clamp(std::nearbyint(rgb[c]), 0.0, 255.0) / 255.0;
      }
  }
  return out.to(img.scalar_type());
}

ImageTensor apply_attack(const ImageTensor& img, const AttackSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case AttackKind::kIdentity: return img.clone();
    case AttackKind::kGaussian: return gaussian_noise(img, spec.param, spec.seed);
    case AttackKind::kPoisson: return poisson_noise(img, spec.param, spec.seed);
    case AttackKind::kJpeg: return jpeg(img, static_cast<int>(spec.param));
    case AttackKind::kResizeCycle: return resize_cycle(img, spec.param);
    case AttackKind::kBrightness: return color_jitter(img, ColorKind::kBrightness, spec.param);
    case AttackKind::kContrast: return color_jitter(img, ColorKind::kContrast, spec.param);
    case AttackKind::kSaturation: return color_jitter(img, ColorKind::kSaturation, spec.param);
  }
  return img.clone();
}

}  // namespace wmguard
