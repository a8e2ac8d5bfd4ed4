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

#include "wmguard/tamper_synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <sstream>

namespace wmguard {
namespace {

constexpr int kMaxMaskRetries = 100;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// Closed curve r(theta) = base * (1 + sum_k a_k cos(k theta + phi_k)) with a
// random anisotropic stretch; low harmonics keep the outline smooth.
struct Blob {
  double cx, cy, base, stretch, rot;
  std::array<double, 3> amp, phase;

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double u = (std::cos(rot) * dx + std::sin(rot) * dy) / stretch;
    const double v = -std::sin(rot) * dx + std::cos(rot) * dy;
    const double r = std::hypot(u, v);
    const double theta = std::atan2(v, u);
    double radius = 1.0;
    for (size_t k = 0; k < amp.size(); ++k) radius += amp[k] * std::cos((k + 2) * theta + phase[k]);
    return r <= base * radius;
  }
};

// Star-shaped polygon around a centre, vertices at sorted random angles.
struct Polygon {
  std::vector<std::pair<double, double>> pts;

  bool contains(double x, double y) const {
    bool inside = false;
    for (size_t i = 0, j = pts.size() - 1; i < pts.size(); j = i++) {
      const auto [xi, yi] = pts[i];
      const auto [xj, yj] = pts[j];
      if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) inside = !inside;
    }
    return inside;
  }
};

Blob random_blob(Rng& rng) {
  Blob b{};
  b.cx = uniform(rng, 0.15, 0.85);
  b.cy = uniform(rng, 0.15, 0.85);
  b.base = uniform(rng, 0.08, 0.3);
  b.stretch = uniform(rng, 0.6, 1.6);
  b.rot = uniform(rng, 0.0, std::numbers::pi);
  for (size_t k = 0; k < b.amp.size(); ++k) {
    b.amp[k] = uniform(rng, 0.0, 0.25 / static_cast<double>(k + 1));
    b.phase[k] = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  }
  return b;
}

Polygon random_polygon(Rng& rng) {
  const double cx = uniform(rng, 0.15, 0.85), cy = uniform(rng, 0.15, 0.85);
  const double base = uniform(rng, 0.1, 0.35);
  const int n = uniform_int(rng, 3, 7);
  std::vector<double> angles(static_cast<size_t>(n));
  for (auto& a : angles) a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  std::sort(angles.begin(), angles.end());
  Polygon p;
  for (const double a : angles) {
    const double r = base * uniform(rng, 0.6, 1.0);
    p.pts.emplace_back(cx + r * std::cos(a), cy + r * std::sin(a));
  }
  return p;
}

}  // namespace

void SpliceConfig::validate() const {
  auto prob = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!prob(p_threshold) || !prob(semantic_mask_prob)) {
    throw ConfigError("splice probabilities must lie in [0,1]: " + describe());
  }
  if (!(coverage_min > 0.0 && coverage_max < 1.0 && coverage_min <= coverage_max)) {
    throw ConfigError("splice coverage range must satisfy 0 < min <= max < 1: " + describe());
  }
}

std::string SpliceConfig::describe() const {
  std::ostringstream os;
  os << "{p_threshold=" << p_threshold << ", semantic_mask_prob=" << semantic_mask_prob
     << ", coverage_range=[" << coverage_min << "," << coverage_max << "], rng_seed=" << rng_seed
     << "}";
  return os.str();
}

void to_json(nlohmann::json& j, const SpliceConfig& c) {
  j = nlohmann::json{{"p_threshold", c.p_threshold},
                     {"semantic_mask_prob", c.semantic_mask_prob},
                     {"coverage_range", {c.coverage_min, c.coverage_max}},
                     {"rng_seed", c.rng_seed}};
}

void from_json(const nlohmann::json& j, SpliceConfig& c) {
  for (const auto& [key, _] : j.items()) {
    if (key != "p_threshold" && key != "semantic_mask_prob" && key != "coverage_range" &&
        key != "rng_seed") {
      throw ConfigError("unknown key splice." + key);
    }
  }
  c.p_threshold = j.value("p_threshold", c.p_threshold);
  c.semantic_mask_prob = j.value("semantic_mask_prob", c.semantic_mask_prob);
  if (j.contains("coverage_range")) {
    const auto& r = j.at("coverage_range");
    if (!r.is_array() || r.size() != 2) throw ConfigError("splice.coverage_range must be [min,max]");
    c.coverage_min = r[0].get<double>();
    c.coverage_max = r[1].get<double>();
  }
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  c.validate();
}

const char* to_string(SourceKind kind) {
  return kind == SourceKind::kOriginal ? "original" : "reconstruction";
}

torch::Tensor blob_mask(int64_t height, int64_t width, Rng& rng) {
  const int shapes = uniform_int(rng, 1, 4);
  std::vector<Blob> blobs;
  std::vector<Polygon> polys;
  for (int s = 0; s < shapes; ++s) {
    if (uniform(rng, 0.0, 1.0) < 0.6) {
      blobs.push_back(random_blob(rng));
    } else {
      polys.push_back(random_polygon(rng));
    }
  }
  auto mask = torch::zeros({height, width}, torch::kFloat32);
  auto acc = mask.accessor<float, 2>();
  for (int64_t i = 0; i < height; ++i) {
    const double y = (static_cast<double>(i) + 0.5) / static_cast<double>(height);
    for (int64_t j = 0; j < width; ++j) {
      const double x = (static_cast<double>(j) + 0.5) / static_cast<double>(width);
      bool in = false;
      for (const auto& b : blobs) in = in || b.contains(x, y);
      for (const auto& p : polys) in = in || p.contains(x, y);
      acc[i][j] = in ? 1.0f : 0.0f;
    }
  }
  return mask;
}

torch::Tensor box_mask(int64_t height, int64_t width, Rng& rng) {
  const int h = uniform_int(rng, std::max<int>(1, static_cast<int>(height / 8)),
                            static_cast<int>(height * 3 / 4));
  const int w = uniform_int(rng, std::max<int>(1, static_cast<int>(width / 8)),
                            static_cast<int>(width * 3 / 4));
  const int y0 = uniform_int(rng, 0, static_cast<int>(height) - h);
  const int x0 = uniform_int(rng, 0, static_cast<int>(width) - w);
  auto mask = torch::zeros({height, width}, torch::kFloat32);
  mask.slice(0, y0, y0 + h).slice(1, x0, x0 + w).fill_(1.0f);
  return mask;
}

TamperMask sample_mask(const SpliceConfig& cfg, int64_t height, int64_t width, Rng& rng) {
  if (height <= 0 || width <= 0) throw ShapeError("mask shape must be positive");
  for (int attempt = 0; attempt < kMaxMaskRetries; ++attempt) {
    const bool semantic = uniform(rng, 0.0, 1.0) < cfg.semantic_mask_prob;
    auto m = semantic ? blob_mask(height, width, rng) : box_mask(height, width, rng);
    const double cov = m.mean().item<double>();
    if (cov >= cfg.coverage_min && cov <= cfg.coverage_max) {
      return TamperMask(m.view({1, 1, height, width}));
    }
  }
  throw MaskSamplingError("mask sampling exhausted " + std::to_string(kMaxMaskRetries) +
                          " retries for " + std::to_string(height) + "x" + std::to_string(width) +
                          " with config " + cfg.describe());
}

TamperMask sample_masks(const SpliceConfig& cfg, int64_t batch, int64_t height, int64_t width,
                        Rng& rng) {
  std::vector<torch::Tensor> parts;
  parts.reserve(static_cast<size_t>(batch));
  for (int64_t b = 0; b < batch; ++b) parts.push_back(sample_mask(cfg, height, width, rng).tensor());
  return TamperMask(torch::cat(parts, 0));
}

ImageTensor splice(const ImageTensor& watermarked, const ImageTensor& clean, const TamperMask& mask) {
  const auto& m = mask.tensor();
  if (watermarked.sizes() != clean.sizes() || watermarked.dim() != 4 ||
      m.size(0) != watermarked.size(0) || m.size(2) != watermarked.size(2) ||
      m.size(3) != watermarked.size(3)) {
    std::ostringstream os;
    os << "splice shape mismatch: watermarked " << watermarked.sizes() << ", clean "
       << clean.sizes() << ", mask " << m.sizes();
    throw ShapeError(os.str());
  }
  // torch::where keeps the selected source bit-exact, which the arithmetic
  // form (1-M)*Y + M*C only guarantees for finite inputs.
  return torch::where(m.to(watermarked.scalar_type()) > 0.5, clean, watermarked);
}

SourceKind choose_source(double u, const SpliceConfig& cfg) {
  return u <= cfg.p_threshold ? SourceKind::kOriginal : SourceKind::kReconstruction;
}

TrainingSample make_training_sample(const ImageTensor& original, const ImageTensor& reconstruction,
                                    const ImageTensor& watermarked, const WatermarkBits& bits,
                                    const TamperMask& mask, const std::vector<double>& u,
                                    const SpliceConfig& cfg) {
  if (original.sizes() != reconstruction.sizes() || original.sizes() != watermarked.sizes()) {
    throw ShapeError("make_training_sample: X, X_hat and Y must share a shape");
  }
  const int64_t batch = original.size(0);
  if (static_cast<int64_t>(u.size()) != batch || bits.batch() != batch) {
    throw ShapeError("make_training_sample: batch size mismatch");
  }
  TrainingSample out;
  std::vector<torch::Tensor> clean;
  clean.reserve(static_cast<size_t>(batch));
  for (int64_t b = 0; b < batch; ++b) {
    const auto kind = choose_source(u[static_cast<size_t>(b)], cfg);
    out.source_kind.push_back(kind);
    clean.push_back(kind == SourceKind::kOriginal ? original[b] : reconstruction[b]);
  }
  out.spliced = splice(watermarked, torch::stack(clean), mask);
  out.mask = mask;
  out.bits = bits;
  return out;
}

TrainingSample make_training_sample(const ImageTensor& original, const ImageTensor& reconstruction,
                                    const ImageTensor& watermarked, const WatermarkBits& bits,
                                    const SpliceConfig& cfg, Rng& rng) {
  const int64_t batch = original.size(0);
  std::vector<double> u(static_cast<size_t>(batch));
  for (auto& v : u) v = uniform(rng, 0.0, 1.0);
  const auto mask = sample_masks(cfg, batch, original.size(2), original.size(3), rng);
  return make_training_sample(original, reconstruction, watermarked, bits, mask, u, cfg);
}

}  // namespace wmguard
