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

#include "wmguard/losses.hpp"

#include <cmath>
#include <sstream>

namespace F = torch::nn::functional;

namespace wmguard {
namespace {

void same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) {
    std::ostringstream os;
    os << what << ": shape mismatch " << a.sizes() << " vs " << b.sizes();
    throw ShapeError(os.str());
  }
}

torch::Tensor clamped_sigmoid(const torch::Tensor& logits) {
  return torch::sigmoid(logits).clamp(kProbEps, 1.0 - kProbEps);
}

}  // namespace

void LossConfig::validate() const {
  if (!(lambda0 >= 0.0 && lambda0 <= 1.0)) throw ConfigError("loss.lambda0 must lie in [0,1]");
  if (!(lambda1 > 0.0) || !(lambda2 > 0.0)) throw ConfigError("loss.lambda1/lambda2 must be > 0");
  if (ps_backend == PerceptualBackend::kExternal && !external_ps) {
    throw ConfigError("loss.ps_backend=external requires a registered perceptual metric");
  }
}

void to_json(nlohmann::json& j, const LossConfig& c) {
  j = nlohmann::json{{"lambda0", c.lambda0},
                     {"lambda1", c.lambda1},
                     {"lambda2", c.lambda2},
                     {"ps_backend", c.ps_backend == PerceptualBackend::kPyramidL1 ? "pyramid_l1"
                                                                                  : "external"}};
}

void from_json(const nlohmann::json& j, LossConfig& c) {
  for (const auto& [key, _] : j.items()) {
    if (key != "lambda0" && key != "lambda1" && key != "lambda2" && key != "ps_backend") {
      throw ConfigError("unknown key loss." + key);
    }
  }
  c.lambda0 = j.value("lambda0", c.lambda0);
  c.lambda1 = j.value("lambda1", c.lambda1);
  c.lambda2 = j.value("lambda2", c.lambda2);
  const auto backend = j.value("ps_backend", std::string("pyramid_l1"));
  if (backend == "pyramid_l1") {
    c.ps_backend = PerceptualBackend::kPyramidL1;
  } else if (backend == "external") {
    c.ps_backend = PerceptualBackend::kExternal;
  } else {
    throw ConfigError("loss.ps_backend must be pyramid_l1 or external, got " + backend);
  }
}

void to_json(nlohmann::json& j, const LossReport& r) {
  j = nlohmann::json{{"sim", r.sim},       {"wm", r.wm},         {"wbce", r.wbce},
                     {"dice", r.dice},     {"tamper", r.tamper}, {"total", r.total},
                     {"objective", r.objective}};
}

torch::Tensor pyramid_l1(const torch::Tensor& a, const torch::Tensor& b) {
  auto pa = a, pb = b;
  auto sum = torch::zeros({}, a.options());
  for (int level = 0; level < 3; ++level) {
    pa = F::avg_pool2d(pa, F::AvgPool2dFuncOptions(2));
    pb = F::avg_pool2d(pb, F::AvgPool2dFuncOptions(2));
    sum = sum + (pa - pb).abs().mean();
  }
  return sum;
}

torch::Tensor sim_loss(const ImageTensor& x_hat, const ImageTensor& y, const LossConfig& cfg) {
  same_shape(x_hat, y, "sim_loss");
  const auto l1 = (x_hat - y).abs().mean();
  if (cfg.ps_backend == PerceptualBackend::kExternal) {
    if (!cfg.external_ps) throw ConfigError("external perceptual metric not registered");
    return l1 + cfg.external_ps(x_hat, y);
  }
  return l1 + pyramid_l1(x_hat, y);
}

torch::Tensor wm_loss(const torch::Tensor& bits, const torch::Tensor& w_logits) {
  same_shape(bits, w_logits, "wm_loss");
  const auto p = clamped_sigmoid(w_logits);
  const auto w = bits.to(w_logits.scalar_type());
  return -(w * torch::log(p) + (1 - w) * torch::log(1 - p)).mean();
}

torch::Tensor wbce_loss(const torch::Tensor& mask, const torch::Tensor& m_logits,
                        const LossConfig& cfg) {
  same_shape(mask, m_logits, "wbce_loss");
  const auto p = clamped_sigmoid(m_logits);
  const auto m = mask.to(m_logits.scalar_type());
  return -(cfg.lambda1 * m * torch::log(p) + cfg.lambda2 * (1 - m) * torch::log(1 - p)).mean();
}

torch::Tensor dice_from_probs(const torch::Tensor& mask, const torch::Tensor& probs) {
  same_shape(mask, probs, "dice_loss");
  const auto m = mask.to(probs.scalar_type());
  const auto inter = (m * probs).sum();
  const auto denom = (m * m).sum() + (probs * probs).sum() + kDiceEps;
  return 1 - 2 * inter / denom;
}

torch::Tensor dice_loss(const torch::Tensor& mask, const torch::Tensor& m_logits) {
  return dice_from_probs(mask, torch::sigmoid(m_logits));
}

torch::Tensor tamper_loss(const torch::Tensor& mask, const torch::Tensor& m_logits,
                          const LossConfig& cfg) {
  return cfg.lambda0 * wbce_loss(mask, m_logits, cfg) + (1 - cfg.lambda0) * dice_loss(mask, m_logits);
}

TotalLoss total_loss(const LossParts& parts, const LossConfig& cfg, const TermWeights& weights) {
  const auto tamper = cfg.lambda0 * parts.wbce + (1 - cfg.lambda0) * parts.dice;
  TotalLoss out;
  if (weights.sim == 1.0 && weights.tamper == 1.0) {
    out.total = parts.sim + parts.wm + tamper;
  } else {
    out.total = weights.sim * parts.sim + parts.wm + weights.tamper * tamper;
  }
  auto& r = out.report;
  r.sim = parts.sim.item<double>();
  r.wm = parts.wm.item<double>();
  r.wbce = parts.wbce.item<double>();
  r.dice = parts.dice.item<double>();
  // Recomputed in double so the report satisfies its invariants exactly.
  r.tamper = cfg.lambda0 * r.wbce + (1 - cfg.lambda0) * r.dice;
  r.total = r.sim + r.wm + r.tamper;
  r.objective = weights.sim * r.sim + r.wm + weights.tamper * r.tamper;
  return out;
}

LossReport total_loss(double sim, double wm, double tamper) {
  LossReport r;
  r.sim = sim;
  r.wm = wm;
  r.tamper = tamper;
  r.total = sim + wm + tamper;
  r.objective = r.total;
  return r;
}

}  // namespace wmguard
