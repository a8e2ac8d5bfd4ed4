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

// Training objective. Every loss returns a differentiable scalar tensor;
// LossReport carries the detached values.
//
//   total  = sim + wm + tamper
//   sim    = mean|x_hat - y| + PS(x_hat, y)
//   wm     = BCE(bits, sigmoid(w_logits))
//   tamper = lambda0 * wbce + (1 - lambda0) * dice

#ifndef WMGUARD_LOSSES_HPP_
#define WMGUARD_LOSSES_HPP_

#include <functional>

#include "json.hpp"

#include "wmguard/types.hpp"

namespace wmguard {

inline constexpr double kProbEps = 1e-7;
inline constexpr double kDiceEps = 1e-6;

enum class PerceptualBackend { kPyramidL1, kExternal };

using PerceptualFn = std::function<torch::Tensor(const torch::Tensor&, const torch::Tensor&)>;

struct LossConfig {
  double lambda0 = 0.2;  // WBCE share of the tamper loss
  double lambda1 = 2.0;  // foreground weight
  double lambda2 = 0.5;  // background weight
  PerceptualBackend ps_backend = PerceptualBackend::kPyramidL1;
  // Required when ps_backend == kExternal.
  PerceptualFn external_ps;

  void validate() const;
};

void to_json(nlohmann::json& j, const LossConfig& c);
void from_json(const nlohmann::json& j, LossConfig& c);

struct LossReport {
  double sim = 0, wm = 0, wbce = 0, dice = 0, tamper = 0, total = 0;
  // What the optimizer saw; equals `total` unless warm-up weights apply.
  double objective = 0;
};

void to_json(nlohmann::json& j, const LossReport& r);

// Sum of mean-L1 distances over three 2x mean-pooled levels.
torch::Tensor pyramid_l1(const torch::Tensor& a, const torch::Tensor& b);

torch::Tensor sim_loss(const ImageTensor& x_hat, const ImageTensor& y, const LossConfig& cfg);
torch::Tensor wm_loss(const torch::Tensor& bits, const torch::Tensor& w_logits);
torch::Tensor wbce_loss(const torch::Tensor& mask, const torch::Tensor& m_logits,
                        const LossConfig& cfg);
torch::Tensor dice_loss(const torch::Tensor& mask, const torch::Tensor& m_logits);
// Dice on probabilities directly, bypassing the sigmoid.
torch::Tensor dice_from_probs(const torch::Tensor& mask, const torch::Tensor& probs);
torch::Tensor tamper_loss(const torch::Tensor& mask, const torch::Tensor& m_logits,
                          const LossConfig& cfg);

struct LossParts {
  torch::Tensor sim, wm, wbce, dice;
};

// Combines the parts; `total` keeps the graph for backward.
struct TotalLoss {
  torch::Tensor total;
  LossReport report;
};

// Multipliers on the similarity and tamper terms during warm-up.
struct TermWeights {
  double sim = 1.0;
  double tamper = 1.0;
};

TotalLoss total_loss(const LossParts& parts, const LossConfig& cfg, const TermWeights& weights = {});

// Report-only overload used for bookkeeping and tests.
LossReport total_loss(double sim, double wm, double tamper);

}  // namespace wmguard

#endif  // WMGUARD_LOSSES_HPP_
