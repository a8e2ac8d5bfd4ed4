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

#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "test_util.hpp"

namespace wmguard {
namespace {

using testing::grad_check;
using testing::leaf;
using testing::weighted_sum;

ForensicConfig small_cfg() {
  ForensicConfig c;
  c.bit_length = 8;
  c.image_size = 32;
  c.widths = {8, 16, 16};
  c.stem_hidden = 8;
  c.heads = 2;
  c.patch_size = 4;
  return c;
}

void randomize_ffn(ExpertImpl& e, double std) {
  torch::NoGradGuard no_grad;
  e.branch()->ffn_out()->weight.normal_(0, std);
  e.branch()->ffn_out()->bias.normal_(0, std);
}

TEST(SoftRouter, WeightsLieOnTheSimplex) {
  torch::manual_seed(1);
  SoftRouter router(16, 3);
  const auto w = router(torch::randn({100, 16, 4, 4}) * 3).weights;
  EXPECT_EQ(w.sizes(), (std::vector<int64_t>{100, 3, 4, 4}));
  EXPECT_GE(w.min().item<float>(), 0.0f);
  EXPECT_LE((w.sum(1) - 1).abs().max().item<float>(), 1e-6f);
}

class TamperLocality : public ::testing::TestWithParam<int64_t> {};

TEST_P(TamperLocality, PerturbingOnePixelOnlyChangesItsPatch) {
  const int64_t n = GetParam();
  torch::manual_seed(n);
  auto cfg = small_cfg();
  cfg.patch_size = n;
  TamperExpertImpl expert(8, 16, 16, cfg);
  ASSERT_EQ(expert.effective_patch(), n);
  randomize_ffn(expert, 0.2);
  torch::NoGradGuard no_grad;
  const auto x = torch::randn({2, 8, 16, 16});
  auto x2 = x.clone();
  const int64_t pi = 5, pj = 10;
  x2[1][3][pi][pj] += 1.0;
  const auto a = expert.forward(x);
  const auto b = expert.forward(x2);
  const int64_t ti = pi / n, tj = pj / n;
  bool changed_inside = false;
  for (int64_t bi = 0; bi < 2; ++bi) {
    for (int64_t i = 0; i < 16 / n; ++i) {
      for (int64_t j = 0; j < 16 / n; ++j) {
        const auto pa = a[bi].slice(1, i * n, (i + 1) * n).slice(2, j * n, (j + 1) * n);
        const auto pb = b[bi].slice(1, i * n, (i + 1) * n).slice(2, j * n, (j + 1) * n);
        if (bi == 1 && i == ti && j == tj) {
          changed_inside = !torch::equal(pa, pb);
        } else {
          ASSERT_TRUE(torch::equal(pa, pb)) << "patch " << bi << "," << i << "," << j;
        }
      }
    }
  }
  EXPECT_TRUE(changed_inside);
}

INSTANTIATE_TEST_SUITE_P(PatchSizes, TamperLocality, ::testing::Values(2, 4, 8));

TEST(TamperExpert, PatchSizeClampedToSmallFeatures) {
  auto cfg = small_cfg();
  cfg.patch_size = 8;
  TamperExpertImpl expert(8, 4, 4, cfg);
  EXPECT_EQ(expert.effective_patch(), 4);
  EXPECT_THROW(TamperExpertImpl(8, 12, 12, cfg), ShapeError);
}

TEST(Spectrum, RoundTripAndParseval) {
  torch::manual_seed(2);
  const auto x = torch::randn({2, 3, 8, 8});
  const auto spec = spectrum_split(x);
  EXPECT_EQ(spec.sizes(), (std::vector<int64_t>{2, 6, 8, 8}));
  EXPECT_LE((spectrum_merge(spec) - x).abs().max().item<float>(), 1e-5f);
  const double ex = x.pow(2).sum().item<double>();
  const double es = spec.pow(2).sum().item<double>();
  EXPECT_NEAR(es / ex, 1.0, 1e-5);
}

TEST(Spectrum, MatchesBruteForceDft) {
  const int64_t h = 4, w = 6;
  const auto x = leaf({1, 1, h, w}, 5).detach();
  const auto spec = spectrum_split(x);
  const auto flat = x.contiguous().view(-1);
  const std::vector<double> xv(flat.data_ptr<double>(), flat.data_ptr<double>() + h * w);
  const auto want = testing::dft2_oracle(xv, h, w);
  auto sa = spec.accessor<double, 4>();
  for (int64_t k = 0; k < h; ++k) {
    for (int64_t l = 0; l < w; ++l) {
      EXPECT_NEAR(sa[0][0][k][l], want[static_cast<size_t>(k * w + l)].real(), 1e-12);
      EXPECT_NEAR(sa[0][1][k][l], want[static_cast<size_t>(k * w + l)].imag(), 1e-12);
    }
  }
}

TEST(Experts, IdentityAtInit) {
  torch::manual_seed(3);
  const auto cfg = small_cfg();
  torch::NoGradGuard no_grad;
  const auto x = torch::randn({2, 8, 8, 8});
  WatermarkExpertImpl wm(8, 8, 8, cfg);
  TamperExpertImpl tamp(8, 8, 8, cfg);
  BoundaryExpertImpl bound(8, 8, 8, cfg);
  EXPECT_TRUE(torch::equal(wm.forward(x), x));
  EXPECT_TRUE(torch::equal(tamp.forward(x), x));
  EXPECT_LE((bound.forward(x) - x).abs().max().item<float>(), 1e-5f);
  MoFE mofe(8, 8, 8, cfg);
  EXPECT_LE((mofe->forward(x) - x).abs().max().item<float>(), 1e-5f);
}

TEST(Experts, TransformerRejectsWrongTokenCount) {
  TransformerBranch branch(8, 16, 2, 2);
  EXPECT_THROW(branch->forward(torch::randn({1, 9, 8})), ShapeError);
}

TEST(MoFE, FuseIsTheWeightedSumOfExperts) {
  torch::manual_seed(4);
  const auto cfg = small_cfg();
  MoFE mofe(8, 8, 8, cfg);
  for (size_t i = 0; i < mofe->num_experts(); ++i) randomize_ffn(mofe->expert(i), 0.1);
  torch::NoGradGuard no_grad;
  const auto x = torch::randn({2, 8, 8, 8});
  const auto outs = mofe->expert_outputs(x);
  const auto w = mofe->route(x).weights;
  auto expect = torch::zeros_like(x);
  for (size_t i = 0; i < outs.size(); ++i) expect += w.narrow(1, static_cast<int64_t>(i), 1) * outs[i];
  EXPECT_TRUE(torch::allclose(mofe->forward(x), expect, 1e-5, 1e-6));
  EXPECT_THROW(mofe->fuse(x, torch::ones({2, 2, 8, 8})), ShapeError);
}

TEST(MoFE, WithoutRouterSumsExperts) {
  auto cfg = small_cfg();
  cfg.use_router = false;
  MoFE mofe(8, 8, 8, cfg);
  EXPECT_FALSE(mofe->has_router());
  torch::NoGradGuard no_grad;
  const auto x = torch::randn({1, 8, 8, 8});
  const auto outs = mofe->expert_outputs(x);
  EXPECT_TRUE(torch::allclose(mofe->forward(x), outs[0] + outs[1] + outs[2]));
}

TEST(MoFE, ExpertTogglesShrinkTheRouter) {
  auto cfg = small_cfg();
  cfg.use_bound_expert = false;
  MoFE mofe(8, 8, 8, cfg);
  EXPECT_EQ(mofe->num_experts(), 2u);
  EXPECT_EQ(mofe->expert(0).kind(), ExpertKind::kWatermark);
  EXPECT_EQ(mofe->expert(1).kind(), ExpertKind::kTamper);
  EXPECT_EQ(mofe->route(torch::randn({1, 8, 8, 8})).weights.size(1), 2);
  cfg.use_wm_expert = cfg.use_tamp_expert = false;
  EXPECT_THROW(MoFE(8, 8, 8, cfg), ConfigError);
}

TEST(ForensicNet, OutputShapes) {
  torch::manual_seed(5);
  ForensicNet net(small_cfg());
  const auto out = net->forward(torch::rand({3, 3, 32, 32}));
  EXPECT_EQ(out.mask_logits.sizes(), (std::vector<int64_t>{3, 1, 32, 32}));
  EXPECT_EQ(out.wm_logits.sizes(), (std::vector<int64_t>{3, 8}));
  EXPECT_THROW(net->forward(torch::rand({1, 3, 64, 64})), ShapeError);
}

TEST(ForensicNet, PlacementControlsBlockCount) {
  auto cfg = small_cfg();
  const std::pair<Placement, size_t> cases[] = {
      {Placement::kNone, 0}, {Placement::kEnc, 3}, {Placement::kDec, 3}, {Placement::kEncDec, 6}};
  for (const auto& [p, count] : cases) {
    cfg.placement = p;
    ForensicNet net(cfg);
    EXPECT_EQ(net->num_mofe_blocks(), count) << to_string(p);
    const auto out = net->forward(torch::rand({1, 3, 32, 32}));
    EXPECT_TRUE(torch::isfinite(out.wm_logits).all().item<bool>());
  }
}

TEST(ForensicNet, GapPoolingIsTranslationInvariantHeadInput) {
  auto cfg = small_cfg();
  cfg.wm_pooling = WmPooling::kGlobalAverage;
  ForensicNet net(cfg);
  EXPECT_EQ(net->forward(torch::rand({2, 3, 32, 32})).wm_logits.sizes(), (std::vector<int64_t>{2, 8}));
}

TEST(ForensicConfig, JsonRoundTripAndValidation) {
  auto c = small_cfg();
  c.placement = Placement::kEncDec;
  c.use_tamp_expert = false;
  c.use_router = false;
  nlohmann::json j = c;
  ForensicConfig back;
  back.bit_length = c.bit_length;
  back.image_size = c.image_size;
  from_json(j, back);
  EXPECT_EQ(back.placement, Placement::kEncDec);
  EXPECT_FALSE(back.use_tamp_expert);
  EXPECT_TRUE(back.use_wm_expert);
  EXPECT_FALSE(back.use_router);
  EXPECT_EQ(back.widths, c.widths);
  j["moe"]["k"] = 3;
  EXPECT_THROW(from_json(j, back), ConfigError);
  nlohmann::json bad = c;
  bad["moe"]["placement"] = "middle";
  EXPECT_THROW(from_json(bad, back), ConfigError);
  auto v = small_cfg();
  v.widths = {8, 15, 16};
  EXPECT_THROW(v.validate(), ConfigError);
  v = small_cfg();
  v.image_size = 40;
  EXPECT_THROW(v.validate(), ConfigError);
}

// Gradient checks run in double precision on tiny shapes.
class ExpertGrad : public ::testing::Test {
 protected:
  ForensicConfig cfg_ = [] {
    auto c = small_cfg();
    c.heads = 2;
    c.patch_size = 2;
    c.bit_length = 4;
    c.image_size = 16;
    c.widths = {4, 4, 4};
    c.stem_hidden = 4;
    return c;
  }();

  void check(torch::nn::Module& m, const std::function<torch::Tensor(const torch::Tensor&)>& f,
             std::vector<int64_t> shape, const char* what) {
    m.to(torch::kFloat64);
    const auto x = leaf(shape, 17);
    std::vector<torch::Tensor> inputs{x};
    for (auto& p : m.parameters()) inputs.push_back(p);
    const auto r = grad_check([&] { return weighted_sum(f(x)); }, inputs, 4);
    EXPECT_LE(r.max_rel_err, 1e-5) << what;
    EXPECT_GT(r.checked, 0);
  }
};

TEST_F(ExpertGrad, Watermark) {
  torch::manual_seed(6);
  WatermarkExpertImpl e(4, 4, 4, cfg_);
  randomize_ffn(e, 0.3);
  check(e, [&](const torch::Tensor& x) { return e.forward(x); }, {1, 4, 4, 4}, "wm");
}

TEST_F(ExpertGrad, Tamper) {
  torch::manual_seed(7);
  TamperExpertImpl e(4, 4, 4, cfg_);
  randomize_ffn(e, 0.3);
  check(e, [&](const torch::Tensor& x) { return e.forward(x); }, {1, 4, 4, 4}, "tamp");
}

TEST_F(ExpertGrad, Boundary) {
  torch::manual_seed(8);
  BoundaryExpertImpl e(2, 4, 4, cfg_);
  randomize_ffn(e, 0.3);
  check(e, [&](const torch::Tensor& x) { return e.forward(x); }, {1, 2, 4, 4}, "bound");
}

TEST_F(ExpertGrad, RoutedMixture) {
  torch::manual_seed(9);
  MoFE m(4, 4, 4, cfg_);
  for (size_t i = 0; i < m->num_experts(); ++i) randomize_ffn(m->expert(i), 0.3);
  check(*m, [&](const torch::Tensor& x) { return m->forward(x); }, {1, 4, 4, 4}, "mofe");
}

TEST_F(ExpertGrad, Heads) {
  torch::manual_seed(10);
  ForensicHeads h(4, 4, cfg_);
  check(*h, [&](const torch::Tensor& x) {
        const auto o = h->forward(x);
        return torch::cat({o.mask_logits.flatten(), o.wm_logits.flatten()});
      }, {1, 4, 4, 4}, "heads");
}

TEST_F(ExpertGrad, WholeNetwork) {
  torch::manual_seed(11);
  ForensicNet net(cfg_);
  for (size_t i = 0; i < net->num_mofe_blocks(); ++i) {
    for (size_t e = 0; e < net->dec_mofe(i)->num_experts(); ++e) randomize_ffn(net->dec_mofe(i)->expert(e), 0.3);
  }
  check(*net, [&](const torch::Tensor& x) {
        const auto o = net->forward(x);
        return torch::cat({o.mask_logits.flatten(), o.wm_logits.flatten()});
      }, {1, 3, 16, 16}, "net");
}

}  // namespace
}  // namespace wmguard
