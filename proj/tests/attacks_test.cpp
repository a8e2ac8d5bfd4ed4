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

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "oracles.hpp"
#include "test_util.hpp"
#include "wmguard/metrics.hpp"

namespace wmguard {
namespace {

using jpeg_codec::Block;
using testing::dct_oracle;

// Smooth test image: low-frequency gradients and a soft disc.
torch::Tensor smooth_image(int64_t size) {
  auto yy = torch::linspace(0, 1, size).view({size, 1}).expand({size, size});
  auto xx = torch::linspace(0, 1, size).view({1, size}).expand({size, size});
  auto disc = torch::sigmoid((0.1 - ((xx - 0.5).pow(2) + (yy - 0.4).pow(2))) * 40);
  return torch::stack({0.2 + 0.6 * xx, 0.3 + 0.4 * yy * disc, 0.8 - 0.5 * disc}).unsqueeze(0);
}

TEST(JpegCodec, DctMatchesTextbookFormula) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-128, 127);
  for (int t = 0; t < 5; ++t) {
    Block f{};
    for (auto& v : f) v = u(rng);
    const auto got = jpeg_codec::dct8x8(f);
    const auto want = dct_oracle(f);
    for (size_t i = 0; i < 64; ++i) ASSERT_NEAR(got[i], want[i], 1e-6) << i;
    const auto back = jpeg_codec::idct8x8(got);
    for (size_t i = 0; i < 64; ++i) ASSERT_NEAR(back[i], f[i], 1e-9) << i;
  }
}

TEST(JpegCodec, QualityScaling) {
  const auto q50 = jpeg_codec::luma_table(50);
  EXPECT_EQ(q50[0], 16);
  EXPECT_EQ(q50[1], 11);
  EXPECT_EQ(q50[63], 99);
  // quality 95 scales by 10%: (16*10+50)/100 = 2.
  EXPECT_EQ(jpeg_codec::luma_table(95)[0], 2);
  // quality 10 scales by 500% and saturates at 255.
  EXPECT_EQ(jpeg_codec::luma_table(10)[0], 80);
  EXPECT_EQ(jpeg_codec::luma_table(10)[63], 255);
  EXPECT_EQ(jpeg_codec::chroma_table(50)[0], 17);
}

TEST(Jpeg, FlatImageIsExact) {
  const auto img = torch::full({1, 3, 16, 16}, 100.0 / 255.0);
  EXPECT_TRUE(torch::allclose(jpeg(img, 50), img, 0, 1e-7));
}

TEST(Jpeg, OutputOnThe8BitGridAndQualityOrdering) {
  const auto img = smooth_image(64);
  double prev = 0;
  for (int q : {10, 30, 50, 70, 90, 95}) {
    const auto out = jpeg(img, q);
    ASSERT_EQ(out.sizes(), img.sizes());
    const auto scaled = out.to(torch::kFloat64) * 255;
    ASSERT_LE((scaled - scaled.round()).abs().max().item<double>(), 1e-3);
    const double p = psnr(out, img);
    EXPECT_GT(p, prev - 0.5) << "quality " << q;
    prev = p;
  }
  EXPECT_GT(prev, 35.0);
}

TEST(Jpeg, HandlesSizesNotMultipleOfSixteen) {
  const auto img = smooth_image(64).narrow(2, 0, 37).narrow(3, 0, 29).contiguous();
  const auto out = jpeg(img, 75);
  EXPECT_EQ(out.sizes(), img.sizes());
  EXPECT_GT(psnr(out, img), 28.0);
}

TEST(Gaussian, DeterministicPerSeedWithRequestedSigma) {
  const auto img = torch::full({2, 3, 64, 64}, 0.5);
  const auto a = gaussian_noise(img, 3.0, 11);
  EXPECT_TRUE(torch::equal(a, gaussian_noise(img, 3.0, 11)));
  EXPECT_FALSE(torch::equal(a, gaussian_noise(img, 3.0, 12)));
  EXPECT_NEAR((a - img).std().item<double>(), 3.0 / 255.0, 2e-4);
  EXPECT_TRUE(torch::equal(gaussian_noise(img, 0.0, 1), img));
  const auto big = gaussian_noise(img, 200.0, 1);
  EXPECT_GE(big.min().item<float>(), 0.0f);
  EXPECT_LE(big.max().item<float>(), 1.0f);
}

TEST(Poisson, DeterministicAndUnbiased) {
  const auto img = torch::full({1, 3, 64, 64}, 0.4);
  const auto a = poisson_noise(img, 100.0, 3);
  EXPECT_TRUE(torch::equal(a, poisson_noise(img, 100.0, 3)));
  EXPECT_NEAR(a.mean().item<double>(), 0.4, 0.01);
}

TEST(ColorJitter, UnitFactorIsIdentity) {
  torch::manual_seed(2);
  const auto img = torch::rand({2, 3, 16, 16});
  EXPECT_TRUE(torch::equal(color_jitter(img, ColorKind::kBrightness, 1.0), img));
  EXPECT_TRUE(torch::allclose(color_jitter(img, ColorKind::kContrast, 1.0), img, 0, 1e-6));
  EXPECT_TRUE(torch::allclose(color_jitter(img, ColorKind::kSaturation, 1.0), img, 0, 1e-6));
}

TEST(ColorJitter, ZeroFactorsCollapse) {
  torch::manual_seed(3);
  const auto img = torch::rand({1, 3, 16, 16});
  EXPECT_TRUE(torch::equal(color_jitter(img, ColorKind::kBrightness, 0.0), torch::zeros_like(img)));
  const auto gray = color_jitter(img, ColorKind::kSaturation, 0.0);
  EXPECT_TRUE(torch::allclose(gray[0][0], gray[0][1]));
  EXPECT_TRUE(torch::allclose(gray[0][1], gray[0][2]));
  const auto flat = color_jitter(img, ColorKind::kContrast, 0.0);
  EXPECT_LE((flat - flat.mean()).abs().max().item<float>(), 1e-6f);
  EXPECT_THROW(color_jitter(img, ColorKind::kBrightness, -0.1), ConfigError);
}

TEST(ResizeCycle, IdentityAtUnitScaleAndConstantsPreserved) {
  torch::manual_seed(4);
  const auto img = torch::rand({1, 3, 32, 32});
  EXPECT_TRUE(torch::equal(resize_cycle(img, 1.0), img));
  const auto c = torch::full({1, 3, 32, 32}, 0.25);
  EXPECT_TRUE(torch::allclose(resize_cycle(c, 0.5), c, 0, 1e-6));
  const auto smooth = smooth_image(64);
  EXPECT_GT(psnr(resize_cycle(smooth, 0.5), smooth), psnr(resize_cycle(smooth, 0.25), smooth));
}

TEST(AttackSpec, ValidationAndJson) {
  AttackSpec s{AttackKind::kJpeg, 50, 0};
  EXPECT_NO_THROW(s.validate());
  EXPECT_EQ(s.label(), "jpeg(50.000000)");
  s.param = 9;
  EXPECT_THROW(s.validate(), ConfigError);
  s.param = 50.5;
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_THROW((AttackSpec{AttackKind::kBrightness, 1.6, 0}.validate()), ConfigError);
  EXPECT_THROW((AttackSpec{AttackKind::kResizeCycle, 0.0, 0}.validate()), ConfigError);
  EXPECT_THROW(attack_kind_from_string("blur"), ConfigError);
  const nlohmann::json j = {{"kind", "gaussian"}, {"param", 3}, {"seed", 5}};
  const auto back = j.get<AttackSpec>();
  EXPECT_EQ(back.kind, AttackKind::kGaussian);
  EXPECT_EQ(back.param, 3.0);
  EXPECT_EQ(back.seed, 5u);
  EXPECT_THROW((nlohmann::json{{"kind", "gaussian"}, {"sigma", 3}}.get<AttackSpec>()), ConfigError);
}

TEST(AttackSuite, LoadsListAndDispatches) {
  const auto dir = testing::fresh_dir("suite");
  const auto path = dir / "suite.json";
  std::ofstream(path) << R"([{"kind":"identity"},{"kind":"gaussian","param":3,"seed":1},{"kind":"jpeg","param":50}])";
  const auto suite = load_attack_suite(path.string());
  ASSERT_EQ(suite.size(), 3u);
  const auto img = smooth_image(32);
  EXPECT_TRUE(torch::equal(apply_attack(img, suite[0]), img));
  EXPECT_TRUE(torch::equal(apply_attack(img, suite[1]), gaussian_noise(img, 3, 1)));
  EXPECT_TRUE(torch::equal(apply_attack(img, suite[2]), jpeg(img, 50)));
  std::ofstream(dir / "bad.json") << R"({"kind":"identity"})";
  EXPECT_THROW(load_attack_suite((dir / "bad.json").string()), ConfigError);
}

}  // namespace
}  // namespace wmguard
