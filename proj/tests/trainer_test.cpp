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

#include "wmguard/trainer.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "test_util.hpp"
#include "wmguard/image_io.hpp"

namespace wmguard {
namespace {

using testing::fresh_dir;
using testing::tiny_config;

std::unique_ptr<Trainer> make_trainer(const RunConfig& cfg) {
  torch::manual_seed(cfg.seed);
  MpwVae vae(cfg.autoencoder, cfg.adapter);
  ForensicNet net(cfg.forensic);
  return std::make_unique<Trainer>(cfg, vae, net);
}

ImageTensor corpus(int64_t n, int64_t size = 32) { return synth_corpus(n, size, 3); }

bool same_parameters(torch::nn::Module& a, torch::nn::Module& b) {
  const auto pa = a.named_parameters(true), pb = b.named_parameters(true);
  if (pa.size() != pb.size()) return false;
  for (const auto& item : pa) {
    if (!torch::equal(item.value(), pb[item.key()])) return false;
  }
  return true;
}

std::vector<std::string> log_without_clock(const std::filesystem::path& path) {
  std::vector<std::string> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    j.erase("wallclock");
    out.push_back(j.dump());
  }
  return out;
}

TEST(EpochOrder, PermutationVaryingByEpoch) {
  const auto a = epoch_order(50, 7, 0), b = epoch_order(50, 7, 1);
  EXPECT_EQ(std::set<int64_t>(a.begin(), a.end()).size(), 50u);
  EXPECT_EQ(*std::min_element(a.begin(), a.end()), 0);
  EXPECT_EQ(*std::max_element(a.begin(), a.end()), 49);
  EXPECT_NE(a, b);
  EXPECT_EQ(a, epoch_order(50, 7, 0));
}

TEST(Trainer, AutoencoderStaysFrozen) {
  auto cfg = tiny_config();
  cfg.train.warmup_hold = 0;
  cfg.train.warmup_ramp = 0;
  auto trainer = make_trainer(cfg);
  const auto before = snapshot_groups(*trainer->vae(), {kEncoderGroup, kDecoderGroup});
  ASSERT_FALSE(before.empty());
  const auto data = corpus(8);
  for (int step = 0; step < 100; ++step) {
    Rng rng(static_cast<uint64_t>(step));
    trainer->train_step(data.narrow(0, (step % 2) * 4, 4), rng);
  }
  const auto after = snapshot_groups(*trainer->vae(), {kEncoderGroup, kDecoderGroup});
  const auto check = assert_frozen(before, after);
  EXPECT_TRUE(check.unchanged) << check.first_changed;
  EXPECT_EQ(trainer->step(), 100);
}

TEST(Trainer, AssertFrozenNamesTheChangedTensor) {
  auto cfg = tiny_config();
  auto trainer = make_trainer(cfg);
  const auto before = snapshot_groups(*trainer->vae(), {kEncoderGroup});
  auto after = before;
  const auto victim = std::next(after.begin(), 2)->first;
  after[victim] = after[victim] + 1e-3;
  const auto check = assert_frozen(before, after);
  EXPECT_FALSE(check.unchanged);
  EXPECT_EQ(check.first_changed, victim);
}

TEST(Trainer, OneStepMovesAdaptersAndForensicNet) {
  auto cfg = tiny_config();
  cfg.train.warmup_hold = 0;
  cfg.train.warmup_ramp = 0;
  auto trainer = make_trainer(cfg);
  const auto adapters = snapshot_groups(*trainer->vae(), {"adapters"});
  const auto forensic = snapshot_groups(*trainer->forensic(), {""});
  ASSERT_FALSE(adapters.empty());
  Rng rng(1);
  const auto report = trainer->train_step(corpus(4), rng);
  EXPECT_TRUE(std::isfinite(report.total));
  EXPECT_FALSE(assert_frozen(adapters, snapshot_groups(*trainer->vae(), {"adapters"})).unchanged);
  EXPECT_FALSE(assert_frozen(forensic, snapshot_groups(*trainer->forensic(), {""})).unchanged);
}

TEST(Trainer, StepCountFollowsEpochsAndBatch) {
  auto cfg = tiny_config();
  cfg.train.epochs = 2;
  auto trainer = make_trainer(cfg);
  TrainOptions opts;
  opts.write_log = false;
  // ceil(10 / 4) = 3 steps per epoch.
  const auto result = trainer->train(corpus(10), opts);
  EXPECT_EQ(result.reports.size(), 6u);
  EXPECT_EQ(result.state.step, 6);
  EXPECT_EQ(result.state.epoch, 2);
  EXPECT_EQ(result.state.moving_average.size(), 6u);
}

TEST(Trainer, IdenticalSeedsGiveIdenticalRuns) {
  auto cfg = tiny_config();
  TrainOptions opts;
  opts.write_log = false;
  const auto data = corpus(40);  // 10 steps
  auto a = make_trainer(cfg);
  auto b = make_trainer(cfg);
  const auto ra = a->train(data, opts);
  const auto rb = b->train(data, opts);
  ASSERT_EQ(ra.reports.size(), 10u);
  for (size_t i = 0; i < ra.reports.size(); ++i) EXPECT_EQ(ra.reports[i].total, rb.reports[i].total) << i;
  EXPECT_TRUE(same_parameters(*a->forensic(), *b->forensic()));
  EXPECT_TRUE(same_parameters(*a->vae(), *b->vae()));
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
  auto cfg = tiny_config();
  const auto data = corpus(40);
  const auto full_dir = fresh_dir("resume_full");
  const auto part_dir = fresh_dir("resume_part");

  auto full = make_trainer(cfg);
  TrainOptions opts;
  opts.out_dir = full_dir;
  full->train(data, opts);

  auto first = make_trainer(cfg);
  TrainOptions stop = opts;
  stop.out_dir = part_dir;
  stop.stop_after_step = 7;
  const auto partial = first->train(data, stop);
  ASSERT_EQ(partial.state.step, 7);
  ASSERT_TRUE(std::filesystem::exists(partial.state.last_checkpoint));

  // A fresh process: different init, then restore.
  torch::manual_seed(999);
  MpwVae vae(cfg.autoencoder, cfg.adapter);
  ForensicNet net(cfg.forensic);
  Trainer second(cfg, vae, net);
  TrainOptions cont = opts;
  cont.out_dir = part_dir;
  cont.resume_from = partial.state.last_checkpoint;
  const auto rest = second.train(data, cont);
  EXPECT_EQ(rest.reports.size(), 3u);
  EXPECT_TRUE(same_parameters(*second.forensic(), *full->forensic()));
  EXPECT_TRUE(same_parameters(*second.vae(), *full->vae()));
  EXPECT_EQ(log_without_clock(part_dir / "logs" / "train.jsonl"), log_without_clock(full_dir / "logs" / "train.jsonl"));
}

TEST(Trainer, EmptyCorpusIsAnError) {
  auto trainer = make_trainer(tiny_config());
  TrainOptions opts;
  opts.write_log = false;
  EXPECT_THROW(trainer->train(torch::empty({0, 3, 32, 32}), opts), Error);
}

TEST(Trainer, NonFiniteLossStopsWithDump) {
  auto trainer = make_trainer(tiny_config());
  const auto dir = fresh_dir("nan");
  trainer->set_dump_dir(dir);
  auto batch = corpus(4);
  batch[0][0][3][3] = std::numeric_limits<float>::quiet_NaN();
  Rng rng(1);
  try {
    trainer->train_step(batch, rng);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos) << e.what();
  }
  EXPECT_TRUE(std::filesystem::exists(dir / "nan_dump_step1.pt"));
}

}  // namespace
}  // namespace wmguard
