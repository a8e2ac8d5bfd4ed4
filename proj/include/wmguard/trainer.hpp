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

// Autoencoder pretraining and joint watermark/forensic training.
//
// Randomness: every step draws its bits, masks and splice branches from an
// Rng seeded by (seed, step), and every epoch's data order from an Rng seeded
// by (seed, epoch). Resuming therefore only needs the step counter, the
// weights and the optimizer state.

#ifndef WMGUARD_TRAINER_HPP_
#define WMGUARD_TRAINER_HPP_

#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "wmguard/config.hpp"
#include "wmguard/losses.hpp"
#include "wmguard/moe_gfn.hpp"
#include "wmguard/mpw_vae.hpp"

namespace wmguard {

// Deterministic sub-stream seeds.
uint64_t mix_seed(uint64_t seed, uint64_t stream, uint64_t index);

// Shuffled index order for one epoch.
std::vector<int64_t> epoch_order(int64_t n, uint64_t seed, int64_t epoch);

// Multipliers of the similarity and tamper terms at 1-based `step`.
TermWeights warmup_weights(const TrainConfig& cfg, int64_t step);

struct PretrainResult {
  double train_psnr = 0;  // reconstruction PSNR on (a subset of) the corpus
  int64_t epochs_run = 0;
  bool converged = false;  // train_psnr >= target
};

// Trains encoder+decoder with mean-L1 reconstruction. Throws on an empty
// corpus. Logs one line per epoch through `log` when given.
PretrainResult pretrain_autoencoder(MpwVae& vae, const ImageTensor& corpus, const PretrainConfig& cfg,
                                    uint64_t seed, const std::function<void(const std::string&)>& log = {});

// Named copies of parameter tensors, for bitwise comparison.
using ParamSnapshot = std::map<std::string, torch::Tensor>;

ParamSnapshot snapshot_groups(torch::nn::Module& module, const std::vector<std::string>& prefixes);

struct FrozenCheck {
  bool unchanged = true;
  std::string first_changed;  // parameter path, empty when unchanged
};

// Bitwise comparison of the tensors in `before` against `after`.
FrozenCheck assert_frozen(const ParamSnapshot& before, const ParamSnapshot& after);

struct RunState {
  int64_t step = 0;
  int64_t epoch = 0;
  std::deque<double> recent_total;  // last 100 totals
  std::vector<double> moving_average;  // 100-step moving average per step
  std::filesystem::path last_checkpoint;
};

struct TrainOptions {
  std::filesystem::path out_dir;
  std::filesystem::path resume_from;  // optional checkpoint
  int64_t stop_after_step = -1;       // interrupt simulation; -1 runs to the end
  bool write_log = true;
  std::function<void(const std::string&)> progress;
};

struct TrainResult {
  RunState state;
  std::filesystem::path final_checkpoint;
  std::vector<LossReport> reports;  // this invocation only
};

class Trainer {
 public:
  // Takes shared ownership of both models; freezes the autoencoder and
  // builds the optimizer over adapter + forensic parameters.
  Trainer(const RunConfig& cfg, MpwVae vae, ForensicNet forensic);

  // One step of the joint procedure on `batch` with randomness from `rng`.
  // Advances the internal step counter, which drives the warm-up weights.
  LossReport train_step(const ImageTensor& batch, Rng& rng);

  TrainResult train(const ImageTensor& corpus, const TrainOptions& opts);

  void save(const std::filesystem::path& path, const RunState& state);
  RunState resume(const std::filesystem::path& path);

  MpwVae& vae() { return vae_; }
  ForensicNet& forensic() { return forensic_; }
  torch::optim::Adam& optimizer() { return *optimizer_; }
  const RunConfig& config() const { return cfg_; }
  std::vector<torch::Tensor> trainable_parameters();
  int64_t step() const { return current_step_; }

  // Where a NaN dump goes; empty disables dumping.
  void set_dump_dir(const std::filesystem::path& dir) { dump_dir_ = dir; }

 private:
  RunConfig cfg_;
  MpwVae vae_;
  ForensicNet forensic_;
  std::unique_ptr<torch::optim::Adam> optimizer_;
  std::filesystem::path dump_dir_;
  int64_t current_step_ = 0;
};

}  // namespace wmguard

#endif  // WMGUARD_TRAINER_HPP_
