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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "wmguard/checkpoint.hpp"
#include "wmguard/metrics.hpp"
#include "wmguard/tamper_synth.hpp"
#include "wmguard/util.hpp"

namespace wmguard {
namespace fs = std::filesystem;

namespace {

constexpr uint64_t kStepStream = 1;
constexpr uint64_t kEpochStream = 2;
constexpr uint64_t kPretrainStream = 3;
constexpr size_t kMovingWindow = 100;

// splitmix64 finalizer
uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

torch::Tensor gather_batch(const ImageTensor& corpus, const std::vector<int64_t>& order, int64_t begin,
                           int64_t end) {
  std::vector<int64_t> idx(order.begin() + begin, order.begin() + end);
  return corpus.index_select(0, torch::tensor(idx, torch::kInt64));
}

std::string step_name(int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "step_%07lld.pt", static_cast<long long>(step));
  return buf;
}

void push_total(RunState& s, double total) {
  s.recent_total.push_back(total);
  if (s.recent_total.size() > kMovingWindow) s.recent_total.pop_front();
  const double sum = std::accumulate(s.recent_total.begin(), s.recent_total.end(), 0.0);
  s.moving_average.push_back(sum / static_cast<double>(s.recent_total.size()));
}

}  // namespace

uint64_t mix_seed(uint64_t seed, uint64_t stream, uint64_t index) {
  return mix64(mix64(mix64(seed) ^ stream) ^ index);
}

std::vector<int64_t> epoch_order(int64_t n, uint64_t seed, int64_t epoch) {
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(seed, kEpochStream, static_cast<uint64_t>(epoch)));
  // Explicit Fisher-Yates; std::shuffle's draw pattern is implementation-defined.
  for (int64_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<int64_t>(rng() % static_cast<uint64_t>(i + 1));
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
  }
  return order;
}

PretrainResult pretrain_autoencoder(MpwVae& vae, const ImageTensor& corpus, const PretrainConfig& cfg, uint64_t seed,
                                    const std::function<void(const std::string&)>& log) {
  if (!corpus.defined() || corpus.size(0) == 0) throw Error("pretrain_autoencoder: empty corpus");
  check_image(corpus, "pretrain_autoencoder");
  auto params = vae->autoencoder_parameters();
  for (auto& p : params) p.set_requires_grad(true);
  torch::optim::Adam opt(params, torch::optim::AdamOptions(cfg.lr));
  const int64_t n = corpus.size(0), b = cfg.batch_size;
  PretrainResult result;
  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(n, mix_seed(seed, kPretrainStream, 0), epoch);
    double loss_sum = 0;
    int64_t batches = 0;
    for (int64_t i = 0; i < n; i += b) {
      const auto x = gather_batch(corpus, order, i, std::min(n, i + b));
      const auto rec = vae->decoder()->forward(vae->encode(x).data);
      auto loss = (rec - x).abs().mean();
      opt.zero_grad();
      loss.backward();
      opt.step();
      loss_sum += loss.item<double>();
      ++batches;
    }
    result.epochs_run = epoch + 1;
    if (log) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "pretrain epoch %lld l1 %.5f", static_cast<long long>(epoch + 1),
                    loss_sum / static_cast<double>(batches));
      log(buf);
    }
  }
  torch::NoGradGuard no_grad;
  const int64_t probe = std::min<int64_t>(n, 500);
  double psnr_sum = 0;
  for (int64_t i = 0; i < probe; i += 50) {
    const auto x = corpus.slice(0, i, std::min(probe, i + 50));
    const auto rec = vae->decode_plain(vae->encode(x)).image;
    psnr_sum += mean_psnr(rec, x) * static_cast<double>(x.size(0));
  }
  result.train_psnr = psnr_sum / static_cast<double>(probe);
  result.converged = result.train_psnr >= cfg.target_psnr;
  return result;
}

ParamSnapshot snapshot_groups(torch::nn::Module& module, const std::vector<std::string>& prefixes) {
  ParamSnapshot snap;
  for (const auto& item : module.named_parameters(true)) {
    for (const auto& p : prefixes) {
      if (item.key().rfind(p, 0) == 0) {
        snap.emplace(item.key(), item.value().detach().clone());
        break;
      }
    }
  }
  return snap;
}

FrozenCheck assert_frozen(const ParamSnapshot& before, const ParamSnapshot& after) {
  for (const auto& [name, t] : before) {
    const auto it = after.find(name);
    if (it == after.end() || !torch::equal(t, it->second)) return {false, name};
  }
  return {true, ""};
}

Trainer::Trainer(const RunConfig& cfg, MpwVae vae, ForensicNet forensic)
    : cfg_(cfg), vae_(std::move(vae)), forensic_(std::move(forensic)) {
  cfg_.validate();
  vae_->freeze_autoencoder();
  optimizer_ = std::make_unique<torch::optim::Adam>(
      trainable_parameters(), torch::optim::AdamOptions(cfg_.train.lr)
                                  .betas({cfg_.train.beta1, cfg_.train.beta2})
                                  .eps(cfg_.train.eps));
}

std::vector<torch::Tensor> Trainer::trainable_parameters() {
  auto params = vae_->adapter_parameters();
  for (auto& p : forensic_->parameters()) params.push_back(p);
  return params;
}

TermWeights warmup_weights(const TrainConfig& cfg, int64_t step) {
  if (step <= cfg.warmup_hold) {
    return cfg.warmup_hold > 0 ? TermWeights{0.0, 0.0} : TermWeights{};
  }
  if (cfg.warmup_ramp == 0) return {};
  const double t = std::min(1.0, static_cast<double>(step - cfg.warmup_hold) / static_cast<double>(cfg.warmup_ramp));
  const double w = t >= 1.0 ? 1.0 : std::exp(std::log(cfg.warmup_floor) * (1.0 - t));
  return {w, w};
}

LossReport Trainer::train_step(const ImageTensor& batch, Rng& rng) {
  check_image(batch, "train_step");
  ++current_step_;
  const int64_t b = batch.size(0);
  forensic_->train();
  vae_->train();

  LatentCode z;
  DecodedImage x_hat;
  {
    torch::NoGradGuard no_grad;
    z = vae_->encode(batch);
    x_hat = vae_->decode_plain(z);
  }
  const auto bits = WatermarkBits::random(b, cfg_.bit_length, rng);
  const auto y = vae_->decode_watermarked(z, bits);
  const auto sample = make_training_sample(batch, x_hat.image, y.image, bits, cfg_.splice, rng);
  const auto out = forensic_->forward(sample.spliced);

  LossParts parts;
  parts.sim = sim_loss(x_hat.raw, y.raw, cfg_.loss);
  parts.wm = wm_loss(bits.tensor(), out.wm_logits);
  parts.wbce = wbce_loss(sample.mask.tensor(), out.mask_logits, cfg_.loss);
  parts.dice = dice_loss(sample.mask.tensor(), out.mask_logits);
  auto loss = total_loss(parts, cfg_.loss, warmup_weights(cfg_.train, current_step_));

  if (!std::isfinite(loss.report.objective)) {
    std::ostringstream os;
    os << "non-finite loss at step " << current_step_ << ": " << nlohmann::json(loss.report).dump();
    if (!dump_dir_.empty()) {
      fs::create_directories(dump_dir_);
      const auto path = dump_dir_ / ("nan_dump_step" + std::to_string(current_step_) + ".pt");
      torch::save(std::vector<torch::Tensor>{batch, bits.tensor(), sample.mask.tensor(), sample.spliced.detach(),
                                             out.wm_logits.detach(), out.mask_logits.detach()},
                  path.string());
      os << "; batch, bits, mask, spliced input and logits dumped to " << path.string();
    }
    throw ConvergenceError(os.str());
  }

  optimizer_->zero_grad();
  loss.total.backward();
  if (cfg_.train.clip_norm > 0) torch::nn::utils::clip_grad_norm_(trainable_parameters(), cfg_.train.clip_norm);
  optimizer_->step();
  return loss.report;
}

void Trainer::save(const fs::path& path, const RunState& state) {
  CheckpointMeta meta;
  meta.kind = "stableguard";
  meta.config_json = cfg_.to_json().dump();
  meta.config_hash = cfg_.hash();
  meta.frozen = {kEncoderGroup, kDecoderGroup};
  meta.step = state.step;
  meta.epoch = state.epoch;
  save_checkpoint(path, meta, vae_, &forensic_, optimizer_.get());
}

RunState Trainer::resume(const fs::path& path) {
  const auto meta = load_checkpoint(path, vae_, &forensic_, optimizer_.get(), cfg_.hash());
  RunState state;
  state.step = meta.step;
  state.epoch = meta.epoch;
  state.last_checkpoint = path;
  current_step_ = meta.step;
  return state;
}

TrainResult Trainer::train(const ImageTensor& corpus, const TrainOptions& opts) {
  if (!corpus.defined() || corpus.size(0) == 0) throw Error("train: empty corpus");
  check_image(corpus, "train");
  const int64_t n = corpus.size(0), bsz = cfg_.train.batch_size;
  const int64_t steps_per_epoch = (n + bsz - 1) / bsz;
  const int64_t total_steps = steps_per_epoch * cfg_.train.epochs;

  TrainResult result;
  RunState& state = result.state;
  const fs::path log_path = opts.out_dir / "logs" / "train.jsonl";
  std::vector<std::string> kept_log;
  if (!opts.resume_from.empty()) {
    state = resume(opts.resume_from);
    // Keep the log consistent with the restored step and rebuild the moving average.
    if (opts.write_log && fs::exists(log_path)) {
      std::ifstream in(log_path);
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        if (j.at("step").get<int64_t>() > state.step) break;
        kept_log.push_back(line);
        push_total(state, j.at("total").get<double>());
      }
    }
  }
  if (!opts.out_dir.empty()) fs::create_directories(opts.out_dir / "logs");
  if (dump_dir_.empty() && !opts.out_dir.empty()) dump_dir_ = opts.out_dir;

  std::ofstream log;
  if (opts.write_log && !opts.out_dir.empty()) {
    log.open(log_path, std::ios::trunc);
    for (const auto& l : kept_log) log << l << '\n';
  }

  const auto t0 = std::chrono::steady_clock::now();
  int64_t cached_epoch = -1;
  std::vector<int64_t> order;
  for (int64_t step = state.step + 1; step <= total_steps; ++step) {
    const int64_t epoch = (step - 1) / steps_per_epoch;
    const int64_t within = (step - 1) % steps_per_epoch;
    if (epoch != cached_epoch) {
      order = epoch_order(n, cfg_.seed, epoch);
      cached_epoch = epoch;
    }
    const auto x = gather_batch(corpus, order, within * bsz, std::min(n, (within + 1) * bsz));
    Rng rng(mix_seed(cfg_.seed, kStepStream, static_cast<uint64_t>(step)));
    current_step_ = step - 1;
    const auto report = train_step(x, rng);
    state.step = step;
    state.epoch = (within + 1 == steps_per_epoch) ? epoch + 1 : epoch;
    push_total(state, report.total);
    result.reports.push_back(report);

    if (log.is_open()) {
      nlohmann::json j = report;
      j["step"] = step;
      j["epoch"] = epoch;
      j["wallclock"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      log << j.dump() << '\n';
      log.flush();
    }
    if (opts.progress && (step % 50 == 0 || step == total_steps)) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "step %lld/%lld epoch %lld total %.4f (ma %.4f) sim %.5f wm %.4f tamper %.4f",
                    static_cast<long long>(step), static_cast<long long>(total_steps),
                    static_cast<long long>(epoch), report.total, state.moving_average.back(), report.sim,
                    report.wm, report.tamper);
      opts.progress(buf);
    }
    const bool stop_here = opts.stop_after_step == step;
    if (!opts.out_dir.empty() && (step % cfg_.train.checkpoint_every == 0 || stop_here)) {
      const auto path = opts.out_dir / "checkpoints" / step_name(step);
      save(path, state);
      state.last_checkpoint = path;
    }
    if (stop_here) return result;
  }
  if (!opts.out_dir.empty()) {
    result.final_checkpoint = opts.out_dir / "checkpoints" / "final.pt";
    save(result.final_checkpoint, state);
    state.last_checkpoint = result.final_checkpoint;
  }
  return result;
}

}  // namespace wmguard
