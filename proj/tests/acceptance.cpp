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

// Acceptance run: the property suite followed by the desk-scale end-to-end
// run (full model plus the no-MoFE ablation). Prints one PASS/FAIL line per
// criterion and exits non-zero if any fails.
//
// usage: acceptance [--properties-only] [--work-dir DIR]
//
// Trained runs are cached under DIR/<config hash>/ and resumed from the last
// step checkpoint when interrupted.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "test_util.hpp"
#include "wmguard/attacks.hpp"
#include "wmguard/checkpoint.hpp"
#include "wmguard/evaluation.hpp"
#include "wmguard/image_io.hpp"
#include "wmguard/metrics.hpp"
#include "wmguard/pipeline.hpp"
#include "wmguard/util.hpp"

namespace fs = std::filesystem;
using namespace wmguard;
using testing::grad_check;
using testing::leaf;
using testing::weighted_sum;

namespace {

int g_failures = 0;

void verdict(const char* name, bool pass, const std::string& detail) {
  std::printf("%s  %-34s %s\n", pass ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c, d);
  return buf;
}

void log_line(const std::string& s) {
  static const auto t0 = std::chrono::steady_clock::now();
  const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::fprintf(stderr, "[%7.1fs] %s\n", t, s.c_str());
}

// ---------------------------------------------------------------- properties

void check_identity() {
  torch::manual_seed(0);
  MpwVae vae(AutoencoderConfig{}, AdapterConfig{});
  torch::NoGradGuard no_grad;
  const auto z = vae->encode(torch::rand({4, 3, 64, 64}));
  Rng rng(1);
  const auto bits = WatermarkBits::random(4, 32, rng);
  const auto plain = vae->decode_plain(z).raw;
  const bool at_init = torch::equal(vae->decode_watermarked(z, bits).raw, plain);
  for (size_t i = 0; i < vae->adapters()->size(); ++i) vae->adapters()->at(i)->final_conv()->weight.normal_(0, 0.05);
  const bool moved = !torch::equal(vae->decode_watermarked(z, bits).raw, plain);
  vae->adapters()->set_enabled(false);
  const bool disabled = torch::equal(vae->decode_watermarked(z, bits).raw, plain);
  verdict("toggle/zero-init identity", at_init && moved && disabled,
          std::string("init ") + (at_init ? "bit-exact" : "differs") + ", trained adapters " +
              (moved ? "change output" : "inert") + ", disabled " + (disabled ? "bit-exact" : "differs"));
}

void check_router() {
  torch::manual_seed(1);
  SoftRouter router(32, 3);
  double worst = 0, min_w = 1;
  torch::NoGradGuard no_grad;
  for (int i = 0; i < 100; ++i) {
    const auto w = router(torch::randn({1, 32, 8, 8}) * (1 + i % 5)).weights;
    worst = std::max(worst, (w.sum(1) - 1).abs().max().item<double>());
    min_w = std::min(min_w, w.min().item<double>());
  }
  verdict("router simplex", worst <= 1e-6 && min_w >= 0,
          fmt("max |sum-1| %.2e over 100 inputs, min weight %.3g", worst, min_w));
}

void check_patch_locality() {
  bool ok = true;
  std::string detail;
  for (int64_t n : {2, 4, 8}) {
    torch::manual_seed(n);
    ForensicConfig cfg;
    cfg.patch_size = n;
    TamperExpertImpl expert(16, 16, 16, cfg);
    torch::NoGradGuard no_grad;
    expert.branch()->ffn_out()->weight.normal_(0, 0.2);
    const auto x = torch::randn({1, 16, 16, 16});
    auto x2 = x.clone();
    x2[0][5][7][9] += 1.0;
    const auto a = expert.forward(x), b = expert.forward(x2);
    int64_t other_changed = 0;
    bool own_changed = false;
    for (int64_t i = 0; i < 16 / n; ++i) {
      for (int64_t j = 0; j < 16 / n; ++j) {
        const bool same = torch::equal(a[0].slice(1, i * n, (i + 1) * n).slice(2, j * n, (j + 1) * n),
                                       b[0].slice(1, i * n, (i + 1) * n).slice(2, j * n, (j + 1) * n));
        if (i == 7 / n && j == 9 / n) {
          own_changed = !same;
        } else if (!same) {
          ++other_changed;
        }
      }
    }
    ok = ok && other_changed == 0 && own_changed;
    detail += "n=" + std::to_string(n) + ": " + std::to_string(other_changed) + " other patches changed; ";
  }
  verdict("patch locality", ok, detail);
}

void check_transforms() {
  torch::manual_seed(2);
  const auto x = torch::randn({2, 8, 16, 16});
  const auto spec = spectrum_split(x);
  const double rt = (spectrum_merge(spec) - x).abs().max().item<double>();
  const double parseval = std::abs(spec.pow(2).sum().item<double>() / x.pow(2).sum().item<double>() - 1);
  // Spectrum against the naive DFT on one plane.
  const auto xd = leaf({1, 1, 6, 6}, 3).detach();
  const auto sd = spectrum_split(xd);
  const auto flat = xd.contiguous().view(-1);
  const auto want = testing::dft2_oracle({flat.data_ptr<double>(), flat.data_ptr<double>() + 36}, 6, 6);
  double dft_err = 0;
  for (int64_t k = 0; k < 36; ++k) {
    dft_err = std::max(dft_err, std::abs(sd[0][0].view(-1)[k].item<double>() - want[static_cast<size_t>(k)].real()));
    dft_err = std::max(dft_err, std::abs(sd[0][1].view(-1)[k].item<double>() - want[static_cast<size_t>(k)].imag()));
  }
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-128, 127);
  double dct_err = 0, dct_rt = 0;
  for (int t = 0; t < 20; ++t) {
    jpeg_codec::Block f{};
    for (auto& v : f) v = u(rng);
    const auto c = jpeg_codec::dct8x8(f);
    const auto o = testing::dct_oracle(f);
    const auto back = jpeg_codec::idct8x8(c);
    for (size_t i = 0; i < 64; ++i) {
      dct_err = std::max(dct_err, std::abs(c[i] - o[i]));
      dct_rt = std::max(dct_rt, std::abs(back[i] - f[i]));
    }
  }
  verdict("FFT / DCT round trips",
          rt <= 1e-5 && parseval <= 1e-5 && dft_err <= 1e-10 && dct_err <= 1e-6 && dct_rt <= 1e-6,
          fmt("fft rt %.1e, parseval rel %.1e, dft vs naive %.1e; ", rt, parseval, dft_err) +
              fmt("dct vs brute %.1e, dct rt %.1e", dct_err, dct_rt));
}

void check_gradients() {
  double worst = 0;
  std::string worst_name;
  auto record = [&](const std::string& name, const testing::GradCheckResult& r) {
    if (r.max_rel_err >= worst) {
      worst = r.max_rel_err;
      worst_name = name;
    }
  };
  LossConfig lc;
  const auto mask = (leaf({1, 1, 4, 4}, 1, 0, 1).detach() > 0.5).to(torch::kFloat64);
  const auto bits = (leaf({1, 16}, 2, 0, 1).detach() > 0.5).to(torch::kFloat64);
  const auto z = leaf({1, 1, 4, 4}, 3, -2, 2);
  const auto wz = leaf({1, 16}, 4, -2, 2);
  const auto xh = leaf({1, 3, 8, 8}, 5, 0, 1);
  const auto y = leaf({1, 3, 8, 8}, 6, 0, 1).detach();
  record("wm", grad_check([&] { return wm_loss(bits, wz); }, {wz}, 16));
  record("wbce", grad_check([&] { return wbce_loss(mask, z, lc); }, {z}, 16));
  record("dice", grad_check([&] { return dice_loss(mask, z); }, {z}, 16));
  record("tamper", grad_check([&] { return tamper_loss(mask, z, lc); }, {z}, 16));
  record("sim", grad_check([&] { return sim_loss(xh, y, lc); }, {xh}, 16));
  record("total", grad_check([&] {
           return total_loss({sim_loss(xh, y, lc), wm_loss(bits, wz), wbce_loss(mask, z, lc), dice_loss(mask, z)}, lc)
               .total;
         }, {xh, wz, z}, 8));

  ForensicConfig fc;
  fc.heads = 2;
  fc.patch_size = 2;
  fc.bit_length = 4;
  fc.image_size = 16;
  fc.widths = {4, 4, 4};
  auto module_check = [&](const std::string& name, torch::nn::Module& m, std::vector<int64_t> shape,
                          const std::function<torch::Tensor(const torch::Tensor&)>& f) {
    m.to(torch::kFloat64);
    const auto x = leaf(shape, 17);
    std::vector<torch::Tensor> inputs{x};
    for (auto& p : m.parameters()) inputs.push_back(p);
    record(name, grad_check([&] { return weighted_sum(f(x)); }, inputs, 4));
  };
  auto randomize = [](ExpertImpl& e) {
    torch::NoGradGuard no_grad;
    e.branch()->ffn_out()->weight.normal_(0, 0.3);
    e.branch()->ffn_out()->bias.normal_(0, 0.3);
  };
  torch::manual_seed(6);
  WatermarkExpertImpl we(4, 4, 4, fc);
  randomize(we);
  module_check("expert_wm", we, {1, 4, 4, 4}, [&](const torch::Tensor& x) { return we.forward(x); });
  TamperExpertImpl te(4, 4, 4, fc);
  randomize(te);
  module_check("expert_tamp", te, {1, 4, 4, 4}, [&](const torch::Tensor& x) { return te.forward(x); });
  BoundaryExpertImpl be(2, 4, 4, fc);
  randomize(be);
  module_check("expert_bound", be, {1, 2, 4, 4}, [&](const torch::Tensor& x) { return be.forward(x); });
  MoFE mofe(4, 4, 4, fc);
  for (size_t i = 0; i < mofe->num_experts(); ++i) randomize(mofe->expert(i));
  module_check("router+fusion", *mofe, {1, 4, 4, 4}, [&](const torch::Tensor& x) { return mofe->forward(x); });
  ForensicHeads heads(4, 4, fc);
  module_check("mask head", *heads, {1, 4, 4, 4},
               [&](const torch::Tensor& x) { return heads->forward(x).mask_logits; });
  module_check("wm head", *heads, {1, 4, 4, 4}, [&](const torch::Tensor& x) { return heads->forward(x).wm_logits; });
  AdapterConfig ac;
  ac.bit_length = 4;
  ac.hidden = 6;
  ac.grid = 2;
  WatermarkAdapter adapter(ac, 4);
  adapter->final_conv()->weight.data().normal_(0, 0.3);
  const auto sbits = torch::tensor({{1.0, -1.0, -1.0, 1.0}}, torch::kFloat64);
  module_check("adapter", *adapter, {1, 4, 4, 4},
               [&](const torch::Tensor& x) { return adapter->forward(x, sbits); });
  verdict("gradient checks", worst <= 1e-5, fmt("max rel err %.2e", worst) + " (worst: " + worst_name + ")");
}

void check_splicing() {
  const auto y = torch::rand({2, 3, 16, 16}), c = torch::rand({2, 3, 16, 16});
  const auto cb = testing::checkerboard(2, 16, 16);
  const bool m0 = torch::equal(splice(y, c, TamperMask(torch::zeros({2, 1, 16, 16}))), y);
  const bool m1 = torch::equal(splice(y, c, TamperMask(torch::ones({2, 1, 16, 16}))), c);
  const auto out = splice(y, c, TamperMask(cb));
  // Pixel-by-pixel oracle.
  bool mc = true;
  auto ya = y.accessor<float, 4>(), ca = c.accessor<float, 4>(), oa = out.accessor<float, 4>();
  for (int64_t b = 0; b < 2; ++b)
    for (int64_t ch = 0; ch < 3; ++ch)
      for (int64_t i = 0; i < 16; ++i)
        for (int64_t j = 0; j < 16; ++j) mc = mc && oa[b][ch][i][j] == (((i + j) % 2) ? ca[b][ch][i][j] : ya[b][ch][i][j]);

  SpliceConfig cfg;
  Rng rng(2024), bit_rng(1);
  const auto x0 = torch::zeros({100, 3, 16, 16}), xh = torch::ones({100, 3, 16, 16});
  const auto bits = WatermarkBits::random(100, 8, bit_rng);
  int64_t original = 0;
  for (int r = 0; r < 100; ++r) {
    const auto s = make_training_sample(x0, xh, torch::full({100, 3, 16, 16}, 0.5), bits, cfg, rng);
    for (auto k : s.source_kind) original += k == SourceKind::kOriginal;
  }
  const double freq = static_cast<double>(original) / 1e4;
  verdict("splicing exactness", m0 && m1 && mc && std::abs(freq - 0.5) <= 0.02,
          std::string("M=0 ") + (m0 ? "exact" : "differs") + ", M=1 " + (m1 ? "exact" : "differs") + ", checker " +
              (mc ? "exact" : "differs") + fmt(", original-branch freq %.4f over 1e4 draws", freq));
}

void check_metric_oracles() {
  std::mt19937_64 rng(3);
  double auc_err = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const size_t n = 1000 + 900 * static_cast<size_t>(trial);  // up to 9100 pixels
    std::vector<int> m(n);
    std::vector<double> s(n);
    for (size_t i = 0; i < n; ++i) {
      m[i] = static_cast<int>(rng() % 4 == 0);
      s[i] = static_cast<double>(rng() % 20) + 3.0 * m[i] * static_cast<double>(rng() % 2);
    }
    const auto got = auc(torch::tensor(std::vector<float>(m.begin(), m.end())), torch::tensor(s, torch::kFloat64));
    const auto want = testing::auc_oracle(m, s);
    auc_err = std::max(auc_err, (got && want) ? std::abs(*got - *want) : 1.0);
  }
  LossConfig lc;
  auto mask = torch::zeros({1, 1, 4, 4});
  mask.view(-1).slice(0, 0, 5).fill_(1);
  const double q = 5.0 / 16.0;
  const double wbce_err =
      std::abs(wbce_loss(mask, torch::zeros({1, 1, 4, 4}), lc).item<double>() -
               (lc.lambda1 * q + lc.lambda2 * (1 - q)) * std::log(2.0));
  const auto p = torch::tensor({0.9, 0.2, 0.4, 0.7}, torch::kFloat64).view({1, 1, 2, 2});
  const auto mm = torch::tensor({1.0, 0.0, 1.0, 1.0}, torch::kFloat64).view({1, 1, 2, 2});
  const double dice_err = std::abs(dice_from_probs(mm, p).item<double>() - (1 - 2 * 2.0 / (3 + 1.5 + kDiceEps)));
  double iou_err = 0;
  for (int t = 0; t < 50; ++t) {
    const Confusion c{static_cast<int64_t>(rng() % 50), static_cast<int64_t>(rng() % 50),
                      static_cast<int64_t>(rng() % 50), 10};
    const auto r = f1_iou_from_counts(c);
    iou_err = std::max(iou_err, std::abs(r.iou - r.f1 / (2 - r.f1)));
  }
  const double ln2_err = std::abs(wm_loss(torch::ones({2, 32}), torch::zeros({2, 32})).item<double>() - std::log(2.0));
  verdict("metric oracles", auc_err <= 1e-12 && wbce_err <= 1e-6 && dice_err <= 1e-12 && iou_err <= 1e-12 &&
                                ln2_err <= 1e-6,
          fmt("auc %.1e, wbce %.1e, dice %.1e, ", auc_err, wbce_err, dice_err) +
              fmt("iou identity %.1e, wm(0)-ln2 %.1e", iou_err, ln2_err));
}

void check_freeze() {
  RunConfig cfg;
  cfg.train.warmup_hold = 0;  // every loss term active from step 1
  cfg.train.warmup_ramp = 0;
  cfg.finalize();
  torch::manual_seed(cfg.seed);
  MpwVae vae(cfg.autoencoder, cfg.adapter);
  Trainer trainer(cfg, vae, ForensicNet(cfg.forensic));
  const auto before = snapshot_groups(*vae, {kEncoderGroup, kDecoderGroup});
  const auto adapters_before = snapshot_groups(*vae, {"adapters"});
  const auto data = synth_corpus(16, 64, 5);
  for (int step = 0; step < 100; ++step) {
    Rng rng(static_cast<uint64_t>(step));
    trainer.train_step(data.narrow(0, (step % 2) * 8, 8), rng);
  }
  const auto check = assert_frozen(before, snapshot_groups(*vae, {kEncoderGroup, kDecoderGroup}));
  const bool adapters_moved = !assert_frozen(adapters_before, snapshot_groups(*vae, {"adapters"})).unchanged;
  verdict("freeze invariance", check.unchanged && adapters_moved,
          check.unchanged ? std::to_string(before.size()) + " autoencoder tensors bitwise unchanged after 100 steps" +
                                (adapters_moved ? "; adapters trained" : "; adapters did not move")
                          : "changed: " + check.first_changed);
}

// ------------------------------------------------------------------ desk run

fs::path latest_step_checkpoint(const fs::path& dir) {
  fs::path best;
  if (!fs::exists(dir)) return best;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("step_", 0) == 0 && (best.empty() || name > best.filename().string())) best = e.path();
  }
  return best;
}

struct TrainedRun {
  MpwVae vae{nullptr};
  ForensicNet net{nullptr};
  RunDirectory dir;
};

TrainedRun obtain_run(const RunConfig& cfg, const Corpus& corpus, const fs::path& root, const std::string& name) {
  const RunDirectory run{root / name};
  if (fs::exists(run.final_checkpoint())) {
    auto loaded = open_checkpoint(run.final_checkpoint());
    if (loaded.meta.config_hash == cfg.hash()) {
      log_line(name + ": using cached " + run.final_checkpoint().string());
      return {loaded.vae, loaded.forensic, run};
    }
    log_line(name + ": cached checkpoint is for another config; retraining");
    fs::remove_all(run.root);
  }
  auto vae = obtain_autoencoder(cfg, corpus, root / "autoencoder.pt", log_line);
  auto net = make_forensic(cfg);
  auto resume = latest_step_checkpoint(run.checkpoints());
  if (!resume.empty()) {
    if (open_checkpoint(resume).meta.config_hash != cfg.hash()) {
      resume.clear();
    } else {
      log_line(name + ": resuming from " + resume.string());
    }
  }
  log_line(name + ": training (" + std::to_string(corpus.train.size(0)) + " images)");
  run_training(cfg, run, vae, net, corpus.train, resume, [&](const std::string& s) { log_line(name + ": " + s); });
  return {vae, net, run};
}

double find_bit_acc(const MetricTable& t, const std::string& attack, double param) {
  for (const auto& r : t.rows) {
    if (r.keys.at("attack") == attack && r.keys.at("param") == format_double(param)) return r.values.at("bit_acc");
  }
  return -1;
}

void desk_run(const fs::path& work) {
  RunConfig cfg;
  cfg.finalize();
  RunConfig ablation = cfg;
  ablation.forensic.placement = Placement::kNone;
  ablation.finalize();
  const auto root = work / cfg.hash();
  fs::create_directories(root);
  log_line("desk run under " + root.string());
  const auto corpus = load_corpus(cfg);

  auto full = obtain_run(cfg, corpus, root, "full");
  full.vae->eval();
  full.net->eval();
  const auto m = write_evaluation(cfg, full.dir, full.vae, full.net, corpus.holdout);
  const auto robust = write_robustness(cfg, full.dir, full.vae, full.net, corpus.holdout, default_suite());
  log_line("full model evaluated");

  auto plain = obtain_run(ablation, corpus, root, "no_mofe");
  plain.vae->eval();
  plain.net->eval();
  const auto ma = write_evaluation(ablation, plain.dir, plain.vae, plain.net, corpus.holdout);

  const int64_t n = corpus.holdout.size(0);
  verdict("fidelity", m.psnr >= 30 && m.ssim >= 0.90,
          fmt("PSNR %.2f dB (>= 30), SSIM %.4f (>= 0.90) on %.0f held-out latents", m.psnr, m.ssim,
              static_cast<double>(n)));
  verdict("clean forensics", m.clean.bit_acc >= 95 && m.clean.f1 >= 0.80 && m.clean.iou >= 0.70,
          fmt("bit acc %.2f%% (>= 95), F1 %.4f (>= 0.80), IoU %.4f (>= 0.70)", m.clean.bit_acc, m.clean.f1,
              m.clean.iou) +
              (m.clean.auc ? fmt(", AUC %.4f", *m.clean.auc) : std::string()));
  const double g1 = find_bit_acc(robust, "gaussian", 1), g3 = find_bit_acc(robust, "gaussian", 3),
               g5 = find_bit_acc(robust, "gaussian", 5);
  const double j90 = find_bit_acc(robust, "jpeg", 90), j80 = find_bit_acc(robust, "jpeg", 80),
               j70 = find_bit_acc(robust, "jpeg", 70);
  verdict("robustness ordering", g1 >= g3 && g3 >= g5 && j90 >= j80 && j80 >= j70 && g3 >= 85,
          fmt("gaussian s1/s3/s5 %.2f/%.2f/%.2f", g1, g3, g5) + fmt(", jpeg q90/q80/q70 %.2f/%.2f/%.2f", j90, j80, j70) +
              " (s3 >= 85)");
  verdict("false-positive sanity", m.untampered_coverage <= 0.01,
          fmt("mean predicted coverage %.4f on %.0f untampered watermarked images (<= 0.01)", m.untampered_coverage,
              static_cast<double>(std::min<int64_t>(100, n))));
  verdict("ablation smoke", ma.clean.f1 < m.clean.f1,
          fmt("F1 full %.4f vs no-MoFE %.4f (bit acc %.2f vs %.2f)", m.clean.f1, ma.clean.f1, m.clean.bit_acc,
              ma.clean.bit_acc));
}

}  // namespace

int main(int argc, char** argv) {
  bool properties_only = false;
  fs::path work = WMGUARD_ACCEPTANCE_DIR;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--properties-only") {
      properties_only = true;
    } else if (a == "--work-dir" && i + 1 < argc) {
      work = argv[++i];
    } else {
      std::fprintf(stderr, "usage: %s [--properties-only] [--work-dir DIR]\n", argv[0]);
      return 1;
    }
  }
  try {
    log_line("property suite");
    check_identity();
    check_router();
    check_patch_locality();
    check_transforms();
    check_gradients();
    check_splicing();
    check_metric_oracles();
    check_freeze();
    log_line("property suite done");
    if (!properties_only) desk_run(work);
  } catch (const std::exception& e) {
    std::printf("FAIL  %-34s %s\n", "acceptance run aborted", e.what());
    return 2;
  }
  std::printf("%d criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
