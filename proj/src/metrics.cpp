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

#include "wmguard/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "wmguard/util.hpp"

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

torch::Tensor gaussian_window(int size, double sigma) {
  auto g = torch::empty({size}, torch::kFloat64);
  const double c = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - c;
    g[i] = std::exp(-d * d / (2 * sigma * sigma));
  }
  g = g / g.sum();
  return torch::outer(g, g);
}

}  // namespace

double psnr(const torch::Tensor& a, const torch::Tensor& b) {
  same_shape(a, b, "psnr");
  const double mse = (a.to(torch::kFloat64) - b.to(torch::kFloat64)).pow(2).mean().item<double>();
  if (mse <= 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse));
}

double mean_psnr(const ImageTensor& a, const ImageTensor& b) {
  same_shape(a, b, "psnr");
  double sum = 0;
  for (int64_t i = 0; i < a.size(0); ++i) sum += psnr(a[i], b[i]);
  return sum / static_cast<double>(a.size(0));
}

double ssim(const ImageTensor& a, const ImageTensor& b) {
  same_shape(a, b, "ssim");
  if (a.dim() != 4) throw ShapeError("ssim expects B x C x H x W");
  constexpr int kWin = 11;
  if (a.size(2) < kWin || a.size(3) < kWin) throw ShapeError("ssim needs images of at least 11x11");
  constexpr double kC1 = 0.01 * 0.01, kC2 = 0.03 * 0.03;
  const int64_t channels = a.size(1);
  auto w = gaussian_window(kWin, 1.5).view({1, 1, kWin, kWin}).repeat({channels, 1, 1, 1});
  const auto x = a.to(torch::kFloat64), y = b.to(torch::kFloat64);
  auto filt = [&](const torch::Tensor& t) {
    return F::conv2d(t, w, F::Conv2dFuncOptions().groups(channels));
  };
  const auto mu_x = filt(x), mu_y = filt(y);
  const auto sxx = filt(x * x) - mu_x * mu_x;
  const auto syy = filt(y * y) - mu_y * mu_y;
  const auto sxy = filt(x * y) - mu_x * mu_y;
  const auto num = (2 * mu_x * mu_y + kC1) * (2 * sxy + kC2);
  const auto den = (mu_x * mu_x + mu_y * mu_y + kC1) * (sxx + syy + kC2);
  return (num / den).mean().item<double>();
}

std::vector<double> bit_accuracy_per_sample(const torch::Tensor& bits, const torch::Tensor& w_logits) {
  same_shape(bits, w_logits, "bit_accuracy");
  // logit >= 0 <=> sigmoid >= 0.5; ties predict 1.
  const auto pred = (w_logits >= 0).to(torch::kFloat64);
  const auto hit = (pred == (bits.to(torch::kFloat64) > 0.5).to(torch::kFloat64)).to(torch::kFloat64);
  const auto per = (hit.mean(1) * 100.0).contiguous();
  return {per.data_ptr<double>(), per.data_ptr<double>() + per.numel()};
}

double bit_accuracy(const torch::Tensor& bits, const torch::Tensor& w_logits) {
  same_shape(bits, w_logits, "bit_accuracy");
  const auto pred = w_logits >= 0;
  const auto truth = bits > 0.5;
  return (pred == truth).to(torch::kFloat64).mean().item<double>() * 100.0;
}

F1Iou f1_iou_from_counts(const Confusion& c) {
  const auto tp = static_cast<double>(c.tp);
  const auto fp = static_cast<double>(c.fp);
  const auto fn = static_cast<double>(c.fn);
  if (c.tp + c.fp + c.fn == 0) return {1.0, 1.0};
  return {2 * tp / (2 * tp + fp + fn), tp / (tp + fp + fn)};
}

F1Iou f1_iou(const torch::Tensor& mask, const torch::Tensor& m_logits) {
  same_shape(mask, m_logits, "f1_iou");
  const auto pred = m_logits >= 0;
  const auto truth = mask > 0.5;
  Confusion c;
  c.tp = torch::logical_and(pred, truth).sum().item<int64_t>();
  c.fp = torch::logical_and(pred, truth.logical_not()).sum().item<int64_t>();
  c.fn = torch::logical_and(pred.logical_not(), truth).sum().item<int64_t>();
  c.tn = mask.numel() - c.tp - c.fp - c.fn;
  return f1_iou_from_counts(c);
}

std::optional<double> auc(const torch::Tensor& mask, const torch::Tensor& scores) {
  if (mask.numel() != scores.numel()) throw ShapeError("auc: mask and scores differ in size");
  auto m = mask.reshape({-1}).to(torch::kFloat64).contiguous();
  auto s = scores.reshape({-1}).to(torch::kFloat64).contiguous();
  const int64_t n = m.numel();
  std::vector<int64_t> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  if (n > kAucMaxPixels) {
    Rng rng(kAucSubsampleSeed);
    for (int64_t i = 0; i < kAucMaxPixels; ++i) {
      std::uniform_int_distribution<int64_t> pick(i, n - 1);
      std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(pick(rng))]);
    }
    idx.resize(static_cast<size_t>(kAucMaxPixels));
  }
  const double* mp = m.data_ptr<double>();
  const double* sp = s.data_ptr<double>();
  std::sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) { return sp[a] < sp[b]; });
  double pos = 0, neg = 0, rank_sum = 0;
  for (size_t i = 0; i < idx.size();) {
    size_t j = i;
    while (j < idx.size() && sp[idx[j]] == sp[idx[i]]) ++j;
    const double avg_rank = (static_cast<double>(i) + static_cast<double>(j) + 1.0) / 2.0;
    for (size_t k = i; k < j; ++k) {
      if (mp[idx[k]] > 0.5) {
        pos += 1;
        rank_sum += avg_rank;
      } else {
        neg += 1;
      }
    }
    i = j;
  }
  if (pos == 0 || neg == 0) return std::nullopt;
  return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg);
}

std::string MetricTable::to_csv() const {
  std::ostringstream os;
  bool first = true;
  for (const auto& k : key_columns) {
    os << (first ? "" : ",") << k;
    first = false;
  }
  for (const auto& v : value_columns) {
    os << (first ? "" : ",") << v;
    first = false;
  }
  os << "\n";
  for (const auto& row : rows) {
    first = true;
    for (const auto& k : key_columns) {
      const auto it = row.keys.find(k);
      os << (first ? "" : ",") << (it == row.keys.end() ? "" : it->second);
      first = false;
    }
    for (const auto& v : value_columns) {
      const auto it = row.values.find(v);
      os << (first ? "" : ",") << (it == row.values.end() ? "n/a" : format_double(it->second));
      first = false;
    }
    os << "\n";
  }
  return os.str();
}

nlohmann::json MetricTable::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json r = nlohmann::json::object();
    for (const auto& k : key_columns) {
      const auto it = row.keys.find(k);
      r[k] = it == row.keys.end() ? "" : it->second;
    }
    for (const auto& v : value_columns) {
      const auto it = row.values.find(v);
      if (it == row.values.end()) {
        r[v] = "n/a";
      } else {
        r[v] = it->second;
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

MetricTable aggregate(const std::vector<MetricRow>& reports, const std::vector<std::string>& group_keys,
                      const std::vector<std::string>& value_columns) {
  MetricTable table;
  table.key_columns = group_keys;
  table.value_columns = value_columns;
  std::vector<std::map<std::string, std::pair<double, int>>> sums;
  std::vector<std::map<std::string, std::string>> groups;
  for (const auto& r : reports) {
    std::map<std::string, std::string> key;
    for (const auto& k : group_keys) {
      const auto it = r.keys.find(k);
      key[k] = it == r.keys.end() ? "" : it->second;
    }
    auto pos = std::find(groups.begin(), groups.end(), key);
    size_t g;
    if (pos == groups.end()) {
      groups.push_back(key);
      sums.emplace_back();
      g = groups.size() - 1;
    } else {
      g = static_cast<size_t>(pos - groups.begin());
    }
    for (const auto& v : value_columns) {
      const auto it = r.values.find(v);
      if (it == r.values.end()) continue;
      auto& acc = sums[g][v];
      acc.first += it->second;
      acc.second += 1;
    }
  }
  for (size_t g = 0; g < groups.size(); ++g) {
    MetricRow row;
    row.keys = groups[g];
    for (const auto& [name, acc] : sums[g]) row.values[name] = acc.first / acc.second;
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string metric_conventions() {
  return "psnr capped at 100 dB; binarization threshold 0.5 with sigmoid(0) counted positive; "
         "empty/empty F1=IoU=1; AUC exact Mann-Whitney with ties 1/2, pixels subsampled to <=1e5 "
         "with fixed seed, n/a for single-class masks; localization metrics per image then mean; "
         "LPIPS/FID n/a";
}

}  // namespace wmguard
