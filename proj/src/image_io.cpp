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

#include "wmguard/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace wmguard {

namespace fs = std::filesystem;

ImageTensor load_png(const fs::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw Error("cannot read image " + path.string());
  const int h = bgr.rows, w = bgr.cols;
  auto out = torch::empty({1, 3, h, w}, torch::kFloat32);
  auto acc = out.accessor<float, 4>();
  for (int y = 0; y < h; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) acc[0][c][y][x] = row[x][2 - c] / 255.0f;
    }
  }
  return out;
}

void save_png(const fs::path& path, const ImageTensor& images, int64_t index) {
  check_image(images, "save_png");
  const auto img = images[index].detach().to(torch::kCPU, torch::kFloat32).clamp(0, 1).contiguous();
  const int h = static_cast<int>(img.size(1)), w = static_cast<int>(img.size(2));
  cv::Mat bgr(h, w, CV_8UC3);
  auto acc = img.accessor<float, 3>();
  for (int y = 0; y < h; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) row[x][2 - c] = static_cast<uint8_t>(std::lround(acc[c][y][x] * 255.0f));
    }
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), bgr)) throw Error("cannot write image " + path.string());
}

void save_mask_png(const fs::path& path, const torch::Tensor& mask, int64_t index) {
  if (mask.dim() != 4 || mask.size(1) != 1) throw ShapeError("save_mask_png: expected B x 1 x H x W");
  const auto m = (mask[index][0].detach().to(torch::kCPU, torch::kFloat32) >= 0.5).to(torch::kUInt8).contiguous();
  const int h = static_cast<int>(m.size(0)), w = static_cast<int>(m.size(1));
  cv::Mat out(h, w, CV_8UC1);
  const auto* p = m.data_ptr<uint8_t>();
  for (int i = 0; i < h * w; ++i) out.data[i] = p[i] ? 255 : 0;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), out)) throw Error("cannot write mask " + path.string());
}

TamperMask load_mask_png(const fs::path& path) {
  cv::Mat g = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (g.empty()) throw Error("cannot read mask " + path.string());
  auto m = torch::empty({1, 1, g.rows, g.cols}, torch::kFloat32);
  auto* p = m.data_ptr<float>();
  for (int y = 0; y < g.rows; ++y) {
    const auto* row = g.ptr<uint8_t>(y);
    for (int x = 0; x < g.cols; ++x) p[y * g.cols + x] = row[x] >= 128 ? 1.0f : 0.0f;
  }
  return TamperMask(m);
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

ImageFolder load_folder(const fs::path& dir, int64_t size) {
  const auto files = list_pngs(dir);
  if (files.empty()) throw Error("no PNG images in " + dir.string());
  ImageFolder f;
  f.images = torch::empty({static_cast<int64_t>(files.size()), 3, size, size}, torch::kFloat32);
  for (size_t i = 0; i < files.size(); ++i) {
    const auto img = load_png(files[i]);
    if (img.size(2) != size || img.size(3) != size) {
      throw ShapeError(files[i].string() + " is " + std::to_string(img.size(3)) + "x" +
                       std::to_string(img.size(2)) + ", expected " + std::to_string(size) + "x" +
                       std::to_string(size));
    }
    f.images[static_cast<int64_t>(i)] = img[0];
    f.names.push_back(files[i].filename().string());
  }
  return f;
}

ImageTensor synth_corpus(int64_t count, int64_t size, uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * u01(rng); };
  constexpr double kPi = std::numbers::pi;

  auto out = torch::empty({count, 3, size, size}, torch::kFloat32);
  auto acc = out.accessor<float, 4>();
  const double denom = static_cast<double>(std::max<int64_t>(size - 1, 1));
  std::vector<double> img(3 * size * size);
  auto at = [&](int c, int64_t y, int64_t x) -> double& { return img[(c * size + y) * size + x]; };

  for (int64_t n = 0; n < count; ++n) {
    double c0[3], c1[3];
    for (auto& v : c0) v = u01(rng);
    for (auto& v : c1) v = u01(rng);
    const double ang = uni(0, 2 * kPi);
    // Gradient along a random direction, normalized to [0,1] over the frame.
    const double ca = std::cos(ang), sa = std::sin(ang);
    const double tmin = std::min(0.0, ca) + std::min(0.0, sa), tmax = std::max(0.0, ca) + std::max(0.0, sa);
    for (int64_t y = 0; y < size; ++y) {
      for (int64_t x = 0; x < size; ++x) {
        const double t = (ca * (x / denom) + sa * (y / denom) - tmin) / (tmax - tmin + 1e-9);
        for (int c = 0; c < 3; ++c) at(c, y, x) = c0[c] * (1 - t) + c1[c] * t;
      }
    }
    const int shapes = 2 + static_cast<int>(rng() % 4);
    for (int s = 0; s < shapes; ++s) {
      double col[3];
      for (auto& v : col) v = u01(rng);
      const double cx = u01(rng), cy = u01(rng);
      const double a = uni(0.08, 0.35), b = uni(0.08, 0.35), th = uni(0, kPi);
      const bool round = u01(rng) < 0.5;
      const double sharp = uni(6, 20);
      for (int64_t y = 0; y < size; ++y) {
        for (int64_t x = 0; x < size; ++x) {
          const double dx = x / denom - cx, dy = y / denom - cy;
          const double pu = (std::cos(th) * dx + std::sin(th) * dy) / a;
          const double pv = (-std::sin(th) * dx + std::cos(th) * dy) / b;
          const double d = round ? std::sqrt(pu * pu + pv * pv) : std::max(std::abs(pu), std::abs(pv));
          const double alpha = 1 / (1 + std::exp((d - 1) * sharp));
          for (int c = 0; c < 3; ++c) at(c, y, x) = at(c, y, x) * (1 - alpha) + col[c] * alpha;
        }
      }
    }
    for (int k = 0; k < 3; ++k) {
      const double fx = uni(-8, 8), fy = uni(-8, 8), ph = uni(0, 2 * kPi), amp = uni(0, 0.04);
      for (int64_t y = 0; y < size; ++y) {
        for (int64_t x = 0; x < size; ++x) {
          const double v = amp * std::sin(2 * kPi * (fx * x / denom + fy * y / denom) + ph);
          for (int c = 0; c < 3; ++c) at(c, y, x) += v;
        }
      }
    }
    for (int c = 0; c < 3; ++c) {
      for (int64_t y = 0; y < size; ++y) {
        for (int64_t x = 0; x < size; ++x) acc[n][c][y][x] = static_cast<float>(std::clamp(at(c, y, x), 0.0, 1.0));
      }
    }
  }
  return out;
}

void write_corpus(const fs::path& dir, const ImageTensor& images) {
  fs::create_directories(dir);
  char name[32];
  for (int64_t i = 0; i < images.size(0); ++i) {
    std::snprintf(name, sizeof(name), "img_%05lld.png", static_cast<long long>(i));
    save_png(dir / name, images, i);
  }
}

}  // namespace wmguard
