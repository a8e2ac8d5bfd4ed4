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

#ifndef WMGUARD_IMAGE_IO_HPP_
#define WMGUARD_IMAGE_IO_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "wmguard/types.hpp"

namespace wmguard {

// 1 x 3 x H x W float in [0,1], RGB order.
ImageTensor load_png(const std::filesystem::path& path);
// Writes image `index` of a B x 3 x H x W batch as 8-bit RGB.
void save_png(const std::filesystem::path& path, const ImageTensor& images, int64_t index = 0);
// Writes a B x 1 x H x W mask (values >= 0.5 -> 255).
void save_mask_png(const std::filesystem::path& path, const torch::Tensor& mask, int64_t index = 0);
TamperMask load_mask_png(const std::filesystem::path& path);

// *.png files in `dir`, sorted by name.
std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir);

struct ImageFolder {
  ImageTensor images;  // N x 3 x S x S
  std::vector<std::string> names;
};

// Loads every PNG in `dir`; all must be size x size.
ImageFolder load_folder(const std::filesystem::path& dir, int64_t size);

// Procedural desk corpus: a two-colour gradient, 2-5 soft ellipses or
// rounded boxes, and faint oriented sinusoids. Deterministic in `seed`.
ImageTensor synth_corpus(int64_t count, int64_t size, uint64_t seed);

void write_corpus(const std::filesystem::path& dir, const ImageTensor& images);

}  // namespace wmguard

#endif  // WMGUARD_IMAGE_IO_HPP_
