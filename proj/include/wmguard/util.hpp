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

#ifndef WMGUARD_UTIL_HPP_
#define WMGUARD_UTIL_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace wmguard {

// Locale-independent shortest round-trip-ish formatting used in every CSV so
// reruns are byte-identical.
std::string format_double(double v);

// 64-bit FNV-1a, rendered as 16 hex digits.
uint64_t fnv1a64(std::string_view data);
std::string hash_hex(std::string_view data);

std::string read_text_file(const std::filesystem::path& path);
// Writes to a temporary sibling then renames, so readers never see a partial file.
void write_text_file(const std::filesystem::path& path, std::string_view text);

const char* code_version();

}  // namespace wmguard

#endif  // WMGUARD_UTIL_HPP_
