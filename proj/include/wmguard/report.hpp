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

// Run directory artifacts: metric tables with provenance headers, SVG line
// plots and the markdown summary written by `wmguard report`.

#ifndef WMGUARD_REPORT_HPP_
#define WMGUARD_REPORT_HPP_

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "wmguard/metrics.hpp"

namespace wmguard {

// Standard run directory layout.
struct RunDirectory {
  std::filesystem::path root;

  std::filesystem::path config() const { return root / "config.json"; }
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path final_checkpoint() const { return checkpoints() / "final.pt"; }
  std::filesystem::path train_log() const { return root / "logs" / "train.jsonl"; }
  std::filesystem::path results() const { return root / "results"; }
  std::filesystem::path plots() const { return root / "plots"; }
};

// Provenance stamped into every CSV (as '#' comment lines) and JSON file.
struct Provenance {
  std::string config_hash;
  std::string code_version;
};

// Writes `<stem>.csv` and `<stem>.json`; the JSON also carries `extra`.
void write_table(const std::filesystem::path& dir, const std::string& stem, const MetricTable& table,
                 const Provenance& prov, const nlohmann::json& extra = nlohmann::json::object());

// Reads a table previously written by write_table (from its JSON mirror).
MetricTable read_table_json(const std::filesystem::path& path);

struct PlotSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

// Minimal dependency-free SVG line chart.
std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<PlotSeries>& series);

struct ReportOutputs {
  std::vector<std::filesystem::path> written;
};

// Builds plots and summary.md from results/ and logs/ of a run directory.
// Throws naming the first missing artifact.
ReportOutputs build_report(const RunDirectory& run);

}  // namespace wmguard

#endif  // WMGUARD_REPORT_HPP_
