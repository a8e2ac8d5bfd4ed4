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

#include "wmguard/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "wmguard/types.hpp"
#include "wmguard/util.hpp"

namespace wmguard {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v, const char* fmt = "%.4g") {
  char buf[32];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

json read_json(const fs::path& p) {
  if (!fs::exists(p)) throw Error("missing artifact " + p.string());
  return json::parse(read_text_file(p));
}

}  // namespace

void write_table(const fs::path& dir, const std::string& stem, const MetricTable& table, const Provenance& prov,
                 const json& extra) {
  fs::create_directories(dir);
  std::string csv = "# config_hash=" + prov.config_hash + " code_version=" + prov.code_version + "\n";
  std::istringstream conv(metric_conventions());
  for (std::string line; std::getline(conv, line);) csv += "# " + line + "\n";
  csv += table.to_csv();
  write_text_file(dir / (stem + ".csv"), csv);

  json j = extra;
  j["config_hash"] = prov.config_hash;
  j["code_version"] = prov.code_version;
  j["conventions"] = metric_conventions();
  j["key_columns"] = table.key_columns;
  j["value_columns"] = table.value_columns;
  j["rows"] = table.to_json();
  write_text_file(dir / (stem + ".json"), j.dump(2) + "\n");
}

MetricTable read_table_json(const fs::path& path) {
  const auto j = read_json(path);
  MetricTable t;
  t.key_columns = j.at("key_columns").get<std::vector<std::string>>();
  t.value_columns = j.at("value_columns").get<std::vector<std::string>>();
  for (const auto& r : j.at("rows")) {
    MetricRow row;
    for (const auto& k : t.key_columns) row.keys[k] = r.at(k).get<std::string>();
    for (const auto& v : t.value_columns) {
      if (r.contains(v) && r.at(v).is_number()) row.values[v] = r.at(v).get<double>();
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<PlotSeries>& series) {
  constexpr double W = 520, H = 340, ml = 64, mr = 140, mt = 36, mb = 48;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  }
  if (x0 > x1) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad, y1 += pad;
  const double pw = W - ml - mr, ph = H - mt - mb;
  auto sx = [&](double x) { return ml + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return mt + (1 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << ml + pw / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">" << xml_escape(title)
     << "</text>\n";
  os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    os << "<text x=\"" << sx(xv) << "\" y=\"" << mt + ph + 14 << "\" text-anchor=\"middle\">" << num(xv)
       << "</text>\n";
    os << "<text x=\"" << ml - 6 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">" << num(yv) << "</text>\n";
    os << "<line x1=\"" << ml << "\" x2=\"" << ml + pw << "\" y1=\"" << sy(yv) << "\" y2=\"" << sy(yv)
       << "\" stroke=\"#ddd\"/>\n";
  }
  os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">" << xml_escape(x_label)
     << "</text>\n";
  os << "<text transform=\"translate(16," << mt + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << xml_escape(y_label) << "</text>\n";
  for (size_t i = 0; i < series.size(); ++i) {
    const char* color = kColors[i % (sizeof(kColors) / sizeof(kColors[0]))];
    auto pts = series[i].points;
    std::sort(pts.begin(), pts.end());
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.6\" points=\"";
    for (const auto& [x, y] : pts) os << num(sx(x), "%.2f") << "," << num(sy(y), "%.2f") << " ";
    os << "\"/>\n";
    if (pts.size() <= 40) {
      for (const auto& [x, y] : pts) {
        os << "<circle cx=\"" << num(sx(x), "%.2f") << "\" cy=\"" << num(sy(y), "%.2f") << "\" r=\"2.5\" fill=\""
           << color << "\"/>\n";
      }
    }
    const double ly = mt + 12 + 16 * static_cast<double>(i);
    os << "<line x1=\"" << ml + pw + 10 << "\" x2=\"" << ml + pw + 28 << "\" y1=\"" << ly << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << ml + pw + 32 << "\" y=\"" << ly + 4 << "\">" << xml_escape(series[i].name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

ReportOutputs build_report(const RunDirectory& run) {
  if (!fs::is_directory(run.root)) throw Error("run directory does not exist: " + run.root.string());
  const auto robustness_path = run.results() / "robustness.json";
  if (!fs::exists(robustness_path)) {
    throw Error("missing artifact " + robustness_path.string() + " (run `wmguard attack` first)");
  }
  ReportOutputs out;
  fs::create_directories(run.plots());
  const auto rob_json = read_json(robustness_path);
  const auto rob = read_table_json(robustness_path);

  // Bit accuracy and F1 against attack strength, one plot per attack kind.
  std::map<std::string, std::vector<const MetricRow*>> by_kind;
  for (const auto& r : rob.rows) by_kind[r.keys.at("attack")].push_back(&r);
  for (const auto& [kind, rows] : by_kind) {
    if (kind == "identity" || rows.size() < 2) continue;
    PlotSeries acc{"bit acc (%)", {}}, f1{"F1 x 100", {}};
    for (const auto* r : rows) {
      const double p = std::stod(r->keys.at("param"));
      if (r->values.count("bit_acc")) acc.points.emplace_back(p, r->values.at("bit_acc"));
      if (r->values.count("f1")) f1.points.emplace_back(p, 100 * r->values.at("f1"));
    }
    const auto path = run.plots() / ("bit_acc_vs_" + kind + ".svg");
    write_text_file(path, svg_line_plot("Robustness: " + kind, kind + " strength", "score", {acc, f1}));
    out.written.push_back(path);
  }

  const auto coverage_path = run.results() / "coverage.json";
  if (fs::exists(coverage_path)) {
    const auto cov = read_table_json(coverage_path);
    PlotSeries f1{"F1", {}}, iou{"IoU", {}};
    for (const auto& r : cov.rows) {
      const double mid = 0.5 * (std::stod(r.keys.at("coverage_lo")) + std::stod(r.keys.at("coverage_hi")));
      if (r.values.count("f1")) f1.points.emplace_back(mid, r.values.at("f1"));
      if (r.values.count("iou")) iou.points.emplace_back(mid, r.values.at("iou"));
    }
    const auto path = run.plots() / "f1_vs_coverage.svg";
    write_text_file(path, svg_line_plot("Localization vs tamper coverage", "tamper coverage", "score", {f1, iou}));
    out.written.push_back(path);
  }

  if (fs::exists(run.train_log())) {
    std::ifstream in(run.train_log());
    PlotSeries total{"total (100-step mean)", {}};
    std::vector<double> window;
    double sum = 0;
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      const auto j = json::parse(line);
      const double v = j.at("total").get<double>();
      window.push_back(v);
      sum += v;
      if (window.size() > 100) sum -= window[window.size() - 101];
      const double n = static_cast<double>(std::min<size_t>(window.size(), 100));
      const auto step = j.at("step").get<int64_t>();
      if (step % 10 == 0) total.points.emplace_back(static_cast<double>(step), sum / n);
    }
    const auto path = run.plots() / "training_loss.svg";
    write_text_file(path, svg_line_plot("Training loss", "step", "loss", {total}));
    out.written.push_back(path);
  }

  std::ostringstream md;
  md << "# wmguard run report\n\n";
  md << "- config hash: `" << rob_json.value("config_hash", "") << "`\n";
  md << "- code version: `" << rob_json.value("code_version", "") << "`\n\n";
  const auto fidelity_path = run.results() / "fidelity.json";
  if (fs::exists(fidelity_path)) {
    const auto fid = read_table_json(fidelity_path);
    md << "## Fidelity and clean forensics\n\n| metric | value |\n|---|---|\n";
    for (const auto& r : fid.rows) {
      for (const auto& c : fid.value_columns) {
        md << "| " << c << " | " << (r.values.count(c) ? format_double(r.values.at(c)) : "n/a") << " |\n";
      }
    }
    md << "\n";
  }
  md << "## Robustness (attack after splicing)\n\n| attack | param | bit_acc | f1 | auc | iou |\n|---|---|---|---|---|---|\n";
  for (const auto& r : rob.rows) {
    auto cell = [&](const char* c) { return r.values.count(c) ? format_double(r.values.at(c)) : std::string("n/a"); };
    md << "| " << r.keys.at("attack") << " | " << r.keys.at("param") << " | " << cell("bit_acc") << " | "
       << cell("f1") << " | " << cell("auc") << " | " << cell("iou") << " |\n";
  }
  md << "\n## Conventions\n\n";
  std::istringstream conv(metric_conventions());
  for (std::string line; std::getline(conv, line);) md << "- " << line << "\n";
  md << "\nLPIPS and FID are not computed (n/a).\n";
  const auto summary = run.root / "summary.md";
  write_text_file(summary, md.str());
  out.written.push_back(summary);
  return out;
}

}  // namespace wmguard
