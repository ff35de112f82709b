#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ordikit/analytics.hpp"
#include "ordikit/io.hpp"

namespace ordikit {

struct ScenarioReport {
  SummaryTable summary;
  std::optional<GainTable> model_gains;
  std::optional<GainTable> dataset_gains;
  std::map<std::string, double> mean_gain;  // summary mean minus baseline mean
  std::vector<SignificanceTest> tests;
  std::string note;  // set when gains could not be computed
};

struct Report {
  std::string baseline = "random_shuffle";
  PairingUnit pairing = PairingUnit::combination;
  std::vector<ScenarioReport> scenarios;  // sorted by scenario name
  std::vector<std::string> warnings;
};

inline Report build_report(std::span<const RunResult> results, const std::string& baseline = "random_shuffle",
                           PairingUnit pairing = PairingUnit::combination) {
  Report report;
  report.baseline = baseline;
  report.pairing = pairing;
  std::map<std::string, std::vector<RunResult>> by_scenario;
  for (const auto& r : results) by_scenario[r.scenario].push_back(r);
  for (const auto& [scenario, rs] : by_scenario) {
    ScenarioReport sr;
    sr.summary = summarize(rs);
    for (const auto& w : sr.summary.warnings) report.warnings.push_back(scenario + ": " + w);
    const bool has_baseline = sr.summary.mean.contains(baseline);
    if (!has_baseline) {
      sr.note = "baseline strategy " + baseline + " has no results";
    } else {
      std::vector<RunResult> by_model;
      std::vector<RunResult> by_dataset;
      for (const auto& r : rs) {
        if (r.model != kWildcard) by_model.push_back(r);
        if (r.dataset != kWildcard) by_dataset.push_back(r);
      }
      if (!by_model.empty()) sr.model_gains = accuracy_gain(aggregate(by_model, Axis::model), baseline);
      if (!by_dataset.empty()) sr.dataset_gains = accuracy_gain(aggregate(by_dataset, Axis::dataset), baseline);
      for (const auto& [s, m] : sr.summary.mean) sr.mean_gain[s] = m - sr.summary.mean.at(baseline);
      std::vector<RunResult> paired;
      for (const auto& r : rs) {
        if (r.model != kWildcard && r.dataset != kWildcard) paired.push_back(r);
      }
      // Marginal-only fixtures pair on the axis cells instead.
      if (paired.empty()) paired = by_model.empty() ? by_dataset : by_model;
      sr.tests = significance_tests(paired, baseline, pairing);
    }
    report.scenarios.push_back(std::move(sr));
  }
  return report;
}

namespace report_detail {

inline std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline std::string significance_mark(const SignificanceTest& t) {
  if (t.significant_at(0.05)) return "*";
  if (t.significant_at(0.10)) return "+";
  return "";
}

inline const SignificanceTest* find_test(const ScenarioReport& sr, const std::string& strategy) {
  for (const auto& t : sr.tests) {
    if (t.strategy == strategy) return &t;
  }
  return nullptr;
}

inline void gain_lines(std::string& out, const char* axis_name, const std::optional<GainTable>& g) {
  if (!g || g->best_per_column.empty()) {
    out += std::string("- by ") + axis_name + ": no data\n";
    return;
  }
  std::string where;
  for (const auto& b : g->best_per_column) {
    if (b.gain == g->highest_gain) {
      where = b.column + ", " + strategy_label(b.strategy);
      break;
    }
  }
  out += std::string("- by ") + axis_name + ": highest best-strategy gain " + format_gain(g->highest_gain) + " (" +
         where + "); mean of per-" + axis_name + " best gains " + format_gain(g->mean_of_best_gains) +
         "; best strategy by mean over " + axis_name + "s " + strategy_label(g->best_mean_strategy) + " " +
         format_gain(g->best_mean_gain) + "\n";
}

}  // namespace report_detail

/// Markdown report. Bold marks the column maximum; in gain tables `*` and
/// `+` flag mean gains significant at 5% and 10% in a paired t-test.
inline std::string render_markdown(const Report& report) {
  using namespace report_detail;
  std::string out = "# Learning strategy results\n\n";
  if (report.scenarios.empty()) {
    out += "## Accuracy\n\nno data\n\n## Accuracy gain\n\nno data\n\n## Significance\n\nno data\n";
    return out;
  }
  for (const auto& sr : report.scenarios) {
    const auto& s = sr.summary;
    const auto columns = s.columns();
    const auto bold = bold_cells(s);
    out += "## Scenario: " + s.scenario + "\n\n### Accuracy (%)\n\n| Strategy |";
    for (const auto& c : columns) out += " " + c + " |";
    out += " Mean |\n|---|";
    for (std::size_t i = 0; i <= columns.size(); ++i) out += "---:|";
    out += "\n";
    for (const auto& st : s.strategies) {
      out += "| " + strategy_label(st) + " |";
      auto cell = [&](const std::string& col, std::optional<double> v) {
        if (!v) return std::string(" - |");
        const std::string text = format_percent(*v);
        return bold.contains({st, col}) ? " **" + text + "** |" : " " + text + " |";
      };
      for (const auto& c : columns) {
        auto it = s.cells.find({st, c});
        out += cell(c, it == s.cells.end() ? std::nullopt : std::optional<double>(it->second));
      }
      auto m = s.mean.find(st);
      out += cell("Mean", m == s.mean.end() ? std::nullopt : std::optional<double>(m->second));
      out += "\n";
    }
    out += "\n### Accuracy gain over " + strategy_label(report.baseline) + " (percentage points)\n\n";
    if (!sr.note.empty() || (!sr.model_gains && !sr.dataset_gains)) {
      out += "no data" + (sr.note.empty() ? std::string{} : " (" + sr.note + ")") + "\n\n";
    } else {
      out += "| Strategy |";
      for (const auto& c : columns) out += " " + c + " |";
      out += " Mean |\n|---|";
      for (std::size_t i = 0; i <= columns.size(); ++i) out += "---:|";
      out += "\n";
      for (const auto& st : s.strategies) {
        if (st == report.baseline) continue;
        out += "| " + strategy_label(st) + " |";
        for (const auto& c : columns) {
          std::optional<double> g;
          for (const auto* table : {&sr.model_gains, &sr.dataset_gains}) {
            if (!*table) continue;
            if (auto it = (*table)->gains.find({st, c}); it != (*table)->gains.end()) g = it->second;
          }
          out += g ? " " + format_gain(*g) + " |" : " - |";
        }
        const auto* test = find_test(sr, st);
        out += " " + format_gain(sr.mean_gain.at(st)) + (test ? significance_mark(*test) : std::string{}) + " |\n";
      }
      out += "\n### Best-strategy gains\n\n";
      gain_lines(out, "model", sr.model_gains);
      gain_lines(out, "dataset", sr.dataset_gains);
      out += "\n";
    }
    out += "### Significance (paired t-test against " + strategy_label(report.baseline) + ", pairing by " +
           (report.pairing == PairingUnit::combination ? "model-dataset combination" : "run") + ")\n\n";
    if (sr.tests.empty()) {
      out += "no data\n\n";
    } else {
      out += "| Strategy | pairs | mean diff (pp) | t | p | 5% | 10% |\n|---|---:|---:|---:|---:|:-:|:-:|\n";
      for (const auto& t : sr.tests) {
        out += "| " + strategy_label(t.strategy) + " | " + std::to_string(t.n_pairs) + " |";
        if (!t.result) {
          out += " - | - | - | n/a (" + t.note + ") | |\n";
          continue;
        }
        out += " " + format_gain(t.result->mean_difference) + " | " + fmt("%.4f", t.result->t) + " | " +
               fmt("%.4f", t.result->p) + " | " + (t.significant_at(0.05) ? "yes" : "no") + " | " +
               (t.significant_at(0.10) ? "yes" : "no") + " |\n";
      }
      out += "\n";
    }
  }
  // Curriculum-family shift between labelling scenarios.
  std::map<std::string, const ScenarioReport*> by_name;
  for (const auto& sr : report.scenarios) by_name[sr.summary.scenario] = &sr;
  if (by_name.contains("human") && by_name.contains("llm")) {
    out += "## LLM-defined minus human-defined difficulty (mean accuracy, pp)\n\n| Strategy | Shift |\n|---|---:|\n";
    for (const char* st : {"curriculum", "blocked_curriculum", "interleaved_curriculum"}) {
      const auto& h = by_name["human"]->summary.mean;
      const auto& l = by_name["llm"]->summary.mean;
      if (h.contains(st) && l.contains(st)) {
        out += "| " + strategy_label(st) + " | " + format_gain(l.at(st) - h.at(st)) + " |\n";
      }
    }
    out += "\n";
  }
  if (!report.warnings.empty()) {
    out += "## Warnings\n\n";
    for (const auto& w : report.warnings) out += "- " + w + "\n";
    out += "\n";
  }
  return out;
}

/// Long-form CSV: scenario,kind,strategy,column,value (percent / pp).
inline std::string render_csv(const Report& report) {
  using report_detail::fmt;
  std::string out = "scenario,kind,strategy,column,value\n";
  for (const auto& sr : report.scenarios) {
    const auto& s = sr.summary;
    auto quote = [](const std::string& v) {
      if (v.find_first_of(",\"\n") == std::string::npos) return v;
      std::string q = "\"";
      for (char c : v) q += c == '"' ? std::string("\"\"") : std::string(1, c);
      return q + "\"";
    };
    for (const auto& st : s.strategies) {
      for (const auto& c : s.columns()) {
        if (auto it = s.cells.find({st, c}); it != s.cells.end()) {
          out += quote(s.scenario) + ",accuracy," + st + "," + quote(c) + "," + format_percent(it->second) + "\n";
        }
      }
      if (auto it = s.mean.find(st); it != s.mean.end()) {
        out += quote(s.scenario) + ",accuracy," + st + ",Mean," + format_percent(it->second) + "\n";
      }
    }
    for (const auto* g : {&sr.model_gains, &sr.dataset_gains}) {
      if (!*g) continue;
      for (const auto& st : (*g)->strategies) {
        for (const auto& c : (*g)->columns) {
          if (auto it = (*g)->gains.find({st, c}); it != (*g)->gains.end()) {
            out += quote(s.scenario) + ",gain," + st + "," + quote(c) + "," + format_gain(it->second) + "\n";
          }
        }
      }
    }
    for (const auto& [st, g] : sr.mean_gain) {
      out += quote(s.scenario) + ",gain," + st + ",Mean," + format_gain(g) + "\n";
    }
  }
  return out;
}

inline ordered_json render_json(const Report& report) {
  ordered_json j;
  j["baseline"] = report.baseline;
  j["pairing"] = report.pairing == PairingUnit::combination ? "combination" : "run";
  j["scenarios"] = ordered_json::array();
  for (const auto& sr : report.scenarios) {
    const auto& s = sr.summary;
    ordered_json sj;
    sj["scenario"] = s.scenario;
    sj["strategies"] = s.strategies;
    sj["model_columns"] = s.model_columns;
    sj["dataset_columns"] = s.dataset_columns;
    ordered_json acc = ordered_json::object();
    for (const auto& st : s.strategies) {
      ordered_json row = ordered_json::object();
      for (const auto& c : s.columns()) {
        if (auto it = s.cells.find({st, c}); it != s.cells.end()) row[c] = it->second;
      }
      if (auto it = s.mean.find(st); it != s.mean.end()) row["Mean"] = it->second;
      acc[st] = std::move(row);
    }
    sj["accuracy"] = std::move(acc);
    ordered_json bold = ordered_json::array();
    for (const auto& [st, c] : bold_cells(s)) bold.push_back({st, c});
    sj["bold"] = std::move(bold);
    ordered_json gains = ordered_json::object();
    for (const auto& [st, g] : sr.mean_gain) gains[st] = g;
    sj["mean_gain"] = std::move(gains);
    for (const auto* g : {&sr.model_gains, &sr.dataset_gains}) {
      if (!*g) continue;
      ordered_json gj;
      ordered_json cells = ordered_json::object();
      for (const auto& st : (*g)->strategies) {
        ordered_json row = ordered_json::object();
        for (const auto& c : (*g)->columns) {
          if (auto it = (*g)->gains.find({st, c}); it != (*g)->gains.end()) row[c] = it->second;
        }
        cells[st] = std::move(row);
      }
      gj["gains"] = std::move(cells);
      ordered_json best = ordered_json::array();
      for (const auto& b : (*g)->best_per_column) {
        best.push_back({{"column", b.column}, {"strategy", b.strategy}, {"gain", b.gain}});
      }
      gj["best_per_column"] = std::move(best);
      gj["highest_gain"] = (*g)->highest_gain;
      gj["mean_of_best_gains"] = (*g)->mean_of_best_gains;
      gj["best_mean_strategy"] = (*g)->best_mean_strategy;
      gj["best_mean_gain"] = (*g)->best_mean_gain;
      sj[std::string("gains_by_") + to_string((*g)->axis)] = std::move(gj);
    }
    ordered_json tests = ordered_json::array();
    for (const auto& t : sr.tests) {
      ordered_json tj;
      tj["strategy"] = t.strategy;
      tj["pairs"] = t.n_pairs;
      if (t.result) {
        tj["t"] = t.result->t;
        tj["p"] = t.result->p;
        tj["mean_difference"] = t.result->mean_difference;
        tj["significant_5"] = t.significant_at(0.05);
        tj["significant_10"] = t.significant_at(0.10);
      } else {
        tj["error"] = t.note;
      }
      tests.push_back(std::move(tj));
    }
    sj["tests"] = std::move(tests);
    if (!sr.note.empty()) sj["note"] = sr.note;
    j["scenarios"].push_back(std::move(sj));
  }
  j["warnings"] = report.warnings;
  return j;
}

/// Horizontal bars of each strategy's mean gain over the baseline.
inline std::string render_svg(const ScenarioReport& sr, const std::string& baseline) {
  using report_detail::fmt;
  const int row_h = 28;
  const int label_w = 200;
  const int plot_w = 360;
  std::vector<std::pair<std::string, double>> bars;
  for (const auto& st : sr.summary.strategies) {
    if (st != baseline && sr.mean_gain.contains(st)) bars.push_back({st, sr.mean_gain.at(st) * 100.0});
  }
  double span = 0.5;
  for (const auto& [st, v] : bars) span = std::max(span, std::abs(v));
  const int height = 50 + row_h * static_cast<int>(std::max<std::size_t>(bars.size(), 1));
  const int width = label_w + plot_w + 80;
  const double zero = label_w + plot_w / 2.0;
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
                    std::to_string(height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out += "<text x=\"10\" y=\"20\">Mean accuracy gain over " + strategy_label(baseline) + " (pp), scenario " +
         sr.summary.scenario + "</text>\n";
  if (bars.empty()) out += "<text x=\"10\" y=\"50\">no data</text>\n";
  int y = 36;
  for (const auto& [st, v] : bars) {
    const double w = std::abs(v) / span * (plot_w / 2.0);
    const double x = v >= 0 ? zero : zero - w;
    out += "<text x=\"10\" y=\"" + std::to_string(y + 16) + "\">" + strategy_label(st) + "</text>\n";
    out += "<rect x=\"" + fmt("%.2f", x) + "\" y=\"" + std::to_string(y + 4) + "\" width=\"" + fmt("%.2f", w) +
           "\" height=\"" + std::to_string(row_h - 8) + "\" fill=\"" + (v >= 0 ? "#3b7dd8" : "#d8573b") + "\"/>\n";
    out += "<text x=\"" + fmt("%.2f", zero + plot_w / 2.0 + 8) + "\" y=\"" + std::to_string(y + 16) + "\">" +
           format_gain(v / 100.0) + "</text>\n";
    y += row_h;
  }
  out += "<line x1=\"" + fmt("%.2f", zero) + "\" y1=\"30\" x2=\"" + fmt("%.2f", zero) + "\" y2=\"" +
         std::to_string(height - 10) + "\" stroke=\"#333\"/>\n</svg>\n";
  return out;
}

/// Writes report.md, report.json, report.csv and one gains_<scenario>.svg per
/// scenario; returns the written paths.
inline std::vector<std::filesystem::path> write_report(const Report& report, const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::filesystem::path& p, const std::string& text) {
    write_file(p, text);
    written.push_back(p);
  };
  put(dir / "report.md", render_markdown(report));
  put(dir / "report.json", render_json(report).dump(2) + "\n");
  put(dir / "report.csv", render_csv(report));
  for (const auto& sr : report.scenarios) {
    put(dir / ("gains_" + sr.summary.scenario + ".svg"), render_svg(sr, report.baseline));
  }
  return written;
}

}  // namespace ordikit
