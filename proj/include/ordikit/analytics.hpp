#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "ordikit/error.hpp"
#include "ordikit/io.hpp"
#include "ordikit/rng.hpp"
#include "ordikit/scheduler.hpp"
#include "ordikit/stats.hpp"

namespace ordikit {

/// One fine-tuning run scored on one dataset. A model or dataset of "*"
/// marks a record already averaged over that dimension.
struct RunResult {
  std::string strategy;
  std::string model;
  std::string dataset;
  std::string scenario;
  int run_index = 0;
  double accuracy = 0.0;
  std::size_t n_items = 0;

  bool operator==(const RunResult&) const = default;
};

inline constexpr const char* kWildcard = "*";

inline void validate_run_result(const RunResult& r, const std::string& where = {}) {
  const std::string at = where.empty() ? std::string{} : where + ": ";
  if (r.strategy.empty() || r.model.empty() || r.dataset.empty() || r.scenario.empty()) {
    fail("missing_field", at + "strategy, model, dataset and scenario are required");
  }
  if (r.n_items == 0) fail("bad_result", at + "n_items must be positive");
  if (!(r.accuracy >= 0.0 && r.accuracy <= 1.0)) fail("bad_result", at + "accuracy must lie in [0, 1]");
  const double correct = r.accuracy * static_cast<double>(r.n_items);
  if (std::abs(correct - std::round(correct)) > 1e-6 * std::max(1.0, correct)) {
    fail("bad_result", at + "accuracy is not a whole number of correct answers out of " + std::to_string(r.n_items));
  }
}

inline ordered_json to_json(const RunResult& r) {
  ordered_json j;
  j["strategy"] = r.strategy;
  j["model"] = r.model;
  j["dataset"] = r.dataset;
  j["scenario"] = r.scenario;
  j["run_index"] = r.run_index;
  j["accuracy"] = r.accuracy;
  j["n_items"] = r.n_items;
  return j;
}

inline std::string serialize_run_results(std::span<const RunResult> rs) {
  std::string out;
  for (const auto& r : rs) out += to_json(r).dump() + "\n";
  return out;
}

inline std::vector<RunResult> parse_run_results(const std::string& text, const std::string& source = "<memory>") {
  std::vector<RunResult> out;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_blank(lines[i])) continue;
    const std::string where = source + ":" + std::to_string(i + 1);
    const json j = parse_json_line(lines[i], i + 1, source);
    RunResult r;
    try {
      r.strategy = j.at("strategy").get<std::string>();
      r.model = j.at("model").get<std::string>();
      r.dataset = j.at("dataset").get<std::string>();
      r.scenario = j.at("scenario").get<std::string>();
      r.run_index = j.value("run_index", 0);
      r.accuracy = j.at("accuracy").get<double>();
      r.n_items = j.at("n_items").get<std::size_t>();
    } catch (const json::exception& e) {
      fail("parse_error", where + ": " + e.what());
    }
    validate_run_result(r, where);
    out.push_back(std::move(r));
  }
  return out;
}

/// Fraction of predictions equal to gold; a missing prediction (parse
/// failure) counts as wrong.
inline double accuracy(std::span<const std::pair<std::optional<char>, char>> predictions) {
  if (predictions.empty()) fail("empty_input", "accuracy of an empty prediction list");
  std::size_t correct = 0;
  for (const auto& [pred, gold] : predictions) {
    if (pred && *pred == gold) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

inline std::string strategy_label(const std::string& id) {
  static const std::map<std::string, std::string> names = {
      {"random_shuffle", "Random Shuffle"},   {"curriculum", "Curriculum"},
      {"blocked", "Blocked"},                 {"blocked_curriculum", "Blocked Curriculum"},
      {"interleaved", "Interleaved"},         {"interleaved_curriculum", "Interleaved Curriculum"}};
  auto it = names.find(id);
  return it == names.end() ? id : it->second;
}

/// Known strategies in their fixed display order, then others by first use.
inline std::vector<std::string> ordered_strategies(std::span<const RunResult> rs) {
  std::vector<std::string> out;
  std::set<std::string> present;
  for (const auto& r : rs) present.insert(r.strategy);
  for (Strategy s : kAllStrategies) {
    if (present.erase(to_string(s))) out.push_back(to_string(s));
  }
  for (const auto& r : rs) {
    if (present.erase(r.strategy)) out.push_back(r.strategy);
  }
  return out;
}

enum class Axis { model, dataset };

inline const char* to_string(Axis a) { return a == Axis::model ? "model" : "dataset"; }

struct ResultTable {
  Axis axis = Axis::model;
  std::vector<std::string> strategies;
  std::vector<std::string> columns;  // axis values in first-appearance order
  std::map<std::pair<std::string, std::string>, double> cells;
  std::map<std::string, double> mean_column;  // over all combinations
  std::vector<std::string> warnings;

  std::optional<double> cell(const std::string& strategy, const std::string& column) const {
    auto it = cells.find({strategy, column});
    if (it == cells.end()) return std::nullopt;
    return it->second;
  }
};

using Combination = std::tuple<std::string, std::string, std::string>;  // strategy, model, dataset

/// Per (strategy, model, dataset) accuracy averaged over runs.
inline std::map<Combination, double> combination_means(std::span<const RunResult> rs) {
  std::map<Combination, std::pair<double, std::size_t>> acc;
  for (const auto& r : rs) {
    auto& [sum, n] = acc[{r.strategy, r.model, r.dataset}];
    sum += r.accuracy;
    ++n;
  }
  std::map<Combination, double> out;
  for (const auto& [key, sn] : acc) out[key] = sn.first / static_cast<double>(sn.second);
  return out;
}

/// Runs are averaged per model-dataset combination first; each cell is the
/// mean over combinations with that axis value and the mean column the mean
/// over all of a strategy's combinations. Missing combinations or unequal run
/// counts add a warning and the means stay per combination.
inline ResultTable aggregate(std::span<const RunResult> rs, Axis axis) {
  if (rs.empty()) fail("empty_grid", "no run results to aggregate");
  std::set<std::string> scenarios;
  for (const auto& r : rs) scenarios.insert(r.scenario);
  if (scenarios.size() > 1) {
    fail("mixed_scenarios", "results span several labelling scenarios; aggregate them separately",
         {scenarios.begin(), scenarios.end()});
  }
  ResultTable t;
  t.axis = axis;
  t.strategies = ordered_strategies(rs);
  std::vector<std::string> models;
  std::vector<std::string> datasets;
  {
    std::set<std::string> ms, ds;
    for (const auto& r : rs) {
      if (ms.insert(r.model).second) models.push_back(r.model);
      if (ds.insert(r.dataset).second) datasets.push_back(r.dataset);
    }
  }
  t.columns = axis == Axis::model ? models : datasets;

  const auto combos = combination_means(rs);
  std::map<std::pair<std::string, std::string>, std::pair<double, std::size_t>> cell_acc;
  std::map<std::string, std::pair<double, std::size_t>> mean_acc;
  for (const auto& [key, value] : combos) {
    const auto& [strategy, model, dataset] = key;
    const std::string& col = axis == Axis::model ? model : dataset;
    auto& c = cell_acc[{strategy, col}];
    c.first += value;
    ++c.second;
    auto& m = mean_acc[strategy];
    m.first += value;
    ++m.second;
  }
  for (const auto& [key, sn] : cell_acc) t.cells[key] = sn.first / static_cast<double>(sn.second);
  for (const auto& [key, sn] : mean_acc) t.mean_column[key] = sn.first / static_cast<double>(sn.second);

  const std::size_t full = models.size() * datasets.size();
  std::map<std::string, std::size_t> per_strategy;
  for (const auto& [key, value] : combos) ++per_strategy[std::get<0>(key)];
  for (const auto& s : t.strategies) {
    if (per_strategy[s] != full) {
      t.warnings.push_back("imbalanced grid: strategy " + s + " has " + std::to_string(per_strategy[s]) + " of " +
                           std::to_string(full) + " model-dataset combinations; means are over the combinations present");
    }
  }
  std::map<Combination, std::size_t> runs;
  for (const auto& r : rs) ++runs[{r.strategy, r.model, r.dataset}];
  std::set<std::size_t> run_counts;
  for (const auto& [key, n] : runs) run_counts.insert(n);
  if (run_counts.size() > 1) t.warnings.push_back("unequal run counts across combinations");
  return t;
}

/// Half-even rounding to `digits` decimals after snapping away binary noise
/// below 1e-9 of the last digit.
inline double round_half_even(double x, int digits = 2) {
  const double scale = std::pow(10.0, digits);
  const double scaled = std::round(x * scale * 1e6) / 1e6;
  const double lower = std::floor(scaled);
  const double frac = scaled - lower;
  double r = 0.0;
  if (std::abs(frac - 0.5) < 1e-9) {
    r = std::fmod(lower, 2.0) == 0.0 ? lower : lower + 1.0;
  } else {
    r = std::round(scaled);
  }
  return r / scale;
}

/// Accuracy in percent with two decimals.
inline std::string format_percent(double fraction) {
  char buf[32];
  double v = round_half_even(fraction * 100.0);
  if (v == 0.0) v = 0.0;
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

/// Signed percentage points, e.g. "+0.70".
inline std::string format_gain(double fraction) {
  char buf[32];
  double v = round_half_even(fraction * 100.0);
  if (v == 0.0) v = 0.0;
  std::snprintf(buf, sizeof buf, "%+.2f", v);
  return buf;
}

struct BestGain {
  std::string column;
  std::string strategy;
  double gain = 0.0;
};

struct GainTable {
  Axis axis = Axis::model;
  std::string baseline;
  std::vector<std::string> strategies;
  std::vector<std::string> columns;
  std::map<std::pair<std::string, std::string>, double> gains;
  std::map<std::string, double> mean_gain;  // mean column minus the baseline's
  std::vector<BestGain> best_per_column;    // top non-baseline strategy per column
  double highest_gain = 0.0;                // max of best_per_column
  double mean_of_best_gains = 0.0;          // mean of best_per_column
  std::string best_mean_strategy;           // argmax of mean_gain (non-baseline)
  double best_mean_gain = 0.0;
};

/// Cell-wise strategy minus baseline.
inline GainTable accuracy_gain(const ResultTable& t, const std::string& baseline = "random_shuffle") {
  if (std::find(t.strategies.begin(), t.strategies.end(), baseline) == t.strategies.end()) {
    fail("missing_baseline", "baseline strategy '" + baseline + "' has no results", {baseline});
  }
  GainTable g;
  g.axis = t.axis;
  g.baseline = baseline;
  g.strategies = t.strategies;
  g.columns = t.columns;
  for (const auto& s : t.strategies) {
    for (const auto& c : t.columns) {
      const auto v = t.cell(s, c);
      const auto b = t.cell(baseline, c);
      if (v && b) g.gains[{s, c}] = *v - *b;
    }
    g.mean_gain[s] = t.mean_column.at(s) - t.mean_column.at(baseline);
  }
  bool any = false;
  double sum = 0.0;
  for (const auto& c : t.columns) {
    std::optional<BestGain> best;
    for (const auto& s : t.strategies) {
      if (s == baseline) continue;
      auto it = g.gains.find({s, c});
      if (it == g.gains.end()) continue;
      if (!best || it->second > best->gain) best = BestGain{c, s, it->second};
    }
    if (!best) continue;
    g.best_per_column.push_back(*best);
    g.highest_gain = any ? std::max(g.highest_gain, best->gain) : best->gain;
    sum += best->gain;
    any = true;
  }
  if (any) g.mean_of_best_gains = sum / static_cast<double>(g.best_per_column.size());
  bool first = true;
  for (const auto& s : t.strategies) {
    if (s == baseline) continue;
    if (first || g.mean_gain[s] > g.best_mean_gain) {
      g.best_mean_strategy = s;
      g.best_mean_gain = g.mean_gain[s];
      first = false;
    }
  }
  return g;
}

enum class PairingUnit { combination, run };

inline PairingUnit parse_pairing_unit(const std::string& text) {
  if (text == "combination") return PairingUnit::combination;
  if (text == "run") return PairingUnit::run;
  fail("bad_pairing", "unknown pairing unit '" + text + "' (expected combination or run)");
}

struct SignificanceTest {
  std::string strategy;
  std::string baseline;
  std::size_t n_pairs = 0;
  std::optional<stats::TTestResult> result;
  std::string note;  // why no result, when absent

  bool significant_at(double alpha) const { return result && result->p < alpha; }
};

/// Paired t-test of each strategy against the baseline, pairing either the
/// run-averaged model-dataset combinations or individual runs.
inline std::vector<SignificanceTest> significance_tests(std::span<const RunResult> rs,
                                                        const std::string& baseline = "random_shuffle",
                                                        PairingUnit unit = PairingUnit::combination) {
  std::map<std::string, std::map<std::tuple<std::string, std::string, int>, double>> values;
  if (unit == PairingUnit::combination) {
    for (const auto& [key, v] : combination_means(rs)) {
      values[std::get<0>(key)][{std::get<1>(key), std::get<2>(key), 0}] = v;
    }
  } else {
    for (const auto& r : rs) values[r.strategy][{r.model, r.dataset, r.run_index}] = r.accuracy;
  }
  std::vector<SignificanceTest> out;
  if (!values.contains(baseline)) return out;
  const auto& base = values[baseline];
  for (const auto& s : ordered_strategies(rs)) {
    if (s == baseline) continue;
    SignificanceTest t{s, baseline, 0, std::nullopt, {}};
    std::vector<double> a;
    std::vector<double> b;
    for (const auto& [key, v] : values[s]) {
      auto it = base.find(key);
      if (it == base.end()) continue;
      a.push_back(v);
      b.push_back(it->second);
    }
    t.n_pairs = a.size();
    try {
      t.result = stats::paired_ttest(a, b);
    } catch (const Error& e) {
      t.note = e.code();
    }
    out.push_back(std::move(t));
  }
  return out;
}

/// Seeded k-fold assignment: ids are shuffled and dealt round-robin, so fold
/// sizes differ by at most one. Returned fold indices follow `ids`.
inline std::vector<int> assign_folds(std::span<const std::string> ids, int k = 5, std::uint64_t seed = 0) {
  if (k < 2) fail("bad_folds", "k must be >= 2");
  if (ids.size() < static_cast<std::size_t>(k)) fail("bad_folds", "fewer items than folds");
  std::vector<std::size_t> order(ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<int> folds(ids.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) folds[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(k));
  return folds;
}

/// Model columns followed by dataset columns; the mean is the average of the
/// two axis tables' mean columns (identical when a full grid is given).
struct SummaryTable {
  std::string scenario;
  std::vector<std::string> strategies;
  std::vector<std::string> model_columns;
  std::vector<std::string> dataset_columns;
  std::map<std::pair<std::string, std::string>, double> cells;
  std::map<std::string, double> mean;
  std::vector<std::string> warnings;

  std::vector<std::string> columns() const {
    std::vector<std::string> out = model_columns;
    out.insert(out.end(), dataset_columns.begin(), dataset_columns.end());
    return out;
  }
};

inline SummaryTable summarize(std::span<const RunResult> rs) {
  if (rs.empty()) fail("empty_grid", "no run results to summarize");
  std::vector<RunResult> by_model;
  std::vector<RunResult> by_dataset;
  for (const auto& r : rs) {
    if (r.model != kWildcard) by_model.push_back(r);
    if (r.dataset != kWildcard) by_dataset.push_back(r);
  }
  SummaryTable s;
  s.scenario = rs.front().scenario;
  s.strategies = ordered_strategies(rs);
  std::map<std::string, std::pair<double, int>> means;
  for (auto* part : {&by_model, &by_dataset}) {
    if (part->empty()) continue;
    const Axis axis = part == &by_model ? Axis::model : Axis::dataset;
    const ResultTable t = aggregate(*part, axis);
    (axis == Axis::model ? s.model_columns : s.dataset_columns) = t.columns;
    for (const auto& [key, v] : t.cells) s.cells[key] = v;
    for (const auto& [strategy, v] : t.mean_column) {
      means[strategy].first += v;
      ++means[strategy].second;
    }
    for (const auto& w : t.warnings) s.warnings.push_back(std::string(to_string(axis)) + " axis: " + w);
  }
  for (const auto& [strategy, sn] : means) s.mean[strategy] = sn.first / sn.second;
  return s;
}

/// Column maxima compared after display rounding; ties mark every tied cell.
inline std::set<std::pair<std::string, std::string>> bold_cells(const SummaryTable& s) {
  std::set<std::pair<std::string, std::string>> out;
  auto mark = [&](const std::string& column, auto value_of) {
    std::optional<double> best;
    for (const auto& st : s.strategies) {
      if (auto v = value_of(st)) best = best ? std::max(*best, round_half_even(*v * 100.0)) : round_half_even(*v * 100.0);
    }
    if (!best) return;
    for (const auto& st : s.strategies) {
      if (auto v = value_of(st); v && round_half_even(*v * 100.0) == *best) out.insert({st, column});
    }
  };
  for (const auto& c : s.columns()) {
    mark(c, [&](const std::string& st) -> std::optional<double> {
      auto it = s.cells.find({st, c});
      return it == s.cells.end() ? std::nullopt : std::optional<double>(it->second);
    });
  }
  mark("Mean", [&](const std::string& st) -> std::optional<double> {
    auto it = s.mean.find(st);
    return it == s.mean.end() ? std::nullopt : std::optional<double>(it->second);
  });
  return out;
}

}  // namespace ordikit
