#pragma once

// Independent reference computations shared by the unit and acceptance
// suites. Nothing here calls the library code it is used to check.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "ordikit/scheduler.hpp"

namespace oracle {

// Ordering invariants

struct Item {
  std::string id;
  std::string category;
  double difficulty;
  std::size_t rank;
};

inline std::vector<Item> plain(std::span<const ordikit::LabeledItem> items) {
  std::vector<Item> out;
  for (const auto& it : items) out.push_back({it.question_id, it.category.value_or(""), it.difficulty.value_or(0.0), it.input_rank});
  return out;
}

/// Straightforward re-derivation of each strategy except the random shuffle.
inline std::vector<std::string> expected_order(ordikit::Strategy s, std::vector<Item> items,
                                               const std::vector<std::string>& category_order) {
  using ordikit::Strategy;
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.rank < b.rank; });
  const bool by_difficulty =
      s == Strategy::curriculum || s == Strategy::blocked_curriculum || s == Strategy::interleaved_curriculum;
  if (by_difficulty) {
    // Insertion sort keeps equal difficulties in input order.
    for (std::size_t i = 1; i < items.size(); ++i) {
      for (std::size_t j = i; j > 0 && items[j - 1].difficulty > items[j].difficulty; --j) std::swap(items[j - 1], items[j]);
    }
  }
  std::vector<std::string> out;
  if (s == Strategy::curriculum) {
    for (const auto& it : items) out.push_back(it.id);
    return out;
  }
  std::vector<std::vector<std::string>> queues;
  for (const auto& c : category_order) {
    queues.emplace_back();
    for (const auto& it : items) {
      if (it.category == c) queues.back().push_back(it.id);
    }
  }
  if (s == Strategy::blocked || s == Strategy::blocked_curriculum) {
    for (const auto& q : queues) out.insert(out.end(), q.begin(), q.end());
    return out;
  }
  std::vector<std::size_t> next(queues.size(), 0);
  for (bool any = true; any;) {
    any = false;
    for (std::size_t c = 0; c < queues.size(); ++c) {
      if (next[c] < queues[c].size()) {
        out.push_back(queues[c][next[c]++]);
        any = true;
      }
    }
  }
  return out;
}

/// Every invariant the strategy promises, as human-readable violations.
inline std::vector<std::string> violations(const ordikit::OrderedManifest& m, std::span<const ordikit::LabeledItem> labeled) {
  using ordikit::Strategy;
  std::vector<std::string> out;
  const auto items = plain(labeled);
  std::map<std::string, const Item*> by_id;
  for (const auto& it : items) by_id[it.id] = &it;

  std::multiset<std::string> want, got(m.sequence.begin(), m.sequence.end());
  for (const auto& it : items) want.insert(it.id);
  if (want != got) {
    out.push_back("sequence is not a permutation of the ids");
    return out;
  }
  auto diff = [&](std::size_t i) { return by_id.at(m.sequence[i])->difficulty; };
  auto cat = [&](std::size_t i) { return by_id.at(m.sequence[i])->category; };
  auto rank = [&](std::size_t i) { return by_id.at(m.sequence[i])->rank; };
  const std::size_t n = m.sequence.size();

  if (m.strategy == Strategy::curriculum) {
    for (std::size_t i = 1; i < n; ++i) {
      if (diff(i - 1) > diff(i)) out.push_back("difficulty decreases at position " + std::to_string(i));
      if (diff(i - 1) == diff(i) && rank(i - 1) > rank(i)) out.push_back("unstable tie at position " + std::to_string(i));
    }
  }
  if (m.strategy == Strategy::blocked || m.strategy == Strategy::blocked_curriculum) {
    std::vector<std::string> runs;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == 0 || cat(i) != cat(i - 1)) runs.push_back(cat(i));
    }
    if (std::set<std::string>(runs.begin(), runs.end()).size() != runs.size()) out.push_back("a category is split");
    if (runs != m.category_order) out.push_back("blocks do not follow the category order");
  }
  if (m.strategy != Strategy::random_shuffle && m.strategy != Strategy::curriculum) {
    std::map<std::string, std::pair<double, std::size_t>> last;
    for (std::size_t i = 0; i < n; ++i) {
      auto it = last.find(cat(i));
      if (it != last.end()) {
        const bool curriculum = m.strategy == Strategy::blocked_curriculum || m.strategy == Strategy::interleaved_curriculum;
        if (curriculum && it->second.first > diff(i)) out.push_back("category difficulty decreases at " + std::to_string(i));
        if (curriculum && it->second.first == diff(i) && it->second.second > rank(i)) out.push_back("unstable tie at " + std::to_string(i));
        if (!curriculum && it->second.second > rank(i)) out.push_back("input order broken at " + std::to_string(i));
      }
      last[cat(i)] = {diff(i), rank(i)};
    }
  }
  if (m.strategy == Strategy::interleaved || m.strategy == Strategy::interleaved_curriculum) {
    std::map<std::string, std::size_t> last_pos;
    for (std::size_t i = 0; i < n; ++i) last_pos[cat(i)] = i;
    for (std::size_t i = 1; i < n; ++i) {
      if (cat(i) != cat(i - 1)) continue;
      for (const auto& [c, p] : last_pos) {
        if (c != cat(i) && p > i) {
          out.push_back("same category twice at " + std::to_string(i) + " while " + c + " remains");
          break;
        }
      }
    }
  }
  if (m.strategy != Strategy::random_shuffle) {
    if (m.sequence != expected_order(m.strategy, items, m.category_order)) out.push_back("differs from the reference order");
  }
  return out;
}

// Expected accuracy from raw top-k token lists

/// Keeps the k most probable tokens (stable on ties), maps spellings such as
/// " B" or "▁B" to letters, and returns 1 - mean over models of the gold
/// probability after renormalising over the option letters.
inline double brute_force_difficulty(const std::map<std::string, std::map<std::string, double>>& tokens_by_model,
                                     const std::string& option_letters, char gold, std::size_t k) {
  double total = 0.0;
  for (const auto& [model, tokens] : tokens_by_model) {
    std::vector<std::pair<std::string, double>> ranked(tokens.begin(), tokens.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (ranked.size() > k) ranked.resize(k);
    double option_mass = 0.0;
    double gold_mass = 0.0;
    for (const auto& [token, lp] : ranked) {
      std::string t = token;
      if (t.rfind("\xe2\x96\x81", 0) == 0) t = t.substr(3);
      while (!t.empty() && t.front() == ' ') t.erase(t.begin());
      if (t.size() != 1 || option_letters.find(t[0]) == std::string::npos) continue;
      option_mass += std::exp(lp);
      if (t[0] == gold) gold_mass += std::exp(lp);
    }
    total += gold_mass / option_mass;
  }
  return 1.0 - total / static_cast<double>(tokens_by_model.size());
}

// Paired t-test

struct TTest {
  double t;
  double p;
};

inline TTest paired_t(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) - b[i];
  const long double m = s / n;
  long double ss = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const long double d = static_cast<long double>(a[i]) - b[i] - m;
    ss += d * d;
  }
  const double t = static_cast<double>(m / std::sqrt(ss / (n - 1) / n));
  const boost::math::students_t dist(n - 1);
  return {t, 2 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)))};
}

// Clustering agreement

/// Best agreement over the two ways of matching predicted clusters 0/1 to
/// truth 0/1. Noise and any third cluster count as misses.
inline double two_way_agreement(const std::vector<int>& truth, const std::vector<int>& predicted) {
  std::size_t same = 0, swapped = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] == truth[i]) ++same;
    if (predicted[i] == 1 - truth[i]) ++swapped;
  }
  return static_cast<double>(std::max(same, swapped)) / static_cast<double>(truth.size());
}

}  // namespace oracle
