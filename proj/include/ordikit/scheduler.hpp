#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ordikit/corpus.hpp"
#include "ordikit/difficulty.hpp"
#include "ordikit/error.hpp"
#include "ordikit/hash.hpp"
#include "ordikit/io.hpp"
#include "ordikit/rng.hpp"

namespace ordikit {

enum class Strategy { random_shuffle, curriculum, blocked, blocked_curriculum, interleaved, interleaved_curriculum };

inline constexpr Strategy kAllStrategies[] = {Strategy::random_shuffle,     Strategy::curriculum,
                                              Strategy::blocked,            Strategy::blocked_curriculum,
                                              Strategy::interleaved,        Strategy::interleaved_curriculum};

inline const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::random_shuffle: return "random_shuffle";
    case Strategy::curriculum: return "curriculum";
    case Strategy::blocked: return "blocked";
    case Strategy::blocked_curriculum: return "blocked_curriculum";
    case Strategy::interleaved: return "interleaved";
    case Strategy::interleaved_curriculum: return "interleaved_curriculum";
  }
  return "random_shuffle";
}

inline Strategy parse_strategy(const std::string& text) {
  for (Strategy s : kAllStrategies) {
    if (text == to_string(s)) return s;
  }
  fail("bad_strategy", "unknown strategy '" + text + "'", {text});
}

inline bool uses_seed(Strategy s) { return s == Strategy::random_shuffle; }
inline bool uses_category(Strategy s) {
  return s == Strategy::blocked || s == Strategy::blocked_curriculum || s == Strategy::interleaved ||
         s == Strategy::interleaved_curriculum;
}
inline bool uses_difficulty(Strategy s) {
  return s == Strategy::curriculum || s == Strategy::blocked_curriculum || s == Strategy::interleaved_curriculum;
}
inline bool is_blocked(Strategy s) { return s == Strategy::blocked || s == Strategy::blocked_curriculum; }

struct LabeledItem {
  std::string question_id;
  std::optional<std::string> category;
  std::optional<double> difficulty;
  std::size_t input_rank = 0;
};

/// Joins a dataset with its labels. `categories`, when given, replaces the
/// dataset's own category labels (e.g. clustered categories).
inline std::vector<LabeledItem> make_labeled_items(
    const Dataset& dataset, std::span<const DifficultyRecord> difficulty = {},
    const std::map<std::string, std::string>* categories = nullptr) {
  std::map<std::string, double> by_id;
  for (const auto& r : difficulty) {
    if (!dataset.index_of(r.question_id)) {
      fail("unknown_id", "difficulty record for unknown question '" + r.question_id + "'", {r.question_id});
    }
    by_id[r.question_id] = r.difficulty;
  }
  if (categories) {
    for (const auto& [id, cat] : *categories) {
      if (!dataset.index_of(id)) fail("unknown_id", "category for unknown question '" + id + "'", {id});
    }
  }
  std::vector<LabeledItem> items;
  items.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Question& q = dataset.questions()[i];
    LabeledItem item;
    item.question_id = q.id;
    item.input_rank = i;
    if (categories) {
      if (auto it = categories->find(q.id); it != categories->end()) item.category = it->second;
    } else {
      item.category = q.category;
    }
    if (auto it = by_id.find(q.id); it != by_id.end()) item.difficulty = it->second;
    items.push_back(std::move(item));
  }
  return items;
}

/// Hash over (id, category, difficulty) in input order; binds a manifest to
/// the exact labels it was generated from.
inline std::string labels_hash(std::span<const LabeledItem> items) {
  std::vector<const LabeledItem*> sorted;
  for (const auto& it : items) sorted.push_back(&it);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->input_rank < b->input_rank; });
  std::string text;
  for (const auto* it : sorted) {
    json row = json::array();
    row.push_back(it->question_id);
    row.push_back(it->category ? json(*it->category) : json(nullptr));
    row.push_back(it->difficulty ? json(*it->difficulty) : json(nullptr));
    text += row.dump();
    text += '\n';
  }
  return sha256_hex(text);
}

struct OrderedManifest {
  Strategy strategy = Strategy::random_shuffle;
  std::optional<std::uint64_t> seed;  // set only for strategies that consume it
  std::vector<std::string> category_order;
  int repeat_within_category = 1;
  int chunk_size = 1;
  std::vector<std::string> sequence;
  std::vector<std::string> sequence_categories;  // parallel to sequence; empty when unlabelled
  std::string dataset_sha256;
  std::string labels_sha256;
  std::size_t n_items = 0;

  bool operator==(const OrderedManifest&) const = default;
};

namespace detail {

inline void require_nonempty(std::span<const LabeledItem> items) {
  if (items.empty()) fail("empty_dataset", "cannot order an empty dataset");
}

inline void require_categories(std::span<const LabeledItem> items) {
  std::vector<std::string> missing;
  for (const auto& it : items) {
    if (!it.category || it.category->empty()) missing.push_back(it.question_id);
  }
  if (!missing.empty()) {
    fail("missing_category", std::to_string(missing.size()) + " question(s) have no category", std::move(missing));
  }
}

inline void require_difficulty(std::span<const LabeledItem> items) {
  std::vector<std::string> missing;
  for (const auto& it : items) {
    if (!it.difficulty) missing.push_back(it.question_id);
  }
  if (!missing.empty()) {
    fail("missing_difficulty", std::to_string(missing.size()) + " question(s) have no difficulty", std::move(missing));
  }
}

inline void require_category_order(std::span<const LabeledItem> items, std::span<const std::string> order) {
  std::set<std::string> present;
  for (const auto& it : items) present.insert(*it.category);
  std::set<std::string> listed;
  for (const auto& c : order) {
    if (!listed.insert(c).second) fail("category_order_mismatch", "category '" + c + "' listed twice", {c});
  }
  if (listed != present) {
    std::vector<std::string> diff;
    std::set_symmetric_difference(present.begin(), present.end(), listed.begin(), listed.end(),
                                  std::back_inserter(diff));
    fail("category_order_mismatch", "category_order must list every category exactly once", std::move(diff));
  }
}

inline std::vector<const LabeledItem*> by_input_rank(std::span<const LabeledItem> items) {
  std::vector<const LabeledItem*> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back(&it);
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->input_rank < b->input_rank; });
  return out;
}

/// Ascending difficulty, ties by input rank.
inline void sort_by_difficulty(std::vector<const LabeledItem*>& v) {
  std::sort(v.begin(), v.end(), [](auto* a, auto* b) {
    if (*a->difficulty != *b->difficulty) return *a->difficulty < *b->difficulty;
    return a->input_rank < b->input_rank;
  });
}

inline std::vector<std::vector<const LabeledItem*>> make_blocks(std::span<const LabeledItem> items,
                                                               std::span<const std::string> order,
                                                               bool by_difficulty) {
  std::map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < order.size(); ++i) slot[order[i]] = i;
  std::vector<std::vector<const LabeledItem*>> blocks(order.size());
  for (const auto* it : by_input_rank(items)) blocks[slot.at(*it->category)].push_back(it);
  if (by_difficulty) {
    for (auto& b : blocks) sort_by_difficulty(b);
  }
  return blocks;
}

/// Visits blocks in order, taking up to `chunk` items from each; exhausted
/// blocks are skipped until every block is empty.
inline std::vector<const LabeledItem*> round_robin(const std::vector<std::vector<const LabeledItem*>>& blocks,
                                                   int chunk) {
  std::vector<std::size_t> cursor(blocks.size(), 0);
  std::vector<const LabeledItem*> out;
  bool progressed = true;
  while (progressed) {
    progressed = false;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      for (int taken = 0; taken < chunk && cursor[b] < blocks[b].size(); ++taken) {
        out.push_back(blocks[b][cursor[b]++]);
        progressed = true;
      }
    }
  }
  return out;
}

inline OrderedManifest finish(Strategy strategy, std::span<const LabeledItem> items,
                              const std::vector<const LabeledItem*>& order) {
  OrderedManifest m;
  m.strategy = strategy;
  m.n_items = items.size();
  m.labels_sha256 = labels_hash(items);
  m.sequence.reserve(order.size());
  bool any_category = false;
  for (const auto* it : order) any_category = any_category || it->category.has_value();
  for (const auto* it : order) {
    m.sequence.push_back(it->question_id);
    if (any_category) m.sequence_categories.push_back(it->category.value_or(std::string{}));
  }
  return m;
}

}  // namespace detail

/// Categories sorted by name.
inline std::vector<std::string> default_category_order(std::span<const LabeledItem> items) {
  std::set<std::string> names;
  for (const auto& it : items) {
    if (it.category) names.insert(*it.category);
  }
  return {names.begin(), names.end()};
}

/// Uniform permutation: Fisher-Yates over input order driven by
/// mt19937_64(seed), see Rng.
inline OrderedManifest order_random_shuffle(std::span<const LabeledItem> items, std::uint64_t seed) {
  detail::require_nonempty(items);
  auto order = detail::by_input_rank(items);
  Rng rng(seed);
  rng.shuffle(order);
  auto m = detail::finish(Strategy::random_shuffle, items, order);
  m.seed = seed;
  return m;
}

inline OrderedManifest order_curriculum(std::span<const LabeledItem> items) {
  detail::require_nonempty(items);
  detail::require_difficulty(items);
  auto order = detail::by_input_rank(items);
  detail::sort_by_difficulty(order);
  return detail::finish(Strategy::curriculum, items, order);
}

inline OrderedManifest order_blocked(std::span<const LabeledItem> items, std::span<const std::string> category_order) {
  detail::require_nonempty(items);
  detail::require_categories(items);
  detail::require_category_order(items, category_order);
  std::vector<const LabeledItem*> order;
  for (auto& block : detail::make_blocks(items, category_order, false)) order.insert(order.end(), block.begin(), block.end());
  auto m = detail::finish(Strategy::blocked, items, order);
  m.category_order.assign(category_order.begin(), category_order.end());
  return m;
}

inline OrderedManifest order_interleaved(std::span<const LabeledItem> items,
                                         std::span<const std::string> category_order, int chunk_size = 1) {
  detail::require_nonempty(items);
  detail::require_categories(items);
  detail::require_category_order(items, category_order);
  if (chunk_size < 1) fail("bad_chunk_size", "chunk size must be >= 1");
  auto order = detail::round_robin(detail::make_blocks(items, category_order, false), chunk_size);
  auto m = detail::finish(Strategy::interleaved, items, order);
  m.category_order.assign(category_order.begin(), category_order.end());
  m.chunk_size = chunk_size;
  return m;
}

inline OrderedManifest order_blocked_curriculum(std::span<const LabeledItem> items,
                                                std::span<const std::string> category_order) {
  detail::require_nonempty(items);
  detail::require_categories(items);
  detail::require_difficulty(items);
  detail::require_category_order(items, category_order);
  std::vector<const LabeledItem*> order;
  for (auto& block : detail::make_blocks(items, category_order, true)) order.insert(order.end(), block.begin(), block.end());
  auto m = detail::finish(Strategy::blocked_curriculum, items, order);
  m.category_order.assign(category_order.begin(), category_order.end());
  return m;
}

inline OrderedManifest order_interleaved_curriculum(std::span<const LabeledItem> items,
                                                    std::span<const std::string> category_order,
                                                    int chunk_size = 1) {
  detail::require_nonempty(items);
  detail::require_categories(items);
  detail::require_difficulty(items);
  detail::require_category_order(items, category_order);
  if (chunk_size < 1) fail("bad_chunk_size", "chunk size must be >= 1");
  auto order = detail::round_robin(detail::make_blocks(items, category_order, true), chunk_size);
  auto m = detail::finish(Strategy::interleaved_curriculum, items, order);
  m.category_order.assign(category_order.begin(), category_order.end());
  m.chunk_size = chunk_size;
  return m;
}

/// Repeats each category block k times in place (blocked strategies only).
inline OrderedManifest apply_repetition(const OrderedManifest& manifest, int k) {
  if (k < 1) fail("bad_repeat", "repetition factor must be >= 1");
  if (k == 1) return manifest;
  if (!is_blocked(manifest.strategy)) {
    fail("unsupported_strategy",
         std::string("within-category repetition is defined only for blocked layouts, not ") +
             to_string(manifest.strategy));
  }
  if (manifest.repeat_within_category != 1) fail("bad_repeat", "manifest is already repeated");
  OrderedManifest out = manifest;
  out.sequence.clear();
  out.sequence_categories.clear();
  out.repeat_within_category = k;
  const auto& seq = manifest.sequence;
  const auto& cats = manifest.sequence_categories;
  for (std::size_t start = 0; start < seq.size();) {
    std::size_t end = start;
    while (end < seq.size() && cats[end] == cats[start]) ++end;
    for (int r = 0; r < k; ++r) {
      out.sequence.insert(out.sequence.end(), seq.begin() + static_cast<std::ptrdiff_t>(start),
                          seq.begin() + static_cast<std::ptrdiff_t>(end));
      out.sequence_categories.insert(out.sequence_categories.end(), cats.begin() + static_cast<std::ptrdiff_t>(start),
                                     cats.begin() + static_cast<std::ptrdiff_t>(end));
    }
    start = end;
  }
  return out;
}

struct OrderRequest {
  Strategy strategy = Strategy::random_shuffle;
  std::uint64_t seed = 0;
  std::optional<std::vector<std::string>> category_order;  // default: sorted by name
  int chunk_size = 1;
  int repeat_within_category = 1;
};

/// Dispatches to the strategy and stamps the dataset hash.
inline OrderedManifest build_manifest(const OrderRequest& req, std::span<const LabeledItem> items,
                                      const std::string& dataset_sha256) {
  OrderedManifest m;
  std::vector<std::string> cats;
  if (uses_category(req.strategy)) {
    detail::require_categories(items);
    cats = req.category_order ? *req.category_order : default_category_order(items);
  }
  switch (req.strategy) {
    case Strategy::random_shuffle: m = order_random_shuffle(items, req.seed); break;
    case Strategy::curriculum: m = order_curriculum(items); break;
    case Strategy::blocked: m = order_blocked(items, cats); break;
    case Strategy::blocked_curriculum: m = order_blocked_curriculum(items, cats); break;
    case Strategy::interleaved: m = order_interleaved(items, cats, req.chunk_size); break;
    case Strategy::interleaved_curriculum: m = order_interleaved_curriculum(items, cats, req.chunk_size); break;
  }
  m = apply_repetition(m, req.repeat_within_category);
  m.dataset_sha256 = dataset_sha256;
  return m;
}

inline constexpr const char* kManifestFormat = "ordikit.manifest/1";

/// Header line (all regeneration parameters) followed by one
/// `{"position":i,"id":...,"category":...}` line per sequence entry.
inline std::string serialize_manifest(const OrderedManifest& m) {
  ordered_json header;
  header["format"] = kManifestFormat;
  header["strategy"] = to_string(m.strategy);
  header["seed"] = m.seed ? json(*m.seed) : json(nullptr);
  header["category_order"] = m.category_order;
  header["repeat_within_category"] = m.repeat_within_category;
  header["chunk_size"] = m.chunk_size;
  header["dataset_sha256"] = m.dataset_sha256;
  header["labels_sha256"] = m.labels_sha256;
  header["n_items"] = m.n_items;
  header["length"] = m.sequence.size();
  std::string out = header.dump() + "\n";
  for (std::size_t i = 0; i < m.sequence.size(); ++i) {
    ordered_json line;
    line["position"] = i;
    line["id"] = m.sequence[i];
    if (!m.sequence_categories.empty()) line["category"] = m.sequence_categories[i];
    out += line.dump();
    out += '\n';
  }
  return out;
}

inline OrderedManifest parse_manifest(const std::string& text, const std::string& source = "<memory>") {
  const auto lines = split_lines(text);
  if (lines.empty()) fail("parse_error", source + ": empty manifest");
  OrderedManifest m;
  const json header = parse_json_line(lines[0], 1, source);
  try {
    if (header.at("format").get<std::string>() != kManifestFormat) {
      fail("parse_error", source + ":1: unsupported manifest format");
    }
    m.strategy = parse_strategy(header.at("strategy").get<std::string>());
    if (!header.at("seed").is_null()) m.seed = header["seed"].get<std::uint64_t>();
    m.category_order = header.at("category_order").get<std::vector<std::string>>();
    m.repeat_within_category = header.at("repeat_within_category").get<int>();
    m.chunk_size = header.at("chunk_size").get<int>();
    m.dataset_sha256 = header.at("dataset_sha256").get<std::string>();
    m.labels_sha256 = header.at("labels_sha256").get<std::string>();
    m.n_items = header.at("n_items").get<std::size_t>();
  } catch (const json::exception& e) {
    fail("parse_error", source + ":1: bad manifest header: " + e.what());
  }
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (is_blank(lines[i])) continue;
    const json line = parse_json_line(lines[i], i + 1, source);
    try {
      m.sequence.push_back(line.at("id").get<std::string>());
      if (line.contains("category")) m.sequence_categories.push_back(line["category"].get<std::string>());
    } catch (const json::exception& e) {
      fail("parse_error", source + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  if (!m.sequence_categories.empty() && m.sequence_categories.size() != m.sequence.size()) {
    fail("parse_error", source + ": category present on some sequence lines only");
  }
  return m;
}

struct VerifyResult {
  bool ok = false;
  std::size_t line = 0;  // 1-based manifest line of the first difference; 0 when ok
  std::string message;
};

/// Regenerates the manifest from its header and the given labels and diffs
/// the two serializations line by line.
inline VerifyResult verify_manifest(const std::string& text, std::span<const LabeledItem> items,
                                    const std::string& dataset_sha256) {
  const OrderedManifest claimed = parse_manifest(text);
  if (claimed.dataset_sha256 != dataset_sha256) {
    return {false, 1, "dataset hash mismatch: manifest was built from a different dataset"};
  }
  if (claimed.labels_sha256 != labels_hash(items)) {
    return {false, 1, "labels hash mismatch: difficulty or category labels differ from those used"};
  }
  OrderRequest req;
  req.strategy = claimed.strategy;
  req.seed = claimed.seed.value_or(0);
  if (uses_category(claimed.strategy)) req.category_order = claimed.category_order;
  req.chunk_size = claimed.chunk_size;
  req.repeat_within_category = claimed.repeat_within_category;
  const std::string expected = serialize_manifest(build_manifest(req, items, dataset_sha256));

  const auto got_lines = split_lines(text);
  const auto want_lines = split_lines(expected);
  const std::size_t n = std::max(got_lines.size(), want_lines.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= got_lines.size()) return {false, i + 1, "manifest truncated: line " + std::to_string(i + 1) + " missing"};
    if (i >= want_lines.size()) return {false, i + 1, "unexpected extra line " + std::to_string(i + 1)};
    if (got_lines[i] != want_lines[i]) {
      return {false, i + 1,
              "line " + std::to_string(i + 1) + " differs: expected " + want_lines[i] + ", found " + got_lines[i]};
    }
  }
  return {true, 0, "ok"};
}

}  // namespace ordikit
