#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ordikit/error.hpp"
#include "ordikit/hash.hpp"
#include "ordikit/io.hpp"

namespace ordikit {

inline constexpr std::string_view kOptionLetters = "ABCDE";

struct HumanStats {
  int n_respondents = 0;
  int n_incorrect = 0;

  bool operator==(const HumanStats&) const = default;
};

/// One multiple-choice item. Options are keyed by letter and always form a
/// prefix of A..E (A-D for 4-option sets, A-E for 5-option sets).
struct Question {
  std::string id;
  std::string stem;
  std::map<char, std::string> options;
  char gold = 'A';
  std::optional<std::string> category;
  std::optional<HumanStats> human_stats;

  std::vector<char> option_letters() const {
    std::vector<char> letters;
    letters.reserve(options.size());
    for (const auto& [letter, text] : options) letters.push_back(letter);
    return letters;
  }

  bool operator==(const Question&) const = default;
};

/// Throws on any invariant violation. `where` prefixes messages (e.g. "file:3").
inline void validate_question(const Question& q, const std::string& where = {}) {
  const std::string at = where.empty() ? q.id : where + " (" + q.id + ")";
  if (q.id.empty()) fail("missing_field", at + ": empty id");
  if (q.options.size() < 4 || q.options.size() > 5) {
    fail("bad_options", at + ": expected 4 or 5 options, got " + std::to_string(q.options.size()),
         {q.id});
  }
  std::size_t expected = 0;
  for (const auto& [letter, text] : q.options) {
    if (letter != kOptionLetters[expected]) {
      fail("bad_options", at + ": option letters must be A.." +
                              std::string(1, kOptionLetters[q.options.size() - 1]),
           {q.id});
    }
    ++expected;
  }
  if (!q.options.contains(q.gold)) {
    fail("gold_not_an_option", at + ": gold '" + std::string(1, q.gold) + "' is not an option",
         {q.id});
  }
  if (q.category && q.category->empty()) fail("bad_category", at + ": empty category", {q.id});
  if (q.human_stats) {
    const auto& hs = *q.human_stats;
    if (hs.n_respondents < 1 || hs.n_incorrect < 0 || hs.n_incorrect > hs.n_respondents) {
      fail("bad_human_stats",
           at + ": need n_respondents >= 1 and 0 <= n_incorrect <= n_respondents", {q.id});
    }
  }
}

/// An ordered, validated question list. Input order is the tie-break baseline
/// for every ordering strategy, so it is preserved exactly.
class Dataset {
 public:
  Dataset() = default;

  Dataset(std::string name, std::vector<Question> questions, ordered_json provenance = ordered_json::object())
      : name_(std::move(name)), questions_(std::move(questions)), provenance_(std::move(provenance)) {
    for (std::size_t i = 0; i < questions_.size(); ++i) {
      validate_question(questions_[i]);
      if (!index_.emplace(questions_[i].id, i).second) {
        fail("duplicate_id", "duplicate question id '" + questions_[i].id + "'", {questions_[i].id});
      }
    }
  }

  const std::string& name() const { return name_; }
  const std::vector<Question>& questions() const { return questions_; }
  const ordered_json& provenance() const { return provenance_; }
  std::size_t size() const { return questions_.size(); }
  bool empty() const { return questions_.empty(); }

  std::optional<std::size_t> index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const Question& at(const std::string& id) const {
    auto idx = index_of(id);
    if (!idx) fail("unknown_id", "unknown question id '" + id + "'", {id});
    return questions_[*idx];
  }

  /// Distinct category labels, sorted by name. Unlabelled questions are ignored.
  std::vector<std::string> categories() const {
    std::set<std::string> seen;
    for (const auto& q : questions_) {
      if (q.category) seen.insert(*q.category);
    }
    return {seen.begin(), seen.end()};
  }

 private:
  std::string name_;
  std::vector<Question> questions_;
  ordered_json provenance_ = ordered_json::object();
  std::unordered_map<std::string, std::size_t> index_;
};

enum class DatasetFormat { jsonl, csv };

inline DatasetFormat parse_dataset_format(const std::string& text) {
  if (text == "jsonl") return DatasetFormat::jsonl;
  if (text == "csv") return DatasetFormat::csv;
  fail("bad_format", "unknown dataset format '" + text + "' (expected jsonl or csv)");
}

inline DatasetFormat infer_dataset_format(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? DatasetFormat::csv : DatasetFormat::jsonl;
}

namespace detail {

inline Question question_from_json(const json& record, const std::string& where) {
  if (!record.is_object()) fail("parse_error", where + ": record is not a JSON object");
  auto require_string = [&](const char* key) -> std::string {
    auto it = record.find(key);
    if (it == record.end() || it->is_null()) {
      fail(std::string(key) == "gold" ? "missing_gold" : "missing_field",
           where + ": missing field '" + key + "'");
    }
    if (!it->is_string()) fail("parse_error", where + ": field '" + key + "' must be a string");
    return it->get<std::string>();
  };

  Question q;
  q.id = require_string("id");
  q.stem = require_string("stem");

  auto opts = record.find("options");
  if (opts == record.end() || !opts->is_object()) {
    fail("missing_field", where + ": missing object field 'options'", {q.id});
  }
  for (const auto& [key, value] : opts->items()) {
    if (key.size() != 1 || kOptionLetters.find(key[0]) == std::string_view::npos) {
      fail("bad_options", where + ": option key '" + key + "' is not one of A..E", {q.id});
    }
    if (!value.is_string()) fail("parse_error", where + ": option text must be a string", {q.id});
    q.options[key[0]] = value.get<std::string>();
  }

  const std::string gold = require_string("gold");
  if (gold.size() != 1) {
    fail("gold_not_an_option", where + ": gold '" + gold + "' is not an option letter", {q.id});
  }
  q.gold = gold[0];

  if (auto cat = record.find("category"); cat != record.end() && !cat->is_null()) {
    if (!cat->is_string()) fail("parse_error", where + ": category must be a string", {q.id});
    q.category = cat->get<std::string>();
  }
  if (auto hs = record.find("human_stats"); hs != record.end() && !hs->is_null()) {
    if (!hs->is_object() || !hs->contains("n_respondents") || !hs->contains("n_incorrect") ||
        !(*hs)["n_respondents"].is_number_integer() || !(*hs)["n_incorrect"].is_number_integer()) {
      fail("bad_human_stats", where + ": human_stats needs integer n_respondents and n_incorrect",
           {q.id});
    }
    q.human_stats = HumanStats{(*hs)["n_respondents"].get<int>(), (*hs)["n_incorrect"].get<int>()};
  }
  validate_question(q, where);
  return q;
}

/// RFC 4180 records; quoted fields may contain commas, quotes and newlines.
/// Each record carries the 1-based line on which it starts.
struct CsvRecord {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

inline std::vector<CsvRecord> parse_csv(const std::string& text, const std::string& source) {
  std::vector<CsvRecord> records;
  CsvRecord current;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  current.line = 1;

  auto end_field = [&] {
    current.fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    const bool blank = current.fields.size() == 1 && current.fields[0].empty();
    if (!blank) records.push_back(std::move(current));
    current = CsvRecord{};
    current.line = line;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      ++line;
      end_record();
    } else if (c == '\r') {
      // tolerated before '\n'
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) {
    fail("parse_error", source + ":" + std::to_string(current.line) + ": unterminated quoted field");
  }
  if (field_started || !field.empty() || !current.fields.empty()) end_record();
  return records;
}

}  // namespace detail

/// Parses JSONL text. Blank lines are skipped; errors name the line.
inline Dataset parse_dataset_jsonl(const std::string& text, const std::string& name,
                                   const std::string& source = "<memory>") {
  std::vector<Question> questions;
  std::unordered_map<std::string, std::size_t> first_line;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_blank(lines[i])) continue;
    const std::string where = source + ":" + std::to_string(i + 1);
    Question q = detail::question_from_json(parse_json_line(lines[i], i + 1, source), where);
    if (auto [it, inserted] = first_line.emplace(q.id, i + 1); !inserted) {
      fail("duplicate_id",
           where + ": duplicate id '" + q.id + "' (first seen on line " + std::to_string(it->second) + ")",
           {q.id});
    }
    questions.push_back(std::move(q));
  }
  ordered_json provenance = {{"source", source}, {"format", "jsonl"}};
  return Dataset(name, std::move(questions), std::move(provenance));
}

/// Parses CSV text with a header row. Columns are matched by name: id, stem,
/// A..E, gold, and optionally category, n_respondents, n_incorrect. An empty
/// E cell means a 4-option question.
inline Dataset parse_dataset_csv(const std::string& text, const std::string& name,
                                 const std::string& source = "<memory>") {
  const auto records = detail::parse_csv(text, source);
  if (records.empty()) return Dataset(name, {}, {{"source", source}, {"format", "csv"}});

  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < records[0].fields.size(); ++i) column[records[0].fields[i]] = i;
  for (const char* required : {"id", "stem", "gold"}) {
    if (!column.contains(required)) {
      fail("missing_field", source + ":1: header lacks column '" + std::string(required) + "'");
    }
  }

  std::vector<Question> questions;
  std::unordered_map<std::string, std::size_t> first_line;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    const std::string where = source + ":" + std::to_string(rec.line);
    auto cell = [&](const std::string& key) -> std::optional<std::string> {
      auto it = column.find(key);
      if (it == column.end() || it->second >= rec.fields.size()) return std::nullopt;
      const std::string& v = rec.fields[it->second];
      if (v.empty()) return std::nullopt;
      return v;
    };

    json record = json::object();
    if (auto v = cell("id")) record["id"] = *v;
    if (auto v = cell("stem")) record["stem"] = *v;
    if (auto v = cell("gold")) record["gold"] = *v;
    record["options"] = json::object();
    for (char letter : kOptionLetters) {
      if (auto v = cell(std::string(1, letter))) record["options"][std::string(1, letter)] = *v;
    }
    if (auto v = cell("category")) record["category"] = *v;
    auto respondents = cell("n_respondents");
    auto incorrect = cell("n_incorrect");
    if (respondents || incorrect) {
      if (!respondents || !incorrect) {
        fail("bad_human_stats", where + ": n_respondents and n_incorrect must both be present");
      }
      try {
        std::size_t used_a = 0;
        std::size_t used_b = 0;
        const int a = std::stoi(*respondents, &used_a);
        const int b = std::stoi(*incorrect, &used_b);
        if (used_a != respondents->size() || used_b != incorrect->size()) throw std::invalid_argument("trailing");
        record["human_stats"] = {{"n_respondents", a}, {"n_incorrect", b}};
      } catch (const std::logic_error&) {
        fail("bad_human_stats", where + ": human stats must be integers");
      }
    }
    Question q = detail::question_from_json(record, where);
    if (auto [it, inserted] = first_line.emplace(q.id, rec.line); !inserted) {
      fail("duplicate_id", where + ": duplicate id '" + q.id + "'", {q.id});
    }
    questions.push_back(std::move(q));
  }
  return Dataset(name, std::move(questions), {{"source", source}, {"format", "csv"}});
}

inline Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format) {
  const std::string text = read_file(path);
  const std::string name = path.stem().string();
  return format == DatasetFormat::csv ? parse_dataset_csv(text, name, path.string())
                                      : parse_dataset_jsonl(text, name, path.string());
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  return load_dataset(path, infer_dataset_format(path));
}

inline ordered_json to_json(const Question& q) {
  ordered_json out;
  out["id"] = q.id;
  out["stem"] = q.stem;
  ordered_json opts = ordered_json::object();
  for (const auto& [letter, text] : q.options) opts[std::string(1, letter)] = text;
  out["options"] = std::move(opts);
  out["gold"] = std::string(1, q.gold);
  if (q.category) out["category"] = *q.category;
  if (q.human_stats) {
    out["human_stats"] = {{"n_respondents", q.human_stats->n_respondents},
                          {"n_incorrect", q.human_stats->n_incorrect}};
  }
  return out;
}

/// Canonical JSONL: schema key order, compact separators, one line per question.
inline std::string serialize_jsonl(const Dataset& dataset) {
  std::string out;
  for (const auto& q : dataset.questions()) {
    out += to_json(q).dump();
    out += '\n';
  }
  return out;
}

/// SHA-256 of the canonical serialization; manifests are bound to it.
inline std::string dataset_hash(const Dataset& dataset) { return sha256_hex(serialize_jsonl(dataset)); }

/// Precomputed sentence embeddings, rows stored in dataset input order.
class EmbeddingSet {
 public:
  EmbeddingSet() = default;

  EmbeddingSet(std::size_t dim, std::vector<std::string> ids, std::vector<double> values)
      : dim_(dim), ids_(std::move(ids)), values_(std::move(values)) {
    if (dim_ == 0) fail("dimension_mismatch", "embedding dimension must be positive");
    if (values_.size() != ids_.size() * dim_) {
      fail("dimension_mismatch", "embedding storage does not match ids x dim");
    }
    for (double v : values_) {
      if (!std::isfinite(v)) fail("non_finite", "embedding contains a non-finite component");
    }
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<double>& values() const { return values_; }

  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * dim_, dim_};
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<double> values_;
};

/// Parses `{"id":str,"vec":[float,...]}` lines and validates them against
/// `dataset`. Output rows follow dataset order regardless of file order.
inline EmbeddingSet parse_embeddings(const std::string& text, const Dataset& dataset,
                                     const std::string& source = "<memory>") {
  struct Row {
    std::size_t dataset_index;
    std::string id;
    std::vector<double> vec;
  };
  std::vector<Row> rows;
  std::set<std::string> seen;
  std::optional<std::size_t> dim;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_blank(lines[i])) continue;
    const std::string where = source + ":" + std::to_string(i + 1);
    const json rec = parse_json_line(lines[i], i + 1, source);
    if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_string() || !rec.contains("vec") ||
        !rec["vec"].is_array()) {
      fail("parse_error", where + ": expected {\"id\":str,\"vec\":[...]}");
    }
    Row row;
    row.id = rec["id"].get<std::string>();
    auto idx = dataset.index_of(row.id);
    if (!idx) fail("unknown_id", where + ": embedding id '" + row.id + "' not in dataset", {row.id});
    row.dataset_index = *idx;
    if (!seen.insert(row.id).second) fail("duplicate_id", where + ": duplicate embedding id '" + row.id + "'", {row.id});
    for (const auto& v : rec["vec"]) {
      if (!v.is_number()) fail("non_finite", where + ": non-numeric component", {row.id});
      const double x = v.get<double>();
      if (!std::isfinite(x)) fail("non_finite", where + ": non-finite component", {row.id});
      row.vec.push_back(x);
    }
    if (row.vec.empty()) fail("dimension_mismatch", where + ": empty vector", {row.id});
    if (!dim) dim = row.vec.size();
    if (row.vec.size() != *dim) {
      fail("dimension_mismatch",
           where + ": expected " + std::to_string(*dim) + " components, got " + std::to_string(row.vec.size()),
           {row.id});
    }
    rows.push_back(std::move(row));
  }
  if (!dim) fail("empty_embeddings", source + ": no embedding rows");
  std::sort(rows.begin(), rows.end(),
            [](const Row& a, const Row& b) { return a.dataset_index < b.dataset_index; });
  std::vector<std::string> ids;
  std::vector<double> values;
  values.reserve(rows.size() * *dim);
  for (auto& r : rows) {
    ids.push_back(std::move(r.id));
    values.insert(values.end(), r.vec.begin(), r.vec.end());
  }
  return EmbeddingSet(*dim, std::move(ids), std::move(values));
}

inline EmbeddingSet load_embeddings(const std::filesystem::path& path, const Dataset& dataset) {
  return parse_embeddings(read_file(path), dataset, path.string());
}

inline std::string serialize_embeddings(const EmbeddingSet& e) {
  std::string out;
  for (std::size_t i = 0; i < e.size(); ++i) {
    ordered_json rec;
    rec["id"] = e.ids()[i];
    auto r = e.row(i);
    rec["vec"] = std::vector<double>(r.begin(), r.end());
    out += rec.dump();
    out += '\n';
  }
  return out;
}

}  // namespace ordikit
