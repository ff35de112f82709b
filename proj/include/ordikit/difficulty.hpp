#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ordikit/corpus.hpp"
#include "ordikit/error.hpp"
#include "ordikit/io.hpp"
#include "ordikit/stats.hpp"

namespace ordikit {

/// Probability per answer letter. Built through `from_probabilities` or
/// `from_logprobs`, both of which zero-fill letters the source did not report
/// and renormalize over the option letters only.
class AnswerDistribution {
 public:
  AnswerDistribution() = default;

  static AnswerDistribution from_probabilities(const std::map<char, double>& raw,
                                               std::span<const char> letters) {
    AnswerDistribution dist;
    double total = 0.0;
    for (char letter : letters) {
      auto it = raw.find(letter);
      const double p = it == raw.end() ? 0.0 : it->second;
      if (!std::isfinite(p) || p < 0.0) {
        fail("bad_distribution", "probability for '" + std::string(1, letter) + "' is negative or non-finite");
      }
      dist.probs_[letter] = p;
      total += p;
    }
    if (!(total > 0.0)) fail("no_option_mass", "distribution assigns no mass to any option letter");
    for (auto& [letter, p] : dist.probs_) p /= total;
    return dist;
  }

  static AnswerDistribution from_logprobs(const std::map<char, double>& logprobs,
                                          std::span<const char> letters) {
    std::map<char, double> probs;
    for (const auto& [letter, lp] : logprobs) probs[letter] = std::exp(lp);
    return from_probabilities(probs, letters);
  }

  const std::map<char, double>& probs() const { return probs_; }

  double at(char letter) const {
    auto it = probs_.find(letter);
    if (it == probs_.end()) {
      fail("gold_absent", "answer '" + std::string(1, letter) + "' is not covered by the distribution");
    }
    return it->second;
  }

  bool operator==(const AnswerDistribution&) const = default;

 private:
  std::map<char, double> probs_;
};

enum class DifficultySource { human, llm };

inline const char* to_string(DifficultySource s) { return s == DifficultySource::human ? "human" : "llm"; }

inline DifficultySource parse_difficulty_source(const std::string& text) {
  if (text == "human") return DifficultySource::human;
  if (text == "llm") return DifficultySource::llm;
  fail("bad_source", "unknown difficulty source '" + text + "' (expected human or llm)");
}

struct DifficultyRecord {
  std::string question_id;
  std::map<std::string, double> per_model_expected_accuracy;
  double difficulty = 0.0;
  DifficultySource source = DifficultySource::human;

  bool operator==(const DifficultyRecord&) const = default;
};

/// Fraction of human test takers who answered incorrectly.
inline DifficultyRecord human_difficulty(const Question& q) {
  if (!q.human_stats) fail("missing_human_stats", "question '" + q.id + "' has no human_stats", {q.id});
  DifficultyRecord r;
  r.question_id = q.id;
  r.source = DifficultySource::human;
  r.difficulty = static_cast<double>(q.human_stats->n_incorrect) /
                 static_cast<double>(q.human_stats->n_respondents);
  return r;
}

/// Probability mass on the gold letter: sum over c of P(c) * [c == gold].
inline double expected_accuracy(const AnswerDistribution& dist, char gold) {
  double total = 0.0;
  bool found = false;
  for (const auto& [letter, p] : dist.probs()) {
    if (letter == gold) {
      total += p;
      found = true;
    }
  }
  if (!found) fail("gold_absent", "gold answer '" + std::string(1, gold) + "' not covered by the distribution");
  return total;
}

/// One minus the unweighted ensemble mean of expected accuracy. Iterates the
/// models in name order, so the result does not depend on ensemble order.
inline DifficultyRecord llm_difficulty(const Question& q,
                                       const std::map<std::string, AnswerDistribution>& dists) {
  if (dists.empty()) fail("empty_ensemble", "no model distributions for question '" + q.id + "'", {q.id});
  DifficultyRecord r;
  r.question_id = q.id;
  r.source = DifficultySource::llm;
  double sum = 0.0;
  for (const auto& [model, dist] : dists) {
    for (const auto& [letter, text] : q.options) {
      if (!dist.probs().contains(letter)) {
        fail("option_mismatch", "distribution from '" + model + "' does not cover option " + std::string(1, letter),
             {q.id});
      }
    }
    const double acc = expected_accuracy(dist, q.gold);
    r.per_model_expected_accuracy[model] = acc;
    sum += acc;
  }
  const double mean = sum / static_cast<double>(dists.size());
  r.difficulty = std::clamp(1.0 - mean, 0.0, 1.0);
  return r;
}

enum class CorrelationMethod { pearson, spearman };

struct AgreementMatrix {
  std::vector<std::string> models;
  std::vector<std::vector<double>> correlation;
  double mean_off_diagonal = 0.0;
  std::size_t n_questions = 0;
};

/// Pairwise correlation of per-question expected accuracy between ensemble
/// members. Every record must carry the same model set.
inline AgreementMatrix agreement_matrix(std::span<const DifficultyRecord> records,
                                        CorrelationMethod method = CorrelationMethod::pearson) {
  if (records.size() < 3) fail("too_few_questions", "agreement needs at least 3 shared questions");
  AgreementMatrix out;
  for (const auto& [model, acc] : records.front().per_model_expected_accuracy) out.models.push_back(model);
  if (out.models.size() < 2) fail("too_few_models", "agreement needs at least 2 models");
  std::vector<std::vector<double>> columns(out.models.size());
  for (const auto& rec : records) {
    if (rec.per_model_expected_accuracy.size() != out.models.size()) {
      fail("model_mismatch", "record '" + rec.question_id + "' has a different model set", {rec.question_id});
    }
    for (std::size_t m = 0; m < out.models.size(); ++m) {
      auto it = rec.per_model_expected_accuracy.find(out.models[m]);
      if (it == rec.per_model_expected_accuracy.end()) {
        fail("model_mismatch", "record '" + rec.question_id + "' lacks model '" + out.models[m] + "'",
             {rec.question_id});
      }
      columns[m].push_back(it->second);
    }
  }
  const std::size_t k = out.models.size();
  out.n_questions = records.size();
  out.correlation.assign(k, std::vector<double>(k, 1.0));
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      double r = 0.0;
      try {
        r = method == CorrelationMethod::pearson ? stats::pearson(columns[i], columns[j])
                                                 : stats::spearman(columns[i], columns[j]);
      } catch (const Error& e) {
        if (e.code() != "constant_vector") throw;
        const std::string& which =
            stats::sample_variance(columns[i]) == 0.0 ? out.models[i] : out.models[j];
        fail("constant_vector", "model '" + which + "' gives every question the same expected accuracy",
             {which});
      }
      out.correlation[i][j] = out.correlation[j][i] = r;
      sum += 2.0 * r;
    }
  }
  out.mean_off_diagonal = sum / static_cast<double>(k * (k - 1));
  return out;
}

inline ordered_json to_json(const DifficultyRecord& r) {
  ordered_json out;
  out["question_id"] = r.question_id;
  out["source"] = to_string(r.source);
  ordered_json per_model = ordered_json::object();
  for (const auto& [model, acc] : r.per_model_expected_accuracy) per_model[model] = acc;
  out["per_model"] = std::move(per_model);
  out["difficulty"] = r.difficulty;
  return out;
}

inline std::string serialize_difficulty(std::span<const DifficultyRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<DifficultyRecord> parse_difficulty(const std::string& text,
                                                      const std::string& source = "<memory>") {
  std::vector<DifficultyRecord> out;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_blank(lines[i])) continue;
    const std::string where = source + ":" + std::to_string(i + 1);
    const json rec = parse_json_line(lines[i], i + 1, source);
    try {
      DifficultyRecord r;
      r.question_id = rec.at("question_id").get<std::string>();
      r.source = parse_difficulty_source(rec.at("source").get<std::string>());
      if (rec.contains("per_model")) {
        for (const auto& [model, acc] : rec["per_model"].items()) r.per_model_expected_accuracy[model] = acc.get<double>();
      }
      r.difficulty = rec.at("difficulty").get<double>();
      if (!(r.difficulty >= 0.0 && r.difficulty <= 1.0)) {
        fail("bad_difficulty", where + ": difficulty must lie in [0, 1]", {r.question_id});
      }
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      fail("parse_error", where + ": " + e.what());
    }
  }
  return out;
}

}  // namespace ordikit
