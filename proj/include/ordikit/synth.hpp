#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ordikit/analytics.hpp"
#include "ordikit/corpus.hpp"
#include "ordikit/mock_server.hpp"
#include "ordikit/prompting.hpp"
#include "ordikit/rng.hpp"
#include "ordikit/scheduler.hpp"

namespace ordikit::synth {

struct DatasetSpec {
  std::size_t n_questions = 100;
  std::vector<std::string> categories = {"cardiology", "endocrinology", "neurology", "pharmacology"};
  std::size_t n_options = 5;
  std::uint64_t seed = 0;
};

inline std::string pad_id(const std::string& prefix, std::size_t i, int width = 3) {
  std::string digits = std::to_string(i);
  if (digits.size() < static_cast<std::size_t>(width)) digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  return prefix + digits;
}

/// Questions cycle through the categories; gold letters and human statistics
/// are drawn from the seed.
inline Dataset dataset(const DatasetSpec& spec) {
  Rng rng(spec.seed);
  std::vector<Question> qs;
  for (std::size_t i = 0; i < spec.n_questions; ++i) {
    Question q;
    q.id = pad_id("syn", i + 1);
    const std::string& cat = spec.categories[i % spec.categories.size()];
    q.category = cat;
    q.stem = "Synthetic " + cat + " item " + std::to_string(i + 1) + ": which statement is correct?";
    for (std::size_t o = 0; o < spec.n_options; ++o) {
      const char letter = kOptionLetters[o];
      q.options[letter] = "Statement " + std::string(1, letter) + " for item " + std::to_string(i + 1);
    }
    q.gold = kOptionLetters[rng.below(spec.n_options)];
    HumanStats hs;
    hs.n_respondents = 50 + static_cast<int>(rng.below(151));
    hs.n_incorrect = static_cast<int>(rng.below(static_cast<std::uint64_t>(hs.n_respondents) + 1));
    q.human_stats = hs;
    qs.push_back(std::move(q));
  }
  return Dataset("synthetic", std::move(qs), "generated");
}

/// One Gaussian blob per category in `dim` dimensions.
inline EmbeddingSet embeddings(const Dataset& ds, std::size_t dim = 16, double spread = 0.35, std::uint64_t seed = 0) {
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const auto cats = ds.categories();
  std::map<std::string, std::vector<double>> centre;
  for (const auto& c : cats) {
    std::vector<double> v(dim);
    for (double& x : v) x = 4.0 * rng.normal();
    centre[c] = v;
  }
  std::vector<std::string> ids;
  std::vector<double> values;
  for (const auto& q : ds.questions()) {
    ids.push_back(q.id);
    const auto& c = centre[q.category.value_or(cats.front())];
    for (std::size_t d = 0; d < dim; ++d) values.push_back(c[d] + spread * rng.normal());
  }
  return {dim, std::move(ids), std::move(values)};
}

/// Top-k tokens per (model, question): each model has a skill, each question
/// a latent hardness, and gold mass follows a logistic in their difference.
/// Tokens alternate between " X" and SentencePiece "▁X" spellings.
inline std::map<std::string, std::map<std::string, std::map<std::string, double>>> ensemble_logprobs(
    const Dataset& ds, const std::vector<std::string>& models, std::uint64_t seed = 0) {
  Rng rng(seed ^ 0x51ed270b27a1c3d5ULL);
  std::vector<double> hardness;
  for (std::size_t i = 0; i < ds.size(); ++i) hardness.push_back(1.5 * rng.normal());
  std::map<std::string, std::map<std::string, std::map<std::string, double>>> out;
  for (std::size_t m = 0; m < models.size(); ++m) {
    const double skill = 0.5 + 0.25 * static_cast<double>(m);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const Question& q = ds.questions()[i];
      const double z = skill - hardness[i] + 0.4 * rng.normal();
      const double p_gold = 0.05 + 0.9 / (1.0 + std::exp(-z));
      std::vector<double> rest;
      double rest_sum = 0.0;
      for (std::size_t o = 0; o + 1 < q.options.size(); ++o) {
        rest.push_back(0.2 + rng.uniform());
        rest_sum += rest.back();
      }
      std::map<std::string, double> tokens;
      std::size_t r = 0;
      for (const auto& [letter, text] : q.options) {
        const double p = letter == q.gold ? p_gold : (1.0 - p_gold) * 0.97 * rest[r++] / rest_sum;
        const std::string token = (i + m) % 2 == 0 ? " " + std::string(1, letter) : "\xe2\x96\x81" + std::string(1, letter);
        tokens[token] = std::log(p);
      }
      tokens["\n"] = std::log((1.0 - p_gold) * 0.03);
      out[models[m]][q.id] = std::move(tokens);
    }
  }
  return out;
}

/// Mock fixture answering the rendered prompts of `ds` for every model.
inline MockFixture mock_fixture(const Dataset& ds, const std::vector<std::string>& models, std::uint64_t seed = 0,
                                const PromptTemplate& tmpl = {}) {
  MockFixture fx;
  const auto lps = ensemble_logprobs(ds, models, seed);
  for (const auto& q : ds.questions()) {
    const std::string prompt = render_prompt(q, tmpl);
    for (const auto& model : models) fx.add(model, prompt, lps.at(model).at(q.id), q.id);
  }
  return fx;
}

/// Plausible fine-tuning outcomes over a strategy x model x dataset grid.
/// Accuracies are whole counts out of n_items.
inline std::vector<RunResult> run_results(const std::vector<std::string>& models,
                                          const std::vector<std::string>& datasets,
                                          const std::vector<std::string>& scenarios, int runs = 5,
                                          std::size_t n_items = 200, std::uint64_t seed = 0) {
  Rng rng(seed ^ 0x2545f4914f6cdd1dULL);
  std::vector<RunResult> out;
  for (const auto& scenario : scenarios) {
    for (Strategy s : kAllStrategies) {
      const double effect = 0.004 * static_cast<double>(static_cast<int>(s));
      for (std::size_t m = 0; m < models.size(); ++m) {
        for (std::size_t d = 0; d < datasets.size(); ++d) {
          const double base = 0.30 + 0.06 * static_cast<double>(m) - 0.03 * static_cast<double>(d);
          for (int r = 0; r < runs; ++r) {
            const double p = std::clamp(base + effect + 0.01 * rng.normal(), 0.0, 1.0);
            const double correct = std::round(p * static_cast<double>(n_items));
            out.push_back({to_string(s), models[m], datasets[d], scenario, r,
                           correct / static_cast<double>(n_items), n_items});
          }
        }
      }
    }
  }
  return out;
}

/// Two isotropic Gaussian blobs; `truth` receives 0/1 per point.
inline EmbeddingSet two_blobs(std::size_t per_blob, std::size_t dim, double separation, std::uint64_t seed,
                              std::vector<int>* truth = nullptr) {
  Rng rng(seed);
  std::vector<std::string> ids;
  std::vector<double> values;
  for (std::size_t i = 0; i < 2 * per_blob; ++i) {
    const int blob = i < per_blob ? 0 : 1;
    ids.push_back(pad_id("p", i, 4));
    for (std::size_t d = 0; d < dim; ++d) {
      const double centre = d == 0 ? (blob == 0 ? -separation / 2 : separation / 2) : 0.0;
      values.push_back(centre + rng.normal());
    }
    if (truth) truth->push_back(blob);
  }
  return {dim, std::move(ids), std::move(values)};
}

/// Items with `n_categories` uneven categories and difficulties on a 1/20
/// grid, so ties are common.
inline std::vector<LabeledItem> labeled_items(std::size_t n, std::size_t n_categories, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<LabeledItem> items;
  for (std::size_t i = 0; i < n; ++i) {
    LabeledItem it;
    it.question_id = pad_id("q", i + 1, 4);
    // Skewed draw keeps category sizes unequal.
    const std::size_t a = static_cast<std::size_t>(rng.below(n_categories));
    const std::size_t b = static_cast<std::size_t>(rng.below(n_categories));
    it.category = pad_id("cat", std::min(a, b), 2);
    it.difficulty = static_cast<double>(rng.below(21)) / 20.0;
    it.input_rank = i;
    items.push_back(std::move(it));
  }
  return items;
}

}  // namespace ordikit::synth
