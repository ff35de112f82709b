#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "ordikit/corpus.hpp"
#include "ordikit/error.hpp"
#include "ordikit/hdbscan.hpp"
#include "ordikit/io.hpp"
#include "ordikit/reduce.hpp"
#include "ordikit/rng.hpp"

namespace ordikit {

enum class Reducer { umap, pca, none };

inline const char* to_string(Reducer r) {
  switch (r) {
    case Reducer::umap: return "umap";
    case Reducer::pca: return "pca";
    case Reducer::none: return "none";
  }
  return "none";
}

inline Reducer parse_reducer(const std::string& text) {
  if (text == "umap") return Reducer::umap;
  if (text == "pca") return Reducer::pca;
  if (text == "none") return Reducer::none;
  fail("bad_reducer", "unknown reducer '" + text + "' (expected umap, pca or none)");
}

struct IntRange {
  int lo = 0;
  int hi = 0;
  std::size_t width() const { return static_cast<std::size_t>(hi - lo + 1); }
  bool operator==(const IntRange&) const = default;
};

struct SearchRanges {
  std::optional<IntRange> n_neighbors;
  std::optional<IntRange> n_components;
  std::optional<IntRange> min_cluster_size;
  bool empty() const { return !n_neighbors && !n_components && !min_cluster_size; }
};

struct ClusterConfig {
  Reducer reducer = Reducer::umap;
  int n_neighbors = 15;
  int n_components = 5;
  int min_cluster_size = 25;
  std::optional<int> min_samples;
  bool allow_single_cluster = false;
  std::uint64_t seed = 0;
  SearchRanges search_ranges;
  int search_budget = 30;
  double low_probability = 0.05;

  void validate() const {
    if (n_components < 2 && reducer != Reducer::none) fail("bad_config", "n_components must be >= 2");
    if (min_cluster_size < 2) fail("bad_config", "min_cluster_size must be >= 2");
    if (n_neighbors < 2) fail("bad_config", "n_neighbors must be >= 2");
    if (min_samples && *min_samples < 1) fail("bad_config", "min_samples must be >= 1");
    if (search_budget < 1) fail("bad_config", "search_budget must be >= 1");
    for (const auto& [name, r] : {std::pair{"n_neighbors", search_ranges.n_neighbors},
                                  std::pair{"n_components", search_ranges.n_components},
                                  std::pair{"min_cluster_size", search_ranges.min_cluster_size}}) {
      if (r && r->lo > r->hi) fail("bad_config", std::string("empty search range for ") + name, {name});
    }
    if (search_ranges.n_components && search_ranges.n_components->lo < 2) {
      fail("bad_config", "n_components range must start at >= 2");
    }
    if (search_ranges.min_cluster_size && search_ranges.min_cluster_size->lo < 2) {
      fail("bad_config", "min_cluster_size range must start at >= 2");
    }
    if (search_ranges.n_neighbors && search_ranges.n_neighbors->lo < 2) {
      fail("bad_config", "n_neighbors range must start at >= 2");
    }
  }

  static ClusterConfig from_json(const json& j) {
    ClusterConfig c;
    try {
      if (j.contains("reducer")) c.reducer = parse_reducer(j["reducer"].get<std::string>());
      c.n_neighbors = j.value("n_neighbors", c.n_neighbors);
      c.n_components = j.value("n_components", c.n_components);
      c.min_cluster_size = j.value("min_cluster_size", c.min_cluster_size);
      if (j.contains("min_samples") && !j["min_samples"].is_null()) c.min_samples = j["min_samples"].get<int>();
      c.allow_single_cluster = j.value("allow_single_cluster", false);
      c.seed = j.value("seed", std::uint64_t{0});
      c.search_budget = j.value("search_budget", c.search_budget);
      c.low_probability = j.value("low_probability", c.low_probability);
      if (j.contains("search_ranges")) {
        const json& r = j["search_ranges"];
        auto range = [&](const char* key) -> std::optional<IntRange> {
          if (!r.contains(key)) return std::nullopt;
          const auto v = r[key].get<std::vector<int>>();
          if (v.size() != 2) fail("bad_config", std::string("range for ") + key + " must be [lo, hi]", {key});
          return IntRange{v[0], v[1]};
        };
        c.search_ranges.n_neighbors = range("n_neighbors");
        c.search_ranges.n_components = range("n_components");
        c.search_ranges.min_cluster_size = range("min_cluster_size");
      }
    } catch (const json::exception& e) {
      fail("bad_config", std::string("cluster config: ") + e.what());
    }
    c.validate();
    return c;
  }
};

inline ordered_json to_json(const ClusterConfig& c) {
  ordered_json j;
  j["reducer"] = to_string(c.reducer);
  j["n_neighbors"] = c.n_neighbors;
  j["n_components"] = c.n_components;
  j["min_cluster_size"] = c.min_cluster_size;
  j["min_samples"] = c.min_samples ? json(*c.min_samples) : json(nullptr);
  j["allow_single_cluster"] = c.allow_single_cluster;
  j["seed"] = c.seed;
  return j;
}

inline EmbeddingSet reduce(const EmbeddingSet& e, const ClusterConfig& cfg) {
  if (cfg.reducer == Reducer::none) return e;
  const auto nc = static_cast<std::size_t>(cfg.n_components);
  if (e.dim() < nc) {
    fail("bad_dimension", "embedding dimension " + std::to_string(e.dim()) + " is below n_components " +
                              std::to_string(nc));
  }
  if (e.size() < static_cast<std::size_t>(cfg.n_neighbors) + 1) {
    fail("too_few_points", std::to_string(e.size()) + " points; reduction needs at least n_neighbors+1 = " +
                               std::to_string(cfg.n_neighbors + 1));
  }
  if (cfg.reducer == Reducer::pca) return pca_reduce(e, nc);
  UmapParams p;
  p.n_neighbors = static_cast<std::size_t>(cfg.n_neighbors);
  p.n_components = nc;
  p.seed = cfg.seed;
  return umap_reduce(e, p);
}

struct ClusterAssignment {
  std::string question_id;
  int label = -1;
  double probability = 0.0;
  std::string resolved_category;  // empty for unresolved noise

  bool operator==(const ClusterAssignment&) const = default;
};

inline std::string category_name(int label) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "cluster_%02d", label);
  return buf;
}

/// HDBSCAN on `e` as given (no reduction).
inline std::vector<ClusterAssignment> cluster(const EmbeddingSet& e, const ClusterConfig& cfg) {
  HdbscanParams p;
  p.min_cluster_size = static_cast<std::size_t>(cfg.min_cluster_size);
  if (cfg.min_samples) p.min_samples = static_cast<std::size_t>(*cfg.min_samples);
  p.allow_single_cluster = cfg.allow_single_cluster;
  const HdbscanResult r = hdbscan(e, p);
  std::vector<ClusterAssignment> out(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    out[i].question_id = e.ids()[i];
    out[i].label = r.labels[i];
    out[i].probability = r.probabilities[i];
    if (r.labels[i] >= 0) out[i].resolved_category = category_name(r.labels[i]);
  }
  return out;
}

struct ClusteringOutcome {
  EmbeddingSet reduced;
  std::vector<ClusterAssignment> assignments;
};

inline ClusteringOutcome reduce_and_cluster(const EmbeddingSet& e, const ClusterConfig& cfg) {
  cfg.validate();
  ClusteringOutcome out{reduce(e, cfg), {}};
  out.assignments = cluster(out.reduced, cfg);
  return out;
}

inline std::size_t low_probability_count(std::span<const ClusterAssignment> a, double threshold = 0.05) {
  return static_cast<std::size_t>(
      std::count_if(a.begin(), a.end(), [&](const ClusterAssignment& x) { return x.probability < threshold; }));
}

inline int cluster_count(std::span<const ClusterAssignment> a) {
  std::set<int> labels;
  for (const auto& x : a) {
    if (x.label >= 0) labels.insert(x.label);
  }
  return static_cast<int>(labels.size());
}

enum class NoisePolicy { own_category, nearest_centroid };

inline NoisePolicy parse_noise_policy(const std::string& text) {
  if (text == "own_category") return NoisePolicy::own_category;
  if (text == "nearest_centroid") return NoisePolicy::nearest_centroid;
  fail("bad_noise_policy", "unknown noise policy '" + text + "'");
}

inline constexpr const char* kNoiseCategory = "unclustered";

/// Gives every noise point a category: either the shared "unclustered"
/// category or that of the closest cluster centroid in `reduced` space
/// (ties to the lower label).
inline std::vector<ClusterAssignment> resolve_noise(std::vector<ClusterAssignment> a, NoisePolicy policy,
                                                    const EmbeddingSet* reduced = nullptr) {
  const bool any_noise = std::any_of(a.begin(), a.end(), [](const auto& x) { return x.label < 0; });
  if (!any_noise) return a;
  if (policy == NoisePolicy::own_category) {
    for (auto& x : a) {
      if (x.label < 0) x.resolved_category = kNoiseCategory;
    }
    return a;
  }
  if (reduced == nullptr || reduced->size() != a.size()) {
    fail("bad_input", "nearest_centroid needs the reduced embedding the assignments came from");
  }
  std::map<int, std::pair<std::vector<double>, std::size_t>> sums;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].label < 0) continue;
    auto& [sum, count] = sums[a[i].label];
    sum.resize(reduced->dim(), 0.0);
    const auto row = reduced->row(i);
    for (std::size_t c = 0; c < row.size(); ++c) sum[c] += row[c];
    ++count;
  }
  if (sums.empty()) fail("no_clusters", "nearest_centroid needs at least one cluster; every point is noise");
  for (auto& [label, sc] : sums) {
    for (double& v : sc.first) v /= static_cast<double>(sc.second);
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].label >= 0) continue;
    const auto row = reduced->row(i);
    int best = -1;
    double best_d = 0.0;
    for (const auto& [label, sc] : sums) {
      const double d = detail::sq_dist(row, sc.first);
      if (best < 0 || d < best_d) {
        best = label;
        best_d = d;
      }
    }
    a[i].resolved_category = category_name(best);
  }
  return a;
}

inline std::string serialize_assignments(std::span<const ClusterAssignment> a) {
  std::string out;
  for (const auto& x : a) {
    ordered_json j;
    j["question_id"] = x.question_id;
    j["label"] = x.label;
    j["probability"] = x.probability;
    j["category"] = x.resolved_category;
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline std::vector<ClusterAssignment> parse_assignments(const std::string& text, const std::string& source = "<memory>") {
  std::vector<ClusterAssignment> out;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_blank(lines[i])) continue;
    const json j = parse_json_line(lines[i], i + 1, source);
    try {
      ClusterAssignment x;
      x.question_id = j.at("question_id").get<std::string>();
      x.label = j.at("label").get<int>();
      x.probability = j.at("probability").get<double>();
      x.resolved_category = j.value("category", std::string{});
      out.push_back(std::move(x));
    } catch (const json::exception& e) {
      fail("parse_error", source + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

// Hyperparameter search

struct Candidate {
  int n_neighbors = 0;
  int n_components = 0;
  int min_cluster_size = 0;
  auto operator<=>(const Candidate&) const = default;
};

struct Evaluation {
  Candidate candidate;
  bool ok = false;
  std::size_t objective = 0;  // points with probability below the threshold
  int n_clusters = 0;
  std::string error;
};

struct SearchSpace {
  IntRange n_neighbors;
  IntRange n_components;
  IntRange min_cluster_size;

  std::size_t size() const { return n_neighbors.width() * n_components.width() * min_cluster_size.width(); }

  /// Row-major over (n_neighbors, n_components, min_cluster_size).
  Candidate at(std::size_t index) const {
    const std::size_t c = index % min_cluster_size.width();
    index /= min_cluster_size.width();
    const std::size_t b = index % n_components.width();
    index /= n_components.width();
    return {n_neighbors.lo + static_cast<int>(index), n_components.lo + static_cast<int>(b),
            min_cluster_size.lo + static_cast<int>(c)};
  }
};

inline SearchSpace search_space(const ClusterConfig& cfg) {
  return {cfg.search_ranges.n_neighbors.value_or(IntRange{cfg.n_neighbors, cfg.n_neighbors}),
          cfg.search_ranges.n_components.value_or(IntRange{cfg.n_components, cfg.n_components}),
          cfg.search_ranges.min_cluster_size.value_or(IntRange{cfg.min_cluster_size, cfg.min_cluster_size})};
}

/// Proposes the next batch of candidates given everything evaluated so far.
class SearchBackend {
 public:
  virtual ~SearchBackend() = default;
  virtual std::vector<Candidate> propose(const SearchSpace& space, std::span<const Evaluation> history,
                                         std::size_t count, Rng& rng) = 0;
};

/// Distinct uniform draws from the grid; the whole grid, in order, when the
/// budget covers it.
class RandomSearch : public SearchBackend {
 public:
  std::vector<Candidate> propose(const SearchSpace& space, std::span<const Evaluation> history, std::size_t count,
                                 Rng& rng) override {
    std::set<Candidate> seen;
    for (const auto& h : history) seen.insert(h.candidate);
    const std::size_t total = space.size();
    std::vector<Candidate> out;
    if (total - std::min(total, seen.size()) <= count) {
      for (std::size_t i = 0; i < total; ++i) {
        const Candidate c = space.at(i);
        if (!seen.contains(c)) out.push_back(c);
      }
      return out;
    }
    while (out.size() < count) {
      const Candidate c = space.at(static_cast<std::size_t>(rng.below(total)));
      if (seen.insert(c).second) out.push_back(c);
    }
    return out;
  }
};

/// Grid points in row-major order.
class GridSearch : public SearchBackend {
 public:
  std::vector<Candidate> propose(const SearchSpace& space, std::span<const Evaluation> history, std::size_t count,
                                 Rng&) override {
    std::vector<Candidate> out;
    for (std::size_t i = history.size(); i < space.size() && out.size() < count; ++i) out.push_back(space.at(i));
    return out;
  }
};

struct SearchResult {
  ClusterConfig chosen;  // ranges cleared, chosen values set
  std::size_t objective = 0;
  int n_clusters = 0;
  std::vector<Evaluation> evaluated;
  std::vector<std::string> warnings;
  bool budget_exhausted = false;
};

inline ClusterConfig with_candidate(ClusterConfig cfg, const Candidate& c) {
  cfg.n_neighbors = c.n_neighbors;
  cfg.n_components = c.n_components;
  cfg.min_cluster_size = c.min_cluster_size;
  cfg.search_ranges = {};
  return cfg;
}

inline Evaluation evaluate_candidate(const EmbeddingSet& e, const ClusterConfig& base, const Candidate& c) {
  Evaluation ev;
  ev.candidate = c;
  try {
    const auto outcome = reduce_and_cluster(e, with_candidate(base, c));
    ev.objective = low_probability_count(outcome.assignments, base.low_probability);
    ev.n_clusters = cluster_count(outcome.assignments);
    ev.ok = true;
  } catch (const Error& err) {
    ev.error = err.code() + ": " + err.what();
  }
  return ev;
}

/// Minimises the low-probability count over the search ranges. Ties go to
/// fewer clusters, then fewer components, then earlier evaluation.
/// Candidates of one batch are evaluated on parallel threads.
inline SearchResult search_hyperparameters(const EmbeddingSet& e, const ClusterConfig& cfg,
                                           SearchBackend* backend = nullptr, unsigned threads = 0) {
  cfg.validate();
  RandomSearch fallback;
  if (backend == nullptr) backend = &fallback;
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  const SearchSpace space = search_space(cfg);
  const auto budget = static_cast<std::size_t>(cfg.search_budget);
  Rng rng(cfg.seed);
  SearchResult result;
  while (result.evaluated.size() < budget) {
    const auto batch = backend->propose(space, result.evaluated, budget - result.evaluated.size(), rng);
    if (batch.empty()) break;
    std::vector<Evaluation> evs(batch.size());
    std::atomic<std::size_t> cursor{0};
    {
      std::vector<std::jthread> pool;
      for (unsigned t = 0; t < std::min<std::size_t>(threads, batch.size()); ++t) {
        pool.emplace_back([&] {
          for (std::size_t i = cursor++; i < batch.size(); i = cursor++) evs[i] = evaluate_candidate(e, cfg, batch[i]);
        });
      }
    }
    result.evaluated.insert(result.evaluated.end(), evs.begin(), evs.end());
  }
  const Evaluation* best = nullptr;
  for (const auto& ev : result.evaluated) {
    if (!ev.ok) continue;
    if (best == nullptr ||
        std::tuple(ev.objective, ev.n_clusters, ev.candidate.n_components) <
            std::tuple(best->objective, best->n_clusters, best->candidate.n_components)) {
      best = &ev;
    }
  }
  if (best == nullptr) {
    std::vector<std::string> why;
    for (const auto& ev : result.evaluated) why.push_back(ev.error);
    fail("no_valid_configuration", "no candidate configuration could be clustered", std::move(why));
  }
  result.chosen = with_candidate(cfg, best->candidate);
  result.objective = best->objective;
  result.n_clusters = best->n_clusters;
  if (space.size() > result.evaluated.size()) {
    result.budget_exhausted = true;
    result.warnings.push_back("budget_exhausted: evaluated " + std::to_string(result.evaluated.size()) + " of " +
                              std::to_string(space.size()) + " candidates; returning the best found");
  }
  return result;
}

}  // namespace ordikit
