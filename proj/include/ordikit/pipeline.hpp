#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ordikit/analytics.hpp"
#include "ordikit/clustering.hpp"
#include "ordikit/corpus.hpp"
#include "ordikit/difficulty.hpp"
#include "ordikit/gateway.hpp"
#include "ordikit/io.hpp"
#include "ordikit/mock_server.hpp"
#include "ordikit/prompting.hpp"
#include "ordikit/report.hpp"
#include "ordikit/scheduler.hpp"
#include "ordikit/synth.hpp"

namespace ordikit {

namespace fs = std::filesystem;

enum class CategorySource { given, clustered };

inline CategorySource parse_category_source(const std::string& text) {
  if (text == "given") return CategorySource::given;
  if (text == "clustered") return CategorySource::clustered;
  fail("bad_config", "category_source must be given or clustered, not '" + text + "'");
}

/// Everything a subcommand may need. Relative paths in the JSON document are
/// resolved against the document's directory; unset inputs that an earlier
/// step produces default to that step's output under `out`.
struct PipelineConfig {
  std::optional<fs::path> dataset;
  std::optional<DatasetFormat> dataset_format;
  std::optional<fs::path> embeddings;
  std::vector<EndpointConfig> endpoints;
  DifficultySource scenario = DifficultySource::human;
  CategorySource category_source = CategorySource::given;
  std::optional<fs::path> difficulty;
  std::optional<fs::path> clusters;
  std::vector<Strategy> strategies{std::begin(kAllStrategies), std::end(kAllStrategies)};
  std::vector<std::uint64_t> seeds{0};
  std::optional<std::vector<std::string>> category_order;
  int chunk_size = 1;
  int repeat_within_category = 1;
  ClusterConfig cluster;
  bool cluster_search = false;
  NoisePolicy noise_policy = NoisePolicy::own_category;
  CorrelationMethod correlation = CorrelationMethod::pearson;
  std::vector<fs::path> results;
  std::string baseline = "random_shuffle";
  PairingUnit pairing = PairingUnit::combination;
  PromptTemplate prompt;
  std::optional<fs::path> cache;
  std::optional<fs::path> mock_fixture;
  fs::path out = "ordikit-out";

  fs::path difficulty_path() const { return difficulty.value_or(out / "difficulty.jsonl"); }
  fs::path clusters_path() const { return clusters.value_or(out / "clusters.jsonl"); }
  fs::path cache_path() const { return cache.value_or(out / "cache.jsonl"); }
  fs::path manifest_dir() const { return out / "manifests"; }
  fs::path report_dir() const { return out / "report"; }

  static PipelineConfig from_json(const json& j, const fs::path& base = {}) {
    PipelineConfig c;
    auto path = [&](const json& v) {
      fs::path p = v.get<std::string>();
      return p.is_relative() && !base.empty() ? base / p : p;
    };
    try {
      if (j.contains("dataset")) c.dataset = path(j["dataset"]);
      if (j.contains("dataset_format")) c.dataset_format = parse_dataset_format(j["dataset_format"].get<std::string>());
      if (j.contains("embeddings")) c.embeddings = path(j["embeddings"]);
      if (j.contains("endpoints")) {
        for (const auto& e : j["endpoints"]) c.endpoints.push_back(EndpointConfig::from_json(e));
      }
      if (j.contains("scenario")) c.scenario = parse_difficulty_source(j["scenario"].get<std::string>());
      if (j.contains("category_source")) c.category_source = parse_category_source(j["category_source"].get<std::string>());
      if (j.contains("difficulty")) c.difficulty = path(j["difficulty"]);
      if (j.contains("clusters")) c.clusters = path(j["clusters"]);
      if (j.contains("strategies")) {
        c.strategies.clear();
        for (const auto& s : j["strategies"]) c.strategies.push_back(parse_strategy(s.get<std::string>()));
      }
      if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
      if (j.contains("category_order")) c.category_order = j["category_order"].get<std::vector<std::string>>();
      c.chunk_size = j.value("chunk_size", c.chunk_size);
      c.repeat_within_category = j.value("repeat_within_category", c.repeat_within_category);
      if (j.contains("cluster")) {
        c.cluster = ClusterConfig::from_json(j["cluster"]);
        c.cluster_search = j["cluster"].value("search", !c.cluster.search_ranges.empty());
        if (j["cluster"].contains("noise_policy")) {
          c.noise_policy = parse_noise_policy(j["cluster"]["noise_policy"].get<std::string>());
        }
      }
      if (j.contains("correlation")) {
        const auto m = j["correlation"].get<std::string>();
        if (m == "pearson") c.correlation = CorrelationMethod::pearson;
        else if (m == "spearman") c.correlation = CorrelationMethod::spearman;
        else fail("bad_config", "correlation must be pearson or spearman");
      }
      if (j.contains("results")) {
        if (j["results"].is_array()) {
          for (const auto& r : j["results"]) c.results.push_back(path(r));
        } else {
          c.results.push_back(path(j["results"]));
        }
      }
      c.baseline = j.value("baseline", c.baseline);
      if (j.contains("pairing")) c.pairing = parse_pairing_unit(j["pairing"].get<std::string>());
      if (j.contains("prompt")) c.prompt = PromptTemplate::from_json(j["prompt"]);
      if (j.contains("cache")) c.cache = path(j["cache"]);
      if (j.contains("mock_fixture")) c.mock_fixture = path(j["mock_fixture"]);
      if (j.contains("out")) c.out = path(j["out"]);
    } catch (const json::exception& e) {
      fail("bad_config", std::string("configuration: ") + e.what());
    }
    if (c.seeds.empty()) fail("bad_config", "seeds must not be empty");
    return c;
  }

  static PipelineConfig load(const fs::path& file) {
    json j;
    try {
      j = json::parse(read_file(file));
    } catch (const json::parse_error& e) {
      fail("parse_error", file.string() + ": " + e.what());
    }
    return from_json(j, file.parent_path());
  }
};

inline Dataset load_pipeline_dataset(const PipelineConfig& cfg) {
  if (!cfg.dataset) fail("bad_config", "no dataset configured");
  return cfg.dataset_format ? load_dataset(*cfg.dataset, *cfg.dataset_format) : load_dataset(*cfg.dataset);
}

inline ordered_json cmd_load(const PipelineConfig& cfg) {
  const Dataset ds = load_pipeline_dataset(cfg);
  std::size_t with_stats = 0;
  std::size_t with_category = 0;
  std::size_t five = 0;
  for (const auto& q : ds.questions()) {
    with_stats += q.human_stats.has_value();
    with_category += q.category.has_value();
    five += q.options.size() == 5;
  }
  ordered_json s;
  s["dataset"] = ds.name();
  s["questions"] = ds.size();
  s["five_option"] = five;
  s["four_option"] = ds.size() - five;
  s["with_category"] = with_category;
  s["with_human_stats"] = with_stats;
  s["categories"] = ds.categories();
  s["sha256"] = dataset_hash(ds);
  if (cfg.embeddings) {
    const EmbeddingSet e = load_embeddings(*cfg.embeddings, ds);
    s["embeddings"] = {{"rows", e.size()}, {"dim", e.dim()}};
  }
  return s;
}

/// Human difficulty for every question, or LLM difficulty through the
/// gateway. Writes difficulty.jsonl (dataset order), plus agreement.json for
/// the LLM scenario and failures.jsonl when some pairs failed; in that case
/// the records that could be completed are still written before throwing.
inline ordered_json cmd_label_difficulty(const PipelineConfig& cfg) {
  const Dataset ds = load_pipeline_dataset(cfg);
  std::vector<DifficultyRecord> records;
  ordered_json summary;
  if (cfg.scenario == DifficultySource::human) {
    std::vector<std::string> missing;
    for (const auto& q : ds.questions()) {
      if (!q.human_stats) missing.push_back(q.id);
    }
    if (!missing.empty()) {
      fail("missing_human_stats", std::to_string(missing.size()) + " question(s) lack human_stats", std::move(missing));
    }
    for (const auto& q : ds.questions()) records.push_back(human_difficulty(q));
    write_file(cfg.difficulty_path(), serialize_difficulty(records));
    summary["source"] = "human";
    summary["records"] = records.size();
    summary["output"] = cfg.difficulty_path().string();
    return summary;
  }

  if (cfg.endpoints.empty()) fail("bad_config", "the llm scenario needs at least one endpoint");
  AnswerCache cache(cfg.cache_path());
  const ScoreReport scored = score_dataset(ds, cfg.endpoints, cache, cfg.prompt);
  std::set<std::string> incomplete;
  for (const auto& f : scored.failures) incomplete.insert(f.question_id);
  for (const auto& q : ds.questions()) {
    if (incomplete.contains(q.id)) continue;
    auto it = scored.distributions.find(q.id);
    if (it == scored.distributions.end()) continue;
    records.push_back(llm_difficulty(q, it->second));
  }
  write_file(cfg.difficulty_path(), serialize_difficulty(records));
  summary["source"] = "llm";
  summary["records"] = records.size();
  summary["fetched"] = scored.fetched;
  summary["cache_hits"] = scored.cache_hits;
  summary["output"] = cfg.difficulty_path().string();

  ordered_json agreement;
  try {
    const auto m = agreement_matrix(records, cfg.correlation);
    agreement["method"] = cfg.correlation == CorrelationMethod::pearson ? "pearson" : "spearman";
    agreement["models"] = m.models;
    agreement["correlation"] = m.correlation;
    agreement["mean_off_diagonal"] = m.mean_off_diagonal;
    agreement["questions"] = m.n_questions;
  } catch (const Error& e) {
    agreement["error"] = {{"code", e.code()}, {"message", e.what()}, {"subjects", e.subjects()}};
  }
  write_file(cfg.out / "agreement.json", agreement.dump(2) + "\n");

  if (!scored.failures.empty()) {
    std::string text;
    std::vector<std::string> subjects;
    for (const auto& f : scored.failures) {
      text += to_json(f).dump() + "\n";
      subjects.push_back(f.question_id + "@" + f.endpoint);
    }
    write_file(cfg.out / "failures.jsonl", text);
    throw Error(scored.failures.front().kind, "partial_failure",
                std::to_string(scored.failures.size()) + " (question, endpoint) pair(s) failed; " +
                    std::to_string(records.size()) + " record(s) written, details in failures.jsonl",
                std::move(subjects));
  }
  return summary;
}

inline ordered_json cmd_cluster(const PipelineConfig& cfg) {
  const Dataset ds = load_pipeline_dataset(cfg);
  if (!cfg.embeddings) fail("bad_config", "clustering needs an embeddings file");
  const EmbeddingSet e = load_embeddings(*cfg.embeddings, ds);
  ClusterConfig chosen = cfg.cluster;
  ordered_json report;
  if (cfg.cluster_search) {
    const SearchResult sr = search_hyperparameters(e, cfg.cluster);
    chosen = sr.chosen;
    ordered_json evals = ordered_json::array();
    for (const auto& ev : sr.evaluated) {
      ordered_json x;
      x["n_neighbors"] = ev.candidate.n_neighbors;
      x["n_components"] = ev.candidate.n_components;
      x["min_cluster_size"] = ev.candidate.min_cluster_size;
      if (ev.ok) {
        x["low_probability_points"] = ev.objective;
        x["clusters"] = ev.n_clusters;
      } else {
        x["error"] = ev.error;
      }
      evals.push_back(std::move(x));
    }
    report["search"] = {{"budget", cfg.cluster.search_budget},
                        {"evaluated", std::move(evals)},
                        {"objective", sr.objective},
                        {"warnings", sr.warnings}};
  }
  const auto outcome = reduce_and_cluster(e, chosen);
  const auto resolved = resolve_noise(outcome.assignments, cfg.noise_policy, &outcome.reduced);
  write_file(cfg.clusters_path(), serialize_assignments(resolved));
  report["chosen"] = to_json(chosen);
  report["clusters"] = cluster_count(resolved);
  report["noise_points"] = std::count_if(resolved.begin(), resolved.end(), [](const auto& a) { return a.label < 0; });
  report["low_probability_points"] = low_probability_count(resolved, chosen.low_probability);
  report["noise_policy"] = cfg.noise_policy == NoisePolicy::own_category ? "own_category" : "nearest_centroid";
  write_file(cfg.out / "cluster_report.json", report.dump(2) + "\n");
  ordered_json summary;
  summary["clusters"] = report["clusters"];
  summary["noise_points"] = report["noise_points"];
  summary["output"] = cfg.clusters_path().string();
  if (report.contains("search")) summary["warnings"] = report["search"]["warnings"];
  return summary;
}

/// Labels for ordering: difficulty from human statistics or the difficulty
/// file, categories from the dataset or the cluster file.
inline std::vector<LabeledItem> pipeline_items(const PipelineConfig& cfg, const Dataset& ds) {
  std::vector<DifficultyRecord> difficulty;
  if (cfg.scenario == DifficultySource::human) {
    for (const auto& q : ds.questions()) {
      if (q.human_stats) difficulty.push_back(human_difficulty(q));
    }
  } else if (fs::exists(cfg.difficulty_path())) {
    difficulty = parse_difficulty(read_file(cfg.difficulty_path()), cfg.difficulty_path().string());
  }
  if (cfg.category_source == CategorySource::given) return make_labeled_items(ds, difficulty);
  const auto assignments = parse_assignments(read_file(cfg.clusters_path()), cfg.clusters_path().string());
  std::map<std::string, std::string> cats;
  for (const auto& a : assignments) {
    if (!a.resolved_category.empty()) cats[a.question_id] = a.resolved_category;
  }
  return make_labeled_items(ds, difficulty, &cats);
}

inline std::string manifest_name(Strategy s, std::uint64_t seed) {
  return uses_seed(s) ? std::string(to_string(s)) + "_seed" + std::to_string(seed) + ".jsonl"
                      : std::string(to_string(s)) + ".jsonl";
}

/// One manifest per distinct (strategy, seed) ordering: seed-independent
/// strategies are written once however many seeds are listed.
inline ordered_json cmd_order(const PipelineConfig& cfg) {
  const Dataset ds = load_pipeline_dataset(cfg);
  const auto items = pipeline_items(cfg, ds);
  const std::string ds_hash = dataset_hash(ds);
  std::set<std::string> written;
  ordered_json files = ordered_json::array();
  for (Strategy s : cfg.strategies) {
    for (std::uint64_t seed : cfg.seeds) {
      const std::string name = manifest_name(s, seed);
      if (!written.insert(name).second) continue;
      OrderRequest req;
      req.strategy = s;
      req.seed = seed;
      req.category_order = cfg.category_order;
      req.chunk_size = cfg.chunk_size;
      req.repeat_within_category = is_blocked(s) ? cfg.repeat_within_category : 1;
      const auto m = build_manifest(req, items, ds_hash);
      write_file(cfg.manifest_dir() / name, serialize_manifest(m));
      files.push_back({{"file", name}, {"strategy", to_string(s)}, {"length", m.sequence.size()}});
    }
  }
  ordered_json index;
  index["dataset_sha256"] = ds_hash;
  index["manifests"] = files;
  write_file(cfg.manifest_dir() / "index.json", index.dump(2) + "\n");
  ordered_json summary;
  summary["manifests"] = files.size();
  summary["output"] = cfg.manifest_dir().string();
  return summary;
}

inline ordered_json cmd_verify(const PipelineConfig& cfg, const fs::path& manifest) {
  const Dataset ds = load_pipeline_dataset(cfg);
  const auto items = pipeline_items(cfg, ds);
  const VerifyResult r = verify_manifest(read_file(manifest), items, dataset_hash(ds));
  if (!r.ok) fail("manifest_mismatch", manifest.string() + ":" + std::to_string(r.line) + ": " + r.message,
                  {manifest.string() + ":" + std::to_string(r.line)});
  return {{"manifest", manifest.string()}, {"ok", true}};
}

inline ordered_json cmd_report(const PipelineConfig& cfg) {
  if (cfg.results.empty()) fail("bad_config", "no results files configured");
  std::vector<RunResult> all;
  for (const auto& p : cfg.results) {
    auto rs = parse_run_results(read_file(p), p.string());
    all.insert(all.end(), rs.begin(), rs.end());
  }
  const Report report = build_report(all, cfg.baseline, cfg.pairing);
  ordered_json files = ordered_json::array();
  for (const auto& p : write_report(report, cfg.report_dir())) files.push_back(p.filename().string());
  ordered_json summary;
  summary["results"] = all.size();
  summary["scenarios"] = report.scenarios.size();
  summary["files"] = files;
  summary["output"] = cfg.report_dir().string();
  if (!report.warnings.empty()) summary["warnings"] = report.warnings;
  return summary;
}

inline const std::vector<std::string>& demo_models() {
  static const std::vector<std::string> models = {"model-a", "model-b", "model-c", "model-d", "model-e", "model-f"};
  return models;
}

/// Full pipeline on generated data against the in-process mock endpoint:
/// label-difficulty (llm) -> cluster (UMAP + search) -> order -> report.
/// Outputs depend only on `seed`.
inline ordered_json cmd_demo(const fs::path& out, std::uint64_t seed = 0) {
  synth::DatasetSpec spec;
  spec.seed = seed;
  const Dataset ds = synth::dataset(spec);
  const fs::path inputs = out / "inputs";
  write_file(inputs / "dataset.jsonl", serialize_jsonl(ds));
  write_file(inputs / "embeddings.jsonl", serialize_embeddings(synth::embeddings(ds, 16, 0.35, seed)));
  const MockFixture fixture = synth::mock_fixture(ds, demo_models(), seed);
  write_file(inputs / "mock_fixture.jsonl", fixture.serialize());
  const auto results = synth::run_results({"tiny-synth", "base-synth"}, {"synthetic-a", "synthetic-b"},
                                          {"human", "llm"}, 5, 200, seed);
  write_file(inputs / "results.jsonl", serialize_run_results(results));

  MockServer server(fixture);
  server.start();

  PipelineConfig cfg;
  cfg.dataset = inputs / "dataset.jsonl";
  cfg.embeddings = inputs / "embeddings.jsonl";
  cfg.scenario = DifficultySource::llm;
  cfg.category_source = CategorySource::clustered;
  for (const auto& m : demo_models()) {
    EndpointConfig ep;
    ep.name = m;
    ep.base_url = server.base_url();
    ep.max_concurrency = 4;
    ep.backoff_initial = std::chrono::milliseconds(10);
    cfg.endpoints.push_back(ep);
  }
  cfg.seeds = {seed};
  cfg.cluster.reducer = Reducer::umap;
  cfg.cluster.seed = seed;
  cfg.cluster.search_ranges = {IntRange{8, 15}, IntRange{2, 5}, IntRange{8, 15}};
  cfg.cluster.search_budget = 8;
  cfg.cluster_search = true;
  cfg.noise_policy = NoisePolicy::nearest_centroid;
  cfg.results = {inputs / "results.jsonl"};
  cfg.out = out;

  ordered_json summary;
  summary["label_difficulty"] = cmd_label_difficulty(cfg);
  summary["cluster"] = cmd_cluster(cfg);
  summary["order"] = cmd_order(cfg);
  summary["report"] = cmd_report(cfg);
  server.stop();
  return summary;
}

}  // namespace ordikit
