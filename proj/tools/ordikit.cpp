#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ordikit/pipeline.hpp"

namespace {

using namespace ordikit;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string mock;  // "" = off, "@config" = fixture named in the config
  std::string out;
  std::string dataset;
  std::string embeddings;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON configuration file");
  sub->add_option("--seed", c.seed, "Seed for every random choice");
  sub->add_flag("--mock{@config}", c.mock,
                "Serve endpoints from a mock fixture (--mock=FILE, or the config's mock_fixture)");
  sub->add_option("--out", c.out, "Output directory");
  sub->add_option("--dataset", c.dataset, "Dataset file (JSONL or CSV)");
  sub->add_option("--embeddings", c.embeddings, "Embeddings JSONL file");
}

PipelineConfig resolve(const Common& c) {
  PipelineConfig cfg = c.config.empty() ? PipelineConfig{} : PipelineConfig::load(c.config);
  if (!c.out.empty()) cfg.out = c.out;
  if (!c.dataset.empty()) cfg.dataset = c.dataset;
  if (!c.embeddings.empty()) cfg.embeddings = c.embeddings;
  if (c.seed) {
    cfg.seeds = {*c.seed};
    cfg.cluster.seed = *c.seed;
  }
  return cfg;
}

/// Starts a mock endpoint when requested and points every endpoint at it.
std::unique_ptr<MockServer> start_mock(const Common& c, PipelineConfig& cfg) {
  if (c.mock.empty()) return nullptr;
  std::filesystem::path fixture_path;
  if (c.mock != "@config") {
    fixture_path = c.mock;
  } else if (cfg.mock_fixture) {
    fixture_path = *cfg.mock_fixture;
  } else {
    fail("bad_config", "--mock needs a fixture: pass --mock=FILE or set mock_fixture in the config");
  }
  MockFixture fixture = MockFixture::parse(read_file(fixture_path), fixture_path.string());
  if (cfg.endpoints.empty()) {
    for (const auto& m : fixture.models()) {
      EndpointConfig ep;
      ep.name = m;
      cfg.endpoints.push_back(ep);
    }
  }
  auto server = std::make_unique<MockServer>(std::move(fixture));
  server->start();
  for (auto& ep : cfg.endpoints) ep.base_url = server->base_url();
  return server;
}

void print(const ordered_json& j) { std::cout << j.dump(2) << "\n"; }

int report_error(ErrorKind kind, const std::string& code, const std::string& message,
                 const std::vector<std::string>& subjects) {
  ordered_json err;
  err["error"] = {{"kind", to_string(kind)}, {"code", code}, {"message", message}, {"subjects", subjects}};
  std::cerr << err.dump() << "\n";
  return exit_code(kind);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ordikit: difficulty labelling, data ordering and result analysis for multiple-choice datasets"};
  app.require_subcommand(1);
  Common common;

  auto* load = app.add_subcommand("load", "Validate a dataset (and embeddings) and print a summary");
  add_common(load, common);

  std::string source;
  std::string correlation;
  auto* label = app.add_subcommand("label-difficulty", "Write per-question difficulty (human or llm)");
  add_common(label, common);
  label->add_option("--source", source, "human or llm")->check(CLI::IsMember({"human", "llm"}));
  label->add_option("--correlation", correlation, "Agreement statistic")->check(CLI::IsMember({"pearson", "spearman"}));

  std::string reducer;
  std::optional<int> budget;
  std::optional<bool> search;
  std::string noise_policy;
  auto* cluster = app.add_subcommand("cluster", "Cluster embeddings into question categories");
  add_common(cluster, common);
  cluster->add_option("--reducer", reducer, "umap, pca or none")->check(CLI::IsMember({"umap", "pca", "none"}));
  cluster->add_option("--budget", budget, "Hyperparameter search budget");
  cluster->add_flag("--search,!--no-search", search, "Run the hyperparameter search over the configured ranges");
  cluster->add_option("--noise-policy", noise_policy, "own_category or nearest_centroid")
      ->check(CLI::IsMember({"own_category", "nearest_centroid"}));

  std::vector<std::string> strategies;
  std::vector<std::uint64_t> seeds;
  std::string category_source;
  std::string scenario;
  std::optional<int> chunk;
  std::optional<int> repeat;
  auto* order = app.add_subcommand("order", "Write one manifest per strategy and seed");
  add_common(order, common);
  order->add_option("--strategies", strategies, "Strategies to emit (default: all six)");
  order->add_option("--seeds", seeds, "Seeds for seed-dependent strategies");
  order->add_option("--scenario", scenario, "Difficulty labels: human or llm")->check(CLI::IsMember({"human", "llm"}));
  order->add_option("--category-source", category_source, "given or clustered")
      ->check(CLI::IsMember({"given", "clustered"}));
  order->add_option("--chunk-size", chunk, "Items taken per category visit when interleaving");
  order->add_option("--repeat", repeat, "Repeat each category block k times (blocked strategies)");

  std::vector<std::string> results;
  auto* report = app.add_subcommand("report", "Aggregate run results into tables, gains and tests");
  add_common(report, common);
  report->add_option("--results", results, "RunResult JSONL files");

  auto* demo = app.add_subcommand("demo", "Run the whole pipeline on bundled synthetic data and a mock endpoint");
  add_common(demo, common);

  std::string manifest;
  auto* verify = app.add_subcommand("verify", "Regenerate a manifest from its header and compare");
  add_common(verify, common);
  verify->add_option("manifest", manifest, "Manifest file")->required();
  verify->add_option("--scenario", scenario, "Difficulty labels: human or llm")->check(CLI::IsMember({"human", "llm"}));
  verify->add_option("--category-source", category_source, "given or clustered")
      ->check(CLI::IsMember({"given", "clustered"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    PipelineConfig cfg = resolve(common);
    if (!scenario.empty()) cfg.scenario = parse_difficulty_source(scenario);
    if (!category_source.empty()) cfg.category_source = parse_category_source(category_source);

    if (*load) {
      print(cmd_load(cfg));
    } else if (*label) {
      if (!source.empty()) cfg.scenario = parse_difficulty_source(source);
      if (correlation == "spearman") cfg.correlation = CorrelationMethod::spearman;
      auto server = start_mock(common, cfg);
      print(cmd_label_difficulty(cfg));
    } else if (*cluster) {
      if (!reducer.empty()) cfg.cluster.reducer = parse_reducer(reducer);
      if (budget) cfg.cluster.search_budget = *budget;
      if (search) cfg.cluster_search = *search;
      if (!noise_policy.empty()) cfg.noise_policy = parse_noise_policy(noise_policy);
      cfg.cluster.validate();
      print(cmd_cluster(cfg));
    } else if (*order) {
      if (!strategies.empty()) {
        cfg.strategies.clear();
        for (const auto& s : strategies) cfg.strategies.push_back(parse_strategy(s));
      }
      if (!seeds.empty()) cfg.seeds = seeds;
      if (chunk) cfg.chunk_size = *chunk;
      if (repeat) cfg.repeat_within_category = *repeat;
      print(cmd_order(cfg));
    } else if (*report) {
      if (!results.empty()) cfg.results.assign(results.begin(), results.end());
      print(cmd_report(cfg));
    } else if (*demo) {
      const std::filesystem::path out = common.out.empty() ? std::string("ordikit-demo") : common.out;
      print(cmd_demo(out, common.seed.value_or(0)));
    } else if (*verify) {
      print(cmd_verify(cfg, manifest));
    }
  } catch (const Error& e) {
    return report_error(e.kind(), e.code(), e.what(), e.subjects());
  } catch (const std::exception& e) {
    return report_error(ErrorKind::internal, "internal", e.what(), {});
  }
  return 0;
}
