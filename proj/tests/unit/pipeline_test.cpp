#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include <gtest/gtest.h>

#include "ordikit/ordikit.hpp"
#include "support.hpp"

using namespace ordikit;
using testing_support::TempDir;
namespace fs = std::filesystem;

namespace {

struct Workspace {
  TempDir dir;
  Dataset ds;
  PipelineConfig cfg;

  explicit Workspace(const std::string& tag, std::size_t n = 40) : dir(tag), ds(make(n)) {
    write_file(dir / "dataset.jsonl", serialize_jsonl(ds));
    write_file(dir / "embeddings.jsonl", serialize_embeddings(synth::embeddings(ds, 8, 0.3, 1)));
    cfg.dataset = dir / "dataset.jsonl";
    cfg.embeddings = dir / "embeddings.jsonl";
    cfg.out = dir / "out";
  }

  static Dataset make(std::size_t n) {
    synth::DatasetSpec spec;
    spec.n_questions = n;
    spec.seed = 11;
    return synth::dataset(spec);
  }
};

int run_cli(const std::string& args, std::string* stdout_text = nullptr) {
  const std::string capture = (fs::temp_directory_path() / "ordikit_cli_stdout.txt").string();
  const std::string cmd = std::string("\"") + ORDIKIT_CLI + "\" " + args + " >" + capture + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (stdout_text) *stdout_text = read_file(capture);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, RelativePathsFollowTheConfigFile) {
  TempDir dir("config");
  write_file(dir / "run.json", R"({"dataset":"data/bank.jsonl","seeds":[1,2],"strategies":["blocked","curriculum"],
                                   "cluster":{"reducer":"pca","n_components":3,"noise_policy":"nearest_centroid"},
                                   "results":"r.jsonl","pairing":"run","out":"/abs/out"})");
  const auto cfg = PipelineConfig::load(dir / "run.json");
  EXPECT_EQ(*cfg.dataset, dir / "data/bank.jsonl");
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{1, 2}));
  EXPECT_EQ(cfg.strategies, (std::vector<Strategy>{Strategy::blocked, Strategy::curriculum}));
  EXPECT_EQ(cfg.cluster.reducer, Reducer::pca);
  EXPECT_EQ(cfg.noise_policy, NoisePolicy::nearest_centroid);
  EXPECT_EQ(cfg.results, (std::vector<fs::path>{dir / "r.jsonl"}));
  EXPECT_EQ(cfg.pairing, PairingUnit::run);
  EXPECT_EQ(cfg.out, fs::path("/abs/out"));
}

TEST(Config, RejectsBadValues) {
  EXPECT_ORDIKIT_ERROR(PipelineConfig::from_json(json::parse(R"({"seeds":[]})")), "bad_config");
  EXPECT_ORDIKIT_ERROR(PipelineConfig::from_json(json::parse(R"({"seeds":"x"})")), "bad_config");
  EXPECT_ORDIKIT_ERROR(PipelineConfig::from_json(json::parse(R"({"correlation":"kendall"})")), "bad_config");
  EXPECT_ORDIKIT_ERROR(PipelineConfig::from_json(json::parse(R"({"category_source":"guessed"})")), "bad_config");
}

TEST(Pipeline, LoadSummarisesTheBank) {
  Workspace w("load");
  const auto s = cmd_load(w.cfg);
  EXPECT_EQ(s["questions"], 40);
  EXPECT_EQ(s["five_option"], 40);
  EXPECT_EQ(s["embeddings"]["dim"], 8);
  EXPECT_EQ(s["sha256"], dataset_hash(w.ds));
}

TEST(Pipeline, HumanLabelsNeedStatisticsOnEveryQuestion) {
  Workspace w("human");
  cmd_label_difficulty(w.cfg);
  const auto records = parse_difficulty(read_file(w.cfg.difficulty_path()));
  ASSERT_EQ(records.size(), 40u);
  for (std::size_t i = 0; i < records.size(); ++i) {
    EXPECT_EQ(records[i].question_id, w.ds.questions()[i].id);
    EXPECT_DOUBLE_EQ(records[i].difficulty, human_difficulty(w.ds.questions()[i]).difficulty);
  }

  std::vector<Question> qs = w.ds.questions();
  qs[3].human_stats.reset();
  qs[17].human_stats.reset();
  write_file(w.dir / "partial.jsonl", serialize_jsonl(Dataset("partial", qs, "test")));
  w.cfg.dataset = w.dir / "partial.jsonl";
  try {
    cmd_label_difficulty(w.cfg);
    FAIL() << "expected missing_human_stats";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "missing_human_stats");
    EXPECT_EQ(e.subjects(), (std::vector<std::string>{qs[3].id, qs[17].id}));
    EXPECT_EQ(exit_code(e.kind()), 2);
  }
}

TEST(Pipeline, LlmLabelsThroughTheMockEndpoint) {
  Workspace w("llm", 24);
  const std::vector<std::string> models{"m1", "m2", "m3"};
  MockServer server(synth::mock_fixture(w.ds, models, 4));
  server.start();
  for (const auto& m : models) {
    EndpointConfig ep;
    ep.name = m;
    ep.base_url = server.base_url();
    w.cfg.endpoints.push_back(ep);
  }
  w.cfg.scenario = DifficultySource::llm;
  const auto first = cmd_label_difficulty(w.cfg);
  EXPECT_EQ(first["records"], 24);
  EXPECT_EQ(first["fetched"], 72);
  const auto again = cmd_label_difficulty(w.cfg);
  EXPECT_EQ(again["fetched"], 0);
  EXPECT_EQ(again["cache_hits"], 72);
  const auto agreement = json::parse(read_file(w.cfg.out / "agreement.json"));
  EXPECT_EQ(agreement["models"].size(), 3u);
  EXPECT_EQ(server.total_requests(), 72u);
}

TEST(Pipeline, PartialLlmFailureKeepsCompletedRecords) {
  Workspace w("llm-partial", 12);
  MockFixture fx = synth::mock_fixture(w.ds, {"good", "bad"}, 2);
  fx.set_behavior("bad", MockBehavior{.always_fail = true});
  MockServer server(std::move(fx));
  server.start();
  for (const char* m : {"good", "bad"}) {
    EndpointConfig ep;
    ep.name = m;
    ep.base_url = server.base_url();
    ep.max_retries = 1;
    ep.backoff_initial = std::chrono::milliseconds(1);
    w.cfg.endpoints.push_back(ep);
  }
  w.cfg.scenario = DifficultySource::llm;
  EXPECT_ORDIKIT_ERROR(cmd_label_difficulty(w.cfg), "partial_failure");
  EXPECT_EQ(split_lines(read_file(w.cfg.out / "failures.jsonl")).size(), 12u);
  EXPECT_TRUE(fs::exists(w.cfg.difficulty_path()));
}

TEST(Pipeline, ClusterWithoutReductionMatchesDirectClustering) {
  Workspace w("cluster");
  w.cfg.cluster.reducer = Reducer::none;
  w.cfg.cluster.min_cluster_size = 5;
  cmd_cluster(w.cfg);
  const auto written = parse_assignments(read_file(w.cfg.clusters_path()));
  const auto e = parse_embeddings(read_file(*w.cfg.embeddings), w.ds);
  const auto direct = cluster(e, w.cfg.cluster);
  ASSERT_EQ(written.size(), direct.size());
  for (std::size_t i = 0; i < direct.size(); ++i) {
    EXPECT_EQ(written[i].question_id, direct[i].question_id);
    EXPECT_EQ(written[i].label, direct[i].label);
    EXPECT_NEAR(written[i].probability, direct[i].probability, 1e-12);
  }
  EXPECT_EQ(cluster_count(written), 4);
}

TEST(Pipeline, SeedIndependentStrategiesAreWrittenOnce) {
  Workspace w("order");
  w.cfg.seeds = {1, 2, 3, 4, 5};
  const auto s = cmd_order(w.cfg);
  EXPECT_EQ(s["manifests"], 10);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(w.cfg.manifest_dir())) files += entry.path().extension() == ".jsonl";
  EXPECT_EQ(files, 10u);
  EXPECT_TRUE(fs::exists(w.cfg.manifest_dir() / "random_shuffle_seed3.jsonl"));
  EXPECT_TRUE(fs::exists(w.cfg.manifest_dir() / "interleaved_curriculum.jsonl"));
}

TEST(Pipeline, VerifyDetectsTampering) {
  Workspace w("verify");
  cmd_order(w.cfg);
  const fs::path path = w.cfg.manifest_dir() / "curriculum.jsonl";
  EXPECT_EQ(cmd_verify(w.cfg, path)["ok"], true);

  auto lines = split_lines(read_file(path));
  std::swap(lines[4], lines[9]);
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_file(path, text);
  try {
    cmd_verify(w.cfg, path);
    FAIL() << "expected manifest_mismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "manifest_mismatch");
    EXPECT_EQ(e.subjects(), (std::vector<std::string>{path.string() + ":5"}));
  }
}

TEST(Pipeline, ClusteredCategoriesFeedOrdering) {
  Workspace w("clustered");
  w.cfg.cluster.reducer = Reducer::none;
  w.cfg.cluster.min_cluster_size = 5;
  cmd_cluster(w.cfg);
  w.cfg.category_source = CategorySource::clustered;
  w.cfg.strategies = {Strategy::blocked};
  cmd_order(w.cfg);
  const auto m = parse_manifest(read_file(w.cfg.manifest_dir() / "blocked.jsonl"));
  std::set<std::string> cats;
  cats.insert(m.sequence_categories.begin(), m.sequence_categories.end());
  EXPECT_EQ(cats.size(), 4u);
  for (const auto& c : cats) EXPECT_EQ(c.rfind("cluster_", 0), 0u) << c;
}

TEST(Pipeline, ReportWritesAllFormats) {
  Workspace w("report");
  write_file(w.dir / "results.jsonl",
             serialize_run_results(synth::run_results({"m1", "m2"}, {"d1"}, {"human"}, 3, 100, 3)));
  w.cfg.results = {w.dir / "results.jsonl"};
  const auto s = cmd_report(w.cfg);
  EXPECT_EQ(s["results"], 36);
  EXPECT_TRUE(fs::exists(w.cfg.report_dir() / "report.md"));
  EXPECT_TRUE(fs::exists(w.cfg.report_dir() / "gains_human.svg"));
}

TEST(Cli, ExitCodesFollowTheErrorKind) {
  TempDir dir("cli");
  std::string out;
  EXPECT_EQ(run_cli("--help", &out), 0);
  EXPECT_NE(out.find("label-difficulty"), std::string::npos);
  EXPECT_EQ(run_cli("no-such-command"), 2);
  EXPECT_EQ(run_cli("load --dataset " + (dir / "missing.jsonl").string(), &out), 2);

  write_file(dir / "bad.jsonl", "{\"id\":\"q1\",\"stem\":\"s\",\"options\":{\"A\":\"a\",\"B\":\"b\",\"C\":\"c\",\"D\":\"d\"},\"gold\":\"E\"}\n");
  EXPECT_EQ(run_cli("load --dataset " + (dir / "bad.jsonl").string(), &out), 2);
  EXPECT_NE(out.find("gold_not_an_option"), std::string::npos) << out;

  const Dataset ds = Workspace::make(6);
  write_file(dir / "ds.jsonl", serialize_jsonl(ds));
  write_file(dir / "cfg.json", R"({"dataset":"ds.jsonl","scenario":"llm","endpoints":[{"name":"x","base_url":"http://127.0.0.1:9/v1","model":"x","max_retries":1,"backoff_initial_ms":1,"timeout_ms":500}],"out":"o"})");
  EXPECT_EQ(run_cli("label-difficulty --config " + (dir / "cfg.json").string(), &out), 3);
  EXPECT_NE(out.find("\"kind\":\"network\""), std::string::npos) << out;

  EXPECT_EQ(run_cli("load --dataset " + (dir / "ds.jsonl").string(), &out), 0);
  EXPECT_EQ(json::parse(out)["questions"], 6);
}

TEST(Cli, MockFlagServesTheConfiguredFixture) {
  TempDir dir("cli-mock");
  const Dataset ds = Workspace::make(10);
  write_file(dir / "ds.jsonl", serialize_jsonl(ds));
  write_file(dir / "fx.jsonl", synth::mock_fixture(ds, {"alpha", "beta"}, 9).serialize());
  write_file(dir / "cfg.json", R"({"dataset":"ds.jsonl","scenario":"llm","mock_fixture":"fx.jsonl","out":"o"})");
  std::string out;
  ASSERT_EQ(run_cli("label-difficulty --mock --config " + (dir / "cfg.json").string(), &out), 0) << out;
  EXPECT_EQ(json::parse(out)["records"], 10);
  EXPECT_EQ(parse_difficulty(read_file(dir / "o" / "difficulty.jsonl")).size(), 10u);
}
