#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "pipeline_fixture.h"
#include "rulegraph/common.h"
#include "rulegraph/pipeline.h"
#include "rulegraph/synthetic.h"

using namespace rulegraph;
using rulegraph::testing::synthetic_fixture;
using rulegraph::testing::TempDir;
using json = nlohmann::json;

namespace {

json minimal_config() {
  return json::parse(R"({
    "corpus": {"train": "train.conll", "dev": "dev.conll", "test": "test.conll"},
    "seed_rules": "seeds.tsv"
  })");
}

std::string usage_message(const json& j) {
  try {
    PipelineConfig::from_json(j);
  } catch (const UsageError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("config: defaults, unknown keys and range checks") {
  PipelineConfig c = PipelineConfig::from_json(minimal_config(), "/data");
  CHECK(c.k == 10);
  CHECK(c.kind(RuleKind::kSuffix).enabled);
  CHECK(c.kind(RuleKind::kSuffix).max_rules == 50);
  CHECK(c.resolve("train.conll") == "/data/train.conll");
  CHECK(c.resolve("/abs/x") == "/abs/x");

  json j = minimal_config();
  j["seeed"] = 4;
  CHECK(usage_message(j) == "config: unknown key seeed");

  j = minimal_config();
  j["crf"] = {{"epoch", 3}};
  CHECK(usage_message(j) == "config: unknown key crf.epoch");

  j = minimal_config();
  j["rule_kinds"] = {{"suffix", {{"M", 0}}}};
  CHECK(usage_message(j).find("M must be within 1..10000") != std::string::npos);
  j["rule_kinds"] = {{"suffix", {{"M", 10001}}}};
  CHECK(usage_message(j).find("M must be within 1..10000") != std::string::npos);
  j["rule_kinds"] = {{"sufix", {{"M", 5}}}};
  CHECK(usage_message(j) == "config: unknown rule kind rule_kinds.sufix");

  j = minimal_config();
  j["graph"] = {{"k", "ten"}};
  CHECK(usage_message(j) == "config: graph.k has the wrong type");

  j = minimal_config();
  j["corpus"].erase("dev");
  CHECK(usage_message(j) == "config: missing required key corpus.dev");
}

TEST_CASE("config: canonical JSON round-trips and drives the hash") {
  json j = minimal_config();
  j["rule_kinds"] = {{"prefix", {{"enabled", false}, {"M", 7}}}};
  j["crf"] = {{"soft_labels", true}, {"l2", 0.5}};
  j["eval"] = {{"rule_match_mode", "overlap"}};
  PipelineConfig a = PipelineConfig::from_json(j);
  PipelineConfig b = PipelineConfig::from_json(json::parse(a.to_json().dump()));
  CHECK(a.to_json() == b.to_json());
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  CHECK_FALSE(b.kind(RuleKind::kPrefix).enabled);
  CHECK(b.kind(RuleKind::kPrefix).max_rules == 7);
  CHECK(b.crf.soft_labels);
  CHECK(b.rule_match_mode == MatchMode::kOverlap);

  b.output_dir = "elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  b.seed = a.seed + 1;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("stage names round-trip") {
  for (Stage s : kPipelineStages) CHECK(parse_stage(stage_name(s)) == s);
  CHECK(parse_stage("all") == Stage::kAll);
  CHECK_THROWS_AS(parse_stage("propagation"), UsageError);
}

TEST_CASE("synthetic generator is deterministic and every seed fires") {
  SynthConfig sc;
  sc.train_sentences = 200;
  sc.dev_sentences = 50;
  sc.test_sentences = 50;
  SynthData a = generate_synthetic(sc, 5);
  SynthData b = generate_synthetic(sc, 5);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK(a.train.num_sentences() == 200);
  CHECK(a.seeds.size() == 10);
  CHECK_FALSE(generate_synthetic(sc, 6).train == a.train);
  for (const auto& d : a.train.documents())
    for (const auto& s : d.sentences) REQUIRE(s.gold_spans.has_value());
}

TEST_CASE("a stage without its prerequisite names the missing stage") {
  TempDir dir("order");
  PipelineConfig cfg = synthetic_fixture(dir.str(), 3, 150, 50);
  std::ostringstream log;
  try {
    run_stage(cfg, Stage::kSelect, log);
    FAIL("select ran without propagate");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()) == "stage select: requires stage: propagate");
  }

  run_stage(cfg, Stage::kExtract, log);
  run_stage(cfg, Stage::kGraph, log);
  // A changed configuration invalidates earlier stamps.
  PipelineConfig changed = cfg;
  changed.k = 5;
  CHECK_THROWS_WITH_AS(run_stage(changed, Stage::kGraph, log), "stage graph: requires stage: extract", UsageError);
  // So does a deleted artifact.
  std::filesystem::remove(cfg.output_path("candidates.tsv"));
  CHECK_THROWS_WITH_AS(run_stage(cfg, Stage::kGraph, log), "stage graph: requires stage: extract", UsageError);
}

TEST_CASE("all equals the stages run one by one, and reruns are bit-identical") {
  TempDir dir("determinism");
  PipelineConfig cfg = synthetic_fixture(dir.str(), 4, 300, 100);
  cfg.crf.epochs = 3;
  std::ostringstream log;
  PipelineConfig one = cfg, two = cfg;
  one.output_dir = dir / "one";
  two.output_dir = dir / "two";
  run_stage(one, Stage::kAll, log);
  for (Stage s : kPipelineStages) run_stage(two, s, log);
  for (const char* f : {"label_model.glgm", "tagger.glcm", "scores.csv", "selected_rules.tsv",
                        "label_matrix_train.tsv", "marginals_train.tsv", "predictions.conll", "rule_report.tsv"}) {
    CAPTURE(f);
    CHECK(read_text_file(one.output_path(f)) == read_text_file(two.output_path(f)));
  }
  for (const auto& e : std::filesystem::directory_iterator(one.output_path("models"))) {
    const std::string name = "models/" + e.path().filename().string();
    CAPTURE(name);
    CHECK(read_text_file(one.output_path(name)) == read_text_file(two.output_path(name)));
  }
  CHECK(read_text_file(one.output_path("scores.csv")).rfind("model,split,precision,recall,f1,tp,fp,fn\n", 0) == 0);
}

TEST_CASE("ablation: one baseline step plus one step per planned kind") {
  TempDir dir("ablation");
  PipelineConfig cfg = synthetic_fixture(dir.str(), 6, 150, 50);
  cfg.crf.epochs = 2;
  cfg.output_dir = dir / "out";
  std::ostringstream log;
  auto rows = run_ablation(cfg, {}, log);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].kinds == "seeds");
  CHECK(rows[0].row.model == "seed_baseline");

  rows = run_ablation(cfg, {RuleKind::kSuffix, RuleKind::kSurfaceForm}, log);
  REQUIRE(rows.size() == 7);
  CHECK(rows[3].step == 1);
  CHECK(rows[3].kinds == "suffix");
  CHECK(rows[5].kinds == "suffix+surface");
  CHECK(rows[6].row.model == "discriminative");
  const std::string csv = read_text_file(cfg.output_path("ablation.csv"));
  CHECK(csv.rfind("step,kinds,model,split,precision,recall,f1,tp,fp,fn\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 8);
}
