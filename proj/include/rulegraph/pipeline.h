#ifndef RULEGRAPH_PIPELINE_H_
#define RULEGRAPH_PIPELINE_H_

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rulegraph/discriminative.h"
#include "rulegraph/embed.h"
#include "rulegraph/eval.h"
#include "rulegraph/generative.h"
#include "rulegraph/propagation.h"
#include "rulegraph/rules.h"

namespace rulegraph {

struct KindSettings {
  bool enabled = true;
  int max_rules = 50;  // M
  int epochs = 50;
};

// Everything one pipeline run needs. Paths are kept as written and resolved
// against `base_dir` (the config file's directory) on use.
struct PipelineConfig {
  std::string train_path;
  std::string dev_path;
  std::string test_path;
  std::string corpus_format = "auto";  // auto, jsonl or conll

  std::string embeddings_path;  // empty: hash fallback
  int fallback_dim = 64;
  std::uint64_t fallback_seed = 13;
  Pooling pooling = Pooling::kMean;

  std::string seed_rules_path;
  std::string link_votes_path;      // optional, over the train corpus
  std::vector<std::string> labels;  // empty: labels of the seed rules

  int pattern_top_k = 10;
  RuleExtractionConfig extraction;
  int k = 10;

  GatConfig gat;
  double learning_rate = 1e-4;
  LossWeights loss_weights;
  bool exclude_seeds = true;
  std::array<KindSettings, kAllRuleKinds.size()> kinds{};

  GenerativeConfig generative;
  CrfConfig crf;
  MatchMode rule_match_mode = MatchMode::kExact;

  std::uint64_t seed = 13;
  std::string output_dir = "out";
  std::string base_dir = ".";

  KindSettings& kind(RuleKind k) { return kinds[static_cast<std::size_t>(k)]; }
  const KindSettings& kind(RuleKind k) const { return kinds[static_cast<std::size_t>(k)]; }

  // Unknown keys are rejected so that typos do not pass silently; any
  // config problem raises UsageError.
  static PipelineConfig from_json(const nlohmann::json& j, const std::string& base_dir = ".");
  // Canonical form: every key, defaults filled in, output_dir omitted.
  nlohmann::ordered_json to_json() const;
  void validate() const;

  std::string resolve(const std::string& path) const;
  std::string output_path(const std::string& name) const;
};

PipelineConfig load_pipeline_config(const std::string& path);

// FNV-1a of the canonical JSON, as 16 hex digits.
std::string config_hash(const PipelineConfig& cfg);

enum class Stage { kExtract, kGraph, kPropagate, kSelect, kApply, kFitLabelModel, kTrainTagger, kEval, kAll };

inline constexpr std::array<Stage, 8> kPipelineStages = {
    Stage::kExtract, Stage::kGraph,         Stage::kPropagate,   Stage::kSelect,
    Stage::kApply,   Stage::kFitLabelModel, Stage::kTrainTagger, Stage::kEval,
};

std::string_view stage_name(Stage s);
Stage parse_stage(std::string_view name);

// Runs one stage (or all of them in order), reading earlier artifacts from
// and writing new ones to cfg.output_dir. A missing or stale artifact of an
// earlier stage raises UsageError "requires stage: NAME". Errors from the
// modules are rethrown with the stage name prepended. Progress goes to `log`.
void run_stage(const PipelineConfig& cfg, Stage stage, std::ostream& log);

struct AblationRow {
  int step = 0;
  std::string kinds;  // "+"-joined kinds enabled at this step, "seeds" for the baseline
  ScoreRow row;
};

// Baseline (seed rules only, no propagation) then one full run per prefix of
// `plan`, each in output_dir/ablation/step_N. Writes output_dir/ablation.csv.
std::vector<AblationRow> run_ablation(const PipelineConfig& cfg, const std::vector<RuleKind>& plan,
                                      std::ostream& log);

std::string format_ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace rulegraph

#endif  // RULEGRAPH_PIPELINE_H_
