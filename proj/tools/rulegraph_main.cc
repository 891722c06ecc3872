// rulegraph: command-line driver for the rule propagation pipeline.
//
//   rulegraph <stage> --config cfg.json [--out DIR] [--seed N]
//   rulegraph ablate --config cfg.json --plan suffix,surface
//   rulegraph write-embeddings --corpus train.conll --out emb.bin
//   rulegraph synth --out DIR
//
// Exit status: 0 success, 1 usage, 2 data error, 3 numeric failure.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rulegraph/common.h"
#include "rulegraph/corpus.h"
#include "rulegraph/embed.h"
#include "rulegraph/pipeline.h"
#include "rulegraph/synthetic.h"

namespace fs = std::filesystem;
using namespace rulegraph;

namespace {

struct RunOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--config", o.config, "pipeline configuration (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "output directory (overrides output_dir)");
  cmd->add_option("--seed", o.seed, "global seed (overrides seed)");
}

PipelineConfig load_config(const RunOptions& o) {
  PipelineConfig cfg = load_pipeline_config(o.config);
  if (!o.out.empty()) cfg.output_dir = fs::absolute(o.out).string();
  if (o.seed) cfg.seed = *o.seed;
  return cfg;
}

std::vector<RuleKind> parse_plan(const std::string& text) {
  std::vector<RuleKind> plan;
  for (const auto& name : split(text, ',')) {
    if (name.empty()) continue;
    try {
      plan.push_back(parse_kind(name));
    } catch (const DataError&) {
      throw UsageError("unknown rule kind in --plan: " + name);
    }
  }
  return plan;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rule propagation for weakly supervised named entity tagging"};
  app.require_subcommand(1);

  RunOptions run;
  std::vector<std::pair<CLI::App*, Stage>> stage_cmds;
  for (Stage s : kPipelineStages) {
    std::string name(stage_name(s));
    stage_cmds.emplace_back(app.add_subcommand(name, "run the " + name + " stage"), s);
  }
  stage_cmds.emplace_back(app.add_subcommand("all", "run every stage in order"), Stage::kAll);
  for (auto& [cmd, s] : stage_cmds) add_run_options(cmd, run);

  std::string plan_text;
  CLI::App* ablate = app.add_subcommand("ablate", "add rule kinds one at a time and score each step");
  add_run_options(ablate, run);
  ablate->add_option("--plan", plan_text, "comma-separated rule kinds, in order")->required();

  std::string emb_corpus, emb_out, emb_format = "auto";
  int emb_dim = 64;
  std::uint64_t emb_seed = 13;
  CLI::App* embed = app.add_subcommand("write-embeddings", "write hash-fallback token embeddings (GLRE)");
  embed->add_option("--corpus", emb_corpus, "corpus file")->required()->check(CLI::ExistingFile);
  embed->add_option("--out", emb_out, "output file")->required();
  embed->add_option("--format", emb_format, "auto, jsonl or conll");
  embed->add_option("--dim", emb_dim, "embedding dimension")->check(CLI::PositiveNumber);
  embed->add_option("--seed", emb_seed, "hash seed");

  std::string synth_out;
  std::uint64_t synth_seed = 13;
  SynthConfig synth_cfg;
  CLI::App* synth = app.add_subcommand("synth", "generate the synthetic corpus, seeds and config");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--train", synth_cfg.train_sentences, "train sentences")->check(CLI::PositiveNumber);
  synth->add_option("--dev", synth_cfg.dev_sentences, "dev sentences")->check(CLI::PositiveNumber);
  synth->add_option("--test", synth_cfg.test_sentences, "test sentences")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    for (auto& [cmd, s] : stage_cmds) {
      if (*cmd) {
        run_stage(load_config(run), s, std::cerr);
        return 0;
      }
    }
    if (*ablate) {
      auto plan = parse_plan(plan_text);
      PipelineConfig cfg = load_config(run);
      auto rows = run_ablation(cfg, plan, std::cerr);
      std::cout << format_ablation_csv(rows);
    } else if (*embed) {
      CorpusFormat f = emb_format == "auto"    ? guess_corpus_format(emb_corpus)
                       : emb_format == "jsonl" ? CorpusFormat::kJsonl
                       : emb_format == "conll" ? CorpusFormat::kConllTsv
                                               : throw UsageError("--format must be auto, jsonl or conll");
      Corpus corpus = load_corpus(emb_corpus, f);
      write_embedding_table(hash_fallback_embed(corpus, emb_dim, emb_seed), emb_out);
    } else if (*synth) {
      write_synthetic(generate_synthetic(synth_cfg, synth_seed), synth_out, synth_seed);
    }
  } catch (const UsageError& e) {
    std::cerr << "rulegraph: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "rulegraph: data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "rulegraph: numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "rulegraph: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
