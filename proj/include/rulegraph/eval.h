#ifndef RULEGRAPH_EVAL_H_
#define RULEGRAPH_EVAL_H_

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "rulegraph/corpus.h"
#include "rulegraph/mentions.h"
#include "rulegraph/rules.h"

namespace rulegraph {

// Micro-averaged exact labeled span scores.
struct SpanScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  static SpanScore from_counts(std::size_t tp, std::size_t fp, std::size_t fn);
};

// Per-sentence spans; both lists must have the same sentence count.
SpanScore span_f1(const std::vector<std::vector<Span>>& pred, const std::vector<std::vector<Span>>& gold);
// BIO predictions per sentence (corpus order) against the corpus gold spans.
// Throws DataError on a sentence or token count mismatch or missing gold.
SpanScore span_f1(const std::vector<std::vector<std::string>>& pred_bio, const Corpus& gold);

// Gold spans per sentence in corpus order.
std::vector<std::vector<Span>> corpus_gold_spans(const Corpus& corpus);

enum class MatchMode {
  kExact,    // the matched mention equals a gold span of the rule's label
  kOverlap,  // every matched token lies inside a gold span of the rule's label
};

// Negative rules count a match as correct when none of its tokens lies
// inside any gold span, in both modes.
struct RuleReportEntry {
  Rule rule;
  std::size_t matches = 0;
  std::size_t correct = 0;
  // Absent when the rule has no dev matches ("no coverage").
  std::optional<double> accuracy;
};

struct KindSummary {
  RuleKind kind = RuleKind::kSurfaceForm;
  std::size_t rules = 0;      // rules with coverage
  std::size_t uncovered = 0;  // rules without dev matches
  std::size_t matches = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;       // correct / matches over covered rules
  double mean_accuracy = 0.0;  // unweighted mean of per-rule accuracies
};

struct RuleReport {
  std::vector<RuleReportEntry> rules;
  std::vector<KindSummary> kinds;  // kinds with at least one rule, in enum order
};

RuleReport rule_accuracy_report(const RuleSet& rules, const Corpus& dev,
                                const std::vector<CandidateMention>& dev_mentions,
                                MatchMode mode = MatchMode::kExact);

// Per-rule rows (kind, rule, label, polarity, matches, correct, accuracy or
// "no coverage"), a blank line, then per-kind rows.
std::string format_rule_report(const RuleReport& report);

// TOKEN<TAB>GOLD<TAB>PRED per token and a blank line after each sentence;
// GOLD is "_" when the corpus has no annotation.
std::string format_predictions(const Corpus& corpus, const std::vector<std::vector<std::string>>& pred_bio);

struct ScoreRow {
  std::string model;
  std::string split;
  SpanScore score;
};

// model,split,precision,recall,f1,tp,fp,fn
std::string format_scores_csv(const std::vector<ScoreRow>& rows);

}  // namespace rulegraph

#endif  // RULEGRAPH_EVAL_H_
