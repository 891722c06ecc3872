#include "rulegraph/eval.h"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include "rulegraph/common.h"

namespace rulegraph {

SpanScore SpanScore::from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  SpanScore s;
  s.tp = tp;
  s.fp = fp;
  s.fn = fn;
  s.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  s.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  s.f1 = s.precision + s.recall == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

SpanScore span_f1(const std::vector<std::vector<Span>>& pred, const std::vector<std::vector<Span>>& gold) {
  if (pred.size() != gold.size()) {
    throw DataError("prediction has " + std::to_string(pred.size()) + " sentences, gold has " +
                    std::to_string(gold.size()));
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    auto key = [](const Span& s) { return std::make_tuple(s.start, s.end, s.label); };
    std::set<std::tuple<int, int, std::string>> p, g;
    for (const auto& s : pred[i]) p.insert(key(s));
    for (const auto& s : gold[i]) g.insert(key(s));
    for (const auto& s : p) (g.count(s) ? tp : fp) += 1;
    for (const auto& s : g)
      if (!p.count(s)) ++fn;
  }
  return SpanScore::from_counts(tp, fp, fn);
}

std::vector<std::vector<Span>> corpus_gold_spans(const Corpus& corpus) {
  std::vector<std::vector<Span>> out;
  for (const auto& d : corpus.documents())
    for (std::size_t s = 0; s < d.sentences.size(); ++s) {
      if (!d.sentences[s].gold_spans) {
        throw DataError("sentence " + d.id + "/" + std::to_string(s) + " has no gold annotation");
      }
      out.push_back(*d.sentences[s].gold_spans);
    }
  return out;
}

SpanScore span_f1(const std::vector<std::vector<std::string>>& pred_bio, const Corpus& gold) {
  auto gold_spans = corpus_gold_spans(gold);
  if (pred_bio.size() != gold_spans.size()) {
    throw DataError("prediction has " + std::to_string(pred_bio.size()) + " sentences, gold has " +
                    std::to_string(gold_spans.size()));
  }
  std::vector<std::vector<Span>> pred;
  std::size_t i = 0;
  for (const auto& d : gold.documents())
    for (const auto& s : d.sentences) {
      if (static_cast<int>(pred_bio[i].size()) != s.size()) {
        throw DataError("sentence " + std::to_string(i) + ": " + std::to_string(pred_bio[i].size()) +
                        " predicted tags for " + std::to_string(s.size()) + " tokens");
      }
      pred.push_back(spans_from_bio(pred_bio[i]));
      ++i;
    }
  return span_f1(pred, gold_spans);
}

namespace {

bool match_correct(const Rule& rule, const CandidateMention& m, const std::vector<Span>& gold, MatchMode mode) {
  if (rule.polarity == Polarity::kNegative) {
    for (const auto& g : gold)
      if (m.start < g.end && g.start < m.end) return false;
    return true;
  }
  if (mode == MatchMode::kExact) {
    for (const auto& g : gold)
      if (g.start == m.start && g.end == m.end && g.label == rule.label) return true;
    return false;
  }
  for (int t = m.start; t < m.end; ++t) {
    bool inside = false;
    for (const auto& g : gold) inside = inside || (g.label == rule.label && g.start <= t && t < g.end);
    if (!inside) return false;
  }
  return true;
}

}  // namespace

RuleReport rule_accuracy_report(const RuleSet& rules, const Corpus& dev,
                                const std::vector<CandidateMention>& dev_mentions, MatchMode mode) {
  RuleReport report;
  std::map<RuleKind, KindSummary> kinds;
  for (const Rule& rule : rules.rules()) {
    RuleReportEntry e{rule, 0, 0, std::nullopt};
    for (std::size_t idx : match_rule(rule, dev, dev_mentions)) {
      const CandidateMention& m = dev_mentions[idx];
      const auto& gold = dev.sentence(m.doc, m.sent).gold_spans;
      if (!gold) throw DataError("dev sentence " + std::to_string(m.doc) + "/" + std::to_string(m.sent) +
                                 " has no gold annotation");
      ++e.matches;
      if (match_correct(rule, m, *gold, mode)) ++e.correct;
    }
    KindSummary& k = kinds[rule.kind];
    k.kind = rule.kind;
    if (e.matches == 0) {
      ++k.uncovered;
    } else {
      e.accuracy = static_cast<double>(e.correct) / static_cast<double>(e.matches);
      ++k.rules;
      k.matches += e.matches;
      k.correct += e.correct;
      k.mean_accuracy += *e.accuracy;
    }
    report.rules.push_back(std::move(e));
  }
  for (auto& [kind, k] : kinds) {
    if (k.rules > 0) {
      k.accuracy = static_cast<double>(k.correct) / static_cast<double>(k.matches);
      k.mean_accuracy /= static_cast<double>(k.rules);
    }
    report.kinds.push_back(k);
  }
  return report;
}

std::string format_rule_report(const RuleReport& report) {
  std::string out = "kind\trule\tlabel\tpolarity\tmatches\tcorrect\taccuracy\n";
  for (const auto& e : report.rules) {
    out += std::string(kind_name(e.rule.kind)) + "\t" + e.rule.display() + "\t" + e.rule.label + "\t" +
           (e.rule.polarity == Polarity::kPositive ? "pos" : "neg") + "\t" + std::to_string(e.matches) + "\t" +
           std::to_string(e.correct) + "\t" + (e.accuracy ? format_fixed(*e.accuracy, 4) : "no coverage") + "\n";
  }
  out += "\nkind\trules\tuncovered\tmatches\tcorrect\taccuracy\tmean_rule_accuracy\n";
  for (const auto& k : report.kinds) {
    out += std::string(kind_name(k.kind)) + "\t" + std::to_string(k.rules) + "\t" + std::to_string(k.uncovered) +
           "\t" + std::to_string(k.matches) + "\t" + std::to_string(k.correct) + "\t" +
           (k.rules > 0 ? format_fixed(k.accuracy, 4) : "no coverage") + "\t" +
           (k.rules > 0 ? format_fixed(k.mean_accuracy, 4) : "no coverage") + "\n";
  }
  return out;
}

std::string format_predictions(const Corpus& corpus, const std::vector<std::vector<std::string>>& pred_bio) {
  if (pred_bio.size() != corpus.num_sentences()) throw DataError("prediction count does not match corpus");
  std::string out;
  std::size_t i = 0;
  for (const auto& d : corpus.documents())
    for (const auto& s : d.sentences) {
      const auto& pred = pred_bio[i++];
      if (static_cast<int>(pred.size()) != s.size()) throw DataError("prediction length does not match sentence");
      std::vector<std::string> gold;
      if (s.gold_spans) gold = bio_from_spans(*s.gold_spans, s.size());
      for (int t = 0; t < s.size(); ++t)
        out += s.tokens[t].text + "\t" + (gold.empty() ? std::string("_") : gold[t]) + "\t" + pred[t] + "\n";
      out += "\n";
    }
  return out;
}

std::string format_scores_csv(const std::vector<ScoreRow>& rows) {
  std::string out = "model,split,precision,recall,f1,tp,fp,fn\n";
  for (const auto& r : rows) {
    out += r.model + "," + r.split + "," + format_fixed(r.score.precision, 6) + "," +
           format_fixed(r.score.recall, 6) + "," + format_fixed(r.score.f1, 6) + "," + std::to_string(r.score.tp) +
           "," + std::to_string(r.score.fp) + "," + std::to_string(r.score.fn) + "\n";
  }
  return out;
}

}  // namespace rulegraph
