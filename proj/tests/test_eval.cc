#include <algorithm>

#include "doctest.h"
#include "rulegraph/common.h"
#include "rulegraph/eval.h"

using namespace rulegraph;

namespace {

Sentence tagged(const std::vector<std::string>& words, std::vector<Span> gold) {
  Sentence s;
  for (const auto& w : words) s.tokens.push_back({w, "NN", std::nullopt, std::nullopt});
  s.gold_spans = std::move(gold);
  return s;
}

}  // namespace

TEST_CASE("span F1 formula cases") {
  std::vector<std::vector<Span>> gold = {{{0, 1, "D"}, {3, 5, "D"}}};
  SpanScore same = span_f1(gold, gold);
  CHECK(same.precision == 1.0);
  CHECK(same.recall == 1.0);
  CHECK(same.f1 == 1.0);

  SpanScore half = span_f1({{{0, 1, "D"}}}, gold);
  CHECK(half.precision == 1.0);
  CHECK(half.recall == 0.5);
  CHECK(half.f1 == doctest::Approx(2.0 / 3.0));

  SpanScore off = span_f1({{{0, 1, "D"}, {3, 4, "D"}}}, gold);
  CHECK(off.tp == 1);
  CHECK(off.fp == 1);
  CHECK(off.fn == 1);

  SpanScore wrong_label = span_f1({{{0, 1, "C"}}}, {{{0, 1, "D"}}});
  CHECK(wrong_label.tp == 0);

  SpanScore none = span_f1(std::vector<std::vector<Span>>{{}}, std::vector<std::vector<Span>>{{}});
  CHECK(none.f1 == 0.0);
  CHECK_THROWS_AS(span_f1(gold, std::vector<std::vector<Span>>{}), DataError);
}

TEST_CASE("span F1 counts and reordering invariance") {
  Rng rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::vector<Span>> pred, gold;
    std::size_t np = 0, ng = 0;
    for (int s = 0; s < 6; ++s) {
      std::vector<Span> p, g;
      for (int t = 0; t < 10; t += 2) {
        if (rng.bernoulli(0.3)) g.push_back({t, t + 1 + static_cast<int>(rng.below(2)), rng.bernoulli(0.5) ? "A" : "B"});
        if (rng.bernoulli(0.3)) p.push_back({t, t + 1 + static_cast<int>(rng.below(2)), rng.bernoulli(0.5) ? "A" : "B"});
      }
      np += p.size();
      ng += g.size();
      pred.push_back(p);
      gold.push_back(g);
    }
    SpanScore a = span_f1(pred, gold);
    CHECK(a.tp + a.fp == np);
    CHECK(a.tp + a.fn == ng);
    std::reverse(pred.begin(), pred.end());
    std::reverse(gold.begin(), gold.end());
    SpanScore b = span_f1(pred, gold);
    CHECK(b.tp == a.tp);
    CHECK(b.f1 == a.f1);
  }
}

TEST_CASE("span F1 from BIO predictions") {
  Corpus c({Document{"d", {tagged({"a", "b", "c"}, {{1, 3, "D"}})}}});
  CHECK(span_f1({{"O", "B-D", "I-D"}}, c).f1 == 1.0);
  CHECK(span_f1({{"O", "B-D", "B-D"}}, c).tp == 0);
  CHECK_THROWS_AS(span_f1({{"O", "O"}}, c), DataError);
  Corpus no_gold({Document{"d", {Sentence{{{"a", "NN", std::nullopt, std::nullopt}}, std::nullopt}}}});
  CHECK_THROWS_AS(span_f1({{"O"}}, no_gold), DataError);
}

TEST_CASE("rule accuracy report") {
  // Sentence 0: "renal carcinoma" gold, "melanoma" gold; sentence 1: "carcinoma" not gold.
  Corpus dev({Document{"d",
                       {tagged({"renal", "carcinoma", "and", "melanoma"}, {{0, 2, "D"}, {3, 4, "D"}}),
                        tagged({"carcinoma", "cells", "melanoma"}, {{2, 3, "D"}})}}});
  std::vector<CandidateMention> ms = {{0, 0, 0, 2, "p"}, {0, 0, 1, 2, "p"}, {0, 0, 3, 4, "p"},
                                      {0, 1, 0, 1, "p"}, {0, 1, 1, 2, "p"}, {0, 1, 2, 3, "p"}};
  RuleSet rules;
  rules.add(Rule{RuleKind::kSuffix, "noma", "D", Polarity::kPositive});      // 4 matches
  rules.add(Rule{RuleKind::kSurfaceForm, "melanoma", "D", Polarity::kPositive});
  rules.add(Rule{RuleKind::kSurfaceForm, "cells", "D", Polarity::kNegative});
  rules.add(Rule{RuleKind::kSurfaceForm, "zebra", "D", Polarity::kPositive});

  RuleReport exact = rule_accuracy_report(rules, dev, ms, MatchMode::kExact);
  REQUIRE(exact.rules.size() == 4);
  // *noma matches carcinoma (0,1)-(1,2), melanoma x2, carcinoma (1,0): 2 of 4 exact.
  CHECK(exact.rules[0].matches == 4);
  CHECK(exact.rules[0].correct == 2);
  CHECK(*exact.rules[0].accuracy == doctest::Approx(0.5));
  CHECK(*exact.rules[1].accuracy == 1.0);
  CHECK(*exact.rules[2].accuracy == 1.0);
  CHECK_FALSE(exact.rules[3].accuracy.has_value());

  RuleReport overlap = rule_accuracy_report(rules, dev, ms, MatchMode::kOverlap);
  // Overlap mode also credits "carcinoma" inside "renal carcinoma".
  CHECK(overlap.rules[0].correct == 3);

  REQUIRE(exact.kinds.size() == 2);
  CHECK(exact.kinds[0].kind == RuleKind::kSurfaceForm);
  CHECK(exact.kinds[0].rules == 2);
  CHECK(exact.kinds[0].uncovered == 1);
  CHECK(exact.kinds[1].accuracy == doctest::Approx(0.5));

  const std::string text = format_rule_report(exact);
  CHECK(text.find("surface\tzebra\tD\tpos\t0\t0\tno coverage\n") != std::string::npos);
  CHECK(text.find("suffix\t*noma\tD\tpos\t4\t2\t0.5000\n") != std::string::npos);
}

TEST_CASE("three matches, two correct") {
  Corpus dev({Document{"d", {tagged({"flu", "flu", "flu"}, {{0, 1, "D"}, {2, 3, "D"}})}}});
  std::vector<CandidateMention> ms = {{0, 0, 0, 1, "p"}, {0, 0, 1, 2, "p"}, {0, 0, 2, 3, "p"}};
  RuleSet rules;
  rules.add(Rule{RuleKind::kSurfaceForm, "flu", "D", Polarity::kPositive});
  RuleReport r = rule_accuracy_report(rules, dev, ms);
  CHECK(*r.rules[0].accuracy == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("rule report agrees with a naive token scan") {
  Rng rng(17);
  const std::vector<std::string> vocab = {"flu", "fever", "the", "acute", "flu"};
  for (int trial = 0; trial < 10; ++trial) {
    Document d{"d", {}};
    std::vector<CandidateMention> ms;
    for (int s = 0; s < 5; ++s) {
      std::vector<std::string> words;
      std::vector<Span> gold;
      for (int t = 0; t < 6; ++t) words.push_back(vocab[rng.below(vocab.size())]);
      for (int t = 0; t < 6; ++t) {
        if (rng.bernoulli(0.3)) gold.push_back({t, t + 1, "D"});
        ms.push_back({0, s, t, t + 1, "p"});
        if (t + 2 <= 6 && rng.bernoulli(0.3)) ms.push_back({0, s, t, t + 2, "p"});
      }
      d.sentences.push_back(tagged(words, gold));
    }
    Corpus dev({d});
    RuleSet rules;
    rules.add(Rule{RuleKind::kSurfaceForm, "flu", "D", Polarity::kPositive});
    rules.add(Rule{RuleKind::kSurfaceForm, "the", "D", Polarity::kNegative});
    rules.add(Rule{RuleKind::kPreNgramInclusive, "acute", "D", Polarity::kPositive});
    for (MatchMode mode : {MatchMode::kExact, MatchMode::kOverlap}) {
      RuleReport r = rule_accuracy_report(rules, dev, ms, mode);
      for (std::size_t i = 0; i < rules.size(); ++i) {
        std::size_t matches = 0, correct = 0;
        for (const auto& m : ms) {
          if (!rule_matches(rules.rule(i), dev, m)) continue;
          ++matches;
          const auto& g = *dev.sentence(m.doc, m.sent).gold_spans;
          std::vector<int> in_gold(6, 0);
          for (const auto& sp : g)
            for (int t = sp.start; t < sp.end; ++t) in_gold[t] = 1;
          bool ok;
          if (rules.rule(i).polarity == Polarity::kNegative) {
            ok = true;
            for (int t = m.start; t < m.end; ++t) ok = ok && !in_gold[t];
          } else if (mode == MatchMode::kExact) {
            ok = std::find(g.begin(), g.end(), Span{m.start, m.end, "D"}) != g.end();
          } else {
            ok = true;
            for (int t = m.start; t < m.end; ++t) ok = ok && in_gold[t];
          }
          if (ok) ++correct;
        }
        CHECK(r.rules[i].matches == matches);
        CHECK(r.rules[i].correct == correct);
      }
    }
  }
}

TEST_CASE("prediction and score output") {
  Corpus c({Document{"d", {tagged({"renal", "failure"}, {{0, 2, "D"}})}}});
  CHECK(format_predictions(c, {{"B-D", "O"}}) == "renal\tB-D\tB-D\nfailure\tI-D\tO\n\n");
  Corpus bare({Document{"d", {Sentence{{{"x", "NN", std::nullopt, std::nullopt}}, std::nullopt}}}});
  CHECK(format_predictions(bare, {{"O"}}) == "x\t_\tO\n\n");
  std::vector<ScoreRow> rows = {{"generative", "test", SpanScore::from_counts(1, 1, 0)}};
  CHECK(format_scores_csv(rows) ==
        "model,split,precision,recall,f1,tp,fp,fn\ngenerative,test,0.500000,1.000000,0.666667,1,1,0\n");
}
