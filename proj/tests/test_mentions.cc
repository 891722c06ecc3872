#include <map>

#include "doctest.h"
#include "rulegraph/common.h"
#include "rulegraph/mentions.h"

using namespace rulegraph;

namespace {

Sentence tagged(const std::vector<std::string>& words, const std::vector<std::string>& pos,
                std::optional<std::vector<Span>> gold = std::nullopt) {
  Sentence s;
  for (std::size_t i = 0; i < words.size(); ++i) s.tokens.push_back({words[i], pos[i], std::nullopt, std::nullopt});
  s.gold_spans = std::move(gold);
  return s;
}

}  // namespace

TEST_CASE("pattern parsing and printing") {
  PosPattern p = PosPattern::parse("JJ? NN+");
  REQUIRE(p.elements().size() == 2);
  CHECK(p.elements()[0].quantifier == Quantifier::kOptional);
  CHECK(p.elements()[1].quantifier == Quantifier::kOneOrMore);
  CHECK(p.to_string() == "JJ? NN+");
  CHECK_THROWS_AS(PosPattern::parse("JJ?"), DataError);
  CHECK_THROWS_AS(PosPattern::parse(""), DataError);
}

TEST_CASE("maximal matches of JJ? NN+") {
  PosPattern np = PosPattern::parse(kNounPhrasePattern);
  CHECK(np.maximal_matches({"JJ", "NN", "NN"}) == std::vector<std::pair<int, int>>{{0, 3}});
  CHECK(np.maximal_matches({"DT", "NN"}) == std::vector<std::pair<int, int>>{{1, 2}});
  CHECK(np.maximal_matches({"NN", "VB", "JJ", "NN"}) ==
        std::vector<std::pair<int, int>>{{0, 1}, {2, 4}});
  CHECK(np.maximal_matches({"JJ", "VB"}).empty());
  CHECK(np.matches({"NN", "NN"}));
  CHECK_FALSE(np.matches({"JJ"}));
}

TEST_CASE("Alzheimer 's disease with NNP POS NN") {
  Corpus c({Document{"d", {tagged({"Alzheimer", "'s", "disease"}, {"NNP", "POS", "NN"})}}});
  auto mentions = extract_candidates(c, {PosPattern::parse("NNP POS NN")});
  REQUIRE(mentions.size() == 1);
  CHECK(mentions[0].start == 0);
  CHECK(mentions[0].end == 3);
  CHECK(mention_key(c, mentions[0]) == "alzheimer_'s_disease");
}

TEST_CASE("mine_pos_patterns: frequency then lexicographic") {
  std::vector<Sentence> sents;
  for (int i = 0; i < 3; ++i) sents.push_back(tagged({"a"}, {"NN"}, std::vector<Span>{{0, 1, "D"}}));
  for (int i = 0; i < 2; ++i)
    sents.push_back(tagged({"a", "b"}, {"NNP", "NN"}, std::vector<Span>{{0, 2, "D"}}));
  for (int i = 0; i < 2; ++i)
    sents.push_back(tagged({"a", "b"}, {"JJ", "NN"}, std::vector<Span>{{0, 2, "D"}}));
  Corpus dev({Document{"d", sents}});
  auto got = mine_pos_patterns(dev, 2);
  REQUIRE(got.size() == 3);
  CHECK(got[0].to_string() == "JJ? NN+");
  CHECK(got[1].to_string() == "NN");
  CHECK(got[2].to_string() == "JJ NN");
  auto none = mine_pos_patterns(dev, 0);
  REQUIRE(none.size() == 1);
  CHECK(none[0].to_string() == "JJ? NN+");

  Corpus no_gold({Document{"d", {tagged({"a"}, {"NN"})}}});
  CHECK(mine_pos_patterns(no_gold, 5).size() == 1);
}

TEST_CASE("mine_pos_patterns against a hand count on a ten-span fixture") {
  // Span POS sequences: NN x4, JJ NN x3, NNP POS NN x2, NN NN x1.
  std::vector<Sentence> sents = {
      tagged({"the", "tumor", "and", "colitis"}, {"DT", "NN", "CC", "NN"},
             std::vector<Span>{{1, 2, "D"}, {3, 4, "D"}}),
      tagged({"renal", "carcinoma", "in", "anemia"}, {"JJ", "NN", "IN", "NN"},
             std::vector<Span>{{0, 2, "D"}, {3, 4, "D"}}),
      tagged({"acute", "hepatitis", "with", "sepsis"}, {"JJ", "NN", "IN", "NN"},
             std::vector<Span>{{0, 2, "D"}, {3, 4, "D"}}),
      tagged({"Alzheimer", "'s", "disease"}, {"NNP", "POS", "NN"}, std::vector<Span>{{0, 3, "D"}}),
      tagged({"Parkinson", "'s", "disease", "and", "malignant", "melanoma"},
             {"NNP", "POS", "NN", "CC", "JJ", "NN"}, std::vector<Span>{{0, 3, "D"}, {4, 6, "D"}}),
      tagged({"breast", "cancer"}, {"NN", "NN"}, std::vector<Span>{{0, 2, "D"}}),
  };
  Corpus dev({Document{"d", sents}});
  auto got = mine_pos_patterns(dev, 15);
  REQUIRE(got.size() == 5);
  CHECK(got[1].to_string() == "NN");
  CHECK(got[2].to_string() == "JJ NN");
  CHECK(got[3].to_string() == "NNP POS NN");
  CHECK(got[4].to_string() == "NN NN");
}

TEST_CASE("extract_candidates dedups across patterns and sorts") {
  Corpus c({Document{"d",
                     {tagged({"renal", "cell", "carcinoma", "of", "Alzheimer", "'s", "disease"},
                             {"JJ", "NN", "NN", "IN", "NNP", "POS", "NN"})}}});
  std::vector<PosPattern> patterns = {PosPattern::parse("JJ? NN+"), PosPattern::parse("JJ NN NN"),
                                      PosPattern::parse("NNP POS NN")};
  auto m = extract_candidates(c, patterns);
  REQUIRE(m.size() == 3);
  CHECK(m[0].key() == std::make_tuple(0, 0, 0, 3));
  CHECK(m[0].pattern_id == "JJ? NN+");
  CHECK(m[1].key() == std::make_tuple(0, 0, 4, 7));
  CHECK(m[1].pattern_id == "NNP POS NN");
  CHECK(m[2].key() == std::make_tuple(0, 0, 6, 7));

  // Every mention satisfies one of the patterns on its own POS sequence.
  for (const auto& x : m) {
    auto tags = pos_sequence(c.sentence(0, 0), x.start, x.end);
    bool any = false;
    for (const auto& p : patterns) any = any || p.matches(tags);
    CHECK(any);
  }
  CHECK(extract_candidates(c, patterns).size() == m.size());
}

TEST_CASE("maximal_matches against brute force") {
  Rng rng(3);
  const std::vector<std::string> alphabet = {"JJ", "NN", "DT"};
  const std::vector<PosPattern> patterns = {PosPattern::parse("JJ? NN+"), PosPattern::parse("NN JJ? NN"),
                                            PosPattern::parse("DT+ NN?")};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> tags(1 + rng.below(8));
    for (auto& t : tags) t = alphabet[rng.below(alphabet.size())];
    for (const auto& p : patterns) {
      std::vector<std::pair<int, int>> all;
      const int n = static_cast<int>(tags.size());
      for (int s = 0; s < n; ++s)
        for (int e = s + 1; e <= n; ++e)
          if (p.matches(std::vector<std::string>(tags.begin() + s, tags.begin() + e))) all.push_back({s, e});
      std::vector<std::pair<int, int>> maximal;
      for (auto a : all) {
        bool contained = false;
        for (auto b : all) contained = contained || (b != a && b.first <= a.first && a.second <= b.second);
        if (!contained) maximal.push_back(a);
      }
      CHECK(p.maximal_matches(tags) == maximal);
    }
  }
}
