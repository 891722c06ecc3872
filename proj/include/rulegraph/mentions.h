#ifndef RULEGRAPH_MENTIONS_H_
#define RULEGRAPH_MENTIONS_H_

#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "rulegraph/corpus.h"

namespace rulegraph {

enum class Quantifier { kOne, kOptional, kOneOrMore };

struct PosElement {
  std::string tag;
  Quantifier quantifier = Quantifier::kOne;

  bool operator==(const PosElement&) const = default;
};

// A sequence of POS-tag matchers written like "JJ? NN+".
class PosPattern {
 public:
  explicit PosPattern(std::vector<PosElement> elements);
  static PosPattern parse(std::string_view text);
  // All elements exactly-one.
  static PosPattern literal(const std::vector<std::string>& tags);

  const std::vector<PosElement>& elements() const { return elements_; }
  std::string to_string() const;

  // True iff the whole tag sequence is accepted.
  bool matches(const std::vector<std::string>& tags) const;
  // For every start position, the end positions (exclusive) of non-empty matches.
  std::vector<std::vector<int>> match_ends(const std::vector<std::string>& tags) const;
  // Matches not properly contained in another match of this pattern, sorted.
  std::vector<std::pair<int, int>> maximal_matches(const std::vector<std::string>& tags) const;

  bool operator==(const PosPattern&) const = default;

 private:
  std::vector<PosElement> elements_;
};

inline constexpr std::string_view kNounPhrasePattern = "JJ? NN+";

struct CandidateMention {
  int doc = 0;
  int sent = 0;
  int start = 0;
  int end = 0;
  std::string pattern_id;

  int length() const { return end - start; }
  auto key() const { return std::make_tuple(doc, sent, start, end); }
};

std::vector<std::string> pos_sequence(const Sentence& sentence, int start, int end);

// Most frequent exact POS sequences of gold spans, preceded by "JJ? NN+".
std::vector<PosPattern> mine_pos_patterns(const Corpus& dev, int top_k);

// Maximal matches per pattern, deduplicated across patterns (first pattern
// wins) and sorted by (doc, sent, start, end).
std::vector<CandidateMention> extract_candidates(const Corpus& corpus,
                                                 const std::vector<PosPattern>& patterns);

// Lowercased span text joined by "_".
std::string mention_key(const Corpus& corpus, const CandidateMention& m);

}  // namespace rulegraph

#endif  // RULEGRAPH_MENTIONS_H_
