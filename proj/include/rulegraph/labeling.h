#ifndef RULEGRAPH_LABELING_H_
#define RULEGRAPH_LABELING_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rulegraph/corpus.h"
#include "rulegraph/mentions.h"
#include "rulegraph/rules.h"

namespace rulegraph {

struct TokenVote {
  int rule = 0;
  std::string label;  // "O" or an entity label; abstentions are not stored

  bool operator==(const TokenVote&) const = default;
};

// Sparse token x rule vote table over the global token numbering of a corpus.
class LabelMatrix {
 public:
  LabelMatrix() = default;
  LabelMatrix(std::size_t num_tokens, std::size_t num_rules);

  std::size_t num_tokens() const { return votes_.size(); }
  std::size_t num_rules() const { return num_rules_; }
  std::size_t num_votes() const { return count_; }

  // Repeating an identical (token, rule, label) vote is a no-op; a different
  // label for the same (token, rule) is a DataError.
  void add(std::size_t token, int rule, std::string label);
  // Votes of one token sorted by rule index.
  const std::vector<TokenVote>& votes(std::size_t token) const { return votes_.at(token); }

  bool operator==(const LabelMatrix&) const = default;

 private:
  std::size_t num_rules_ = 0;
  std::size_t count_ = 0;
  std::vector<std::vector<TokenVote>> votes_;
};

// Every token of every matched mention gets the rule's vote. Uses the rule
// set's match index when present, otherwise matches from scratch.
LabelMatrix apply_rules(const RuleSet& rules, const Corpus& corpus,
                        const std::vector<CandidateMention>& mentions);

// doc<TAB>sent<TAB>tok<TAB>rule_idx<TAB>VOTE, doc as a corpus index, rows
// ordered by global token then rule.
std::string format_label_matrix(const LabelMatrix& m, const Corpus& corpus);
LabelMatrix parse_label_matrix(std::string_view text, const Corpus& corpus, std::size_t num_rules);
void save_label_matrix(const LabelMatrix& m, const Corpus& corpus, const std::string& path);
LabelMatrix load_label_matrix(const std::string& path, const Corpus& corpus, std::size_t num_rules);

enum class LinkVote : std::uint8_t { kAbstain = 0, kLink = 1, kBreak = 2 };

// Link votes per source, indexed by the global index of the right-hand token
// of each within-sentence adjacent pair. Sentence-initial tokens never vote.
class LinkTable {
 public:
  LinkTable() = default;
  LinkTable(std::size_t num_tokens, std::size_t num_sources);

  std::size_t num_tokens() const { return num_tokens_; }
  std::size_t num_sources() const { return votes_.size(); }
  LinkVote vote(std::size_t source, std::size_t right_token) const {
    return votes_.at(source).at(right_token);
  }
  void set(std::size_t source, std::size_t right_token, LinkVote v);
  bool any_vote(std::size_t right_token) const;

  // Appends the sources of another table over the same corpus.
  void append_sources(const LinkTable& other);

  bool operator==(const LinkTable&) const = default;

 private:
  std::size_t num_tokens_ = 0;
  std::vector<std::vector<LinkVote>> votes_;
};

// doc<TAB>sent<TAB>right_token_idx<TAB>LINK|BREAK as one source. Pairs not
// listed abstain.
LinkTable parse_link_votes(std::string_view text, const Corpus& corpus);
LinkTable load_link_votes(const std::string& path, const Corpus& corpus);
// Writes one source.
std::string format_link_votes(const LinkTable& links, std::size_t source, const Corpus& corpus);

// Converts one sentence of IO labels ("O" or a class) to BIO. A new span
// starts at a class change or where split_before[t] is set.
std::vector<std::string> io_to_bio(const std::vector<std::string>& io,
                                   const std::vector<bool>& split_before = {});

// Pairs of a sentence where BREAK votes outnumber LINK votes.
std::vector<bool> link_splits(const LinkTable& links, std::size_t sentence_offset, int length);

}  // namespace rulegraph

#endif  // RULEGRAPH_LABELING_H_
