#ifndef RULEGRAPH_RULES_H_
#define RULEGRAPH_RULES_H_

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rulegraph/corpus.h"
#include "rulegraph/mentions.h"

namespace rulegraph {

inline constexpr std::string_view kOutsideLabel = "O";

enum class RuleKind {
  kSurfaceForm,
  kPrefix,
  kSuffix,
  kPreNgramInclusive,
  kPreNgramExclusive,
  kPostNgramInclusive,
  kPostNgramExclusive,
  kDepFirstToken,
  kDepSecondLast,
};

inline constexpr std::array<RuleKind, 9> kAllRuleKinds = {
    RuleKind::kSurfaceForm,        RuleKind::kPrefix,
    RuleKind::kSuffix,             RuleKind::kPreNgramInclusive,
    RuleKind::kPreNgramExclusive,  RuleKind::kPostNgramInclusive,
    RuleKind::kPostNgramExclusive, RuleKind::kDepFirstToken,
    RuleKind::kDepSecondLast,
};

// Seed-file spelling: surface, prefix, suffix, prengram_in, ...
std::string_view kind_name(RuleKind kind);
RuleKind parse_kind(std::string_view name);

enum class Polarity { kPositive, kNegative };

struct Rule {
  RuleKind kind = RuleKind::kSurfaceForm;
  // Payload without wildcards: "noma" for *noma, "cause_of" for cause_of_*,
  // "amod_dystrophy" for a dependency rule (relation, then last token).
  std::string key;
  std::string label;
  Polarity polarity = Polarity::kPositive;

  // The label this rule votes: its own label, or "O" for negative rules.
  std::string vote() const {
    return polarity == Polarity::kPositive ? label : std::string(kOutsideLabel);
  }
  // Human-readable form with wildcards, e.g. "*noma" or "cause_of_*".
  std::string display() const;

  bool same_pattern(const Rule& o) const { return kind == o.kind && key == o.key; }
  bool operator==(const Rule&) const = default;
};

struct RuleExtractionConfig {
  int affix_min = 3;
  int affix_max = 6;
  int ngram_min = 1;
  int ngram_max = 3;
  int min_support = 2;

  void validate() const;
};

// Rules plus, when indexed, the candidate mentions each rule matches
// (indices into the mention list the set was built against).
class RuleSet {
 public:
  RuleSet() = default;

  // Throws DataError on a duplicate (kind, key, label).
  void add(Rule rule, std::vector<std::size_t> matches = {});

  const std::vector<Rule>& rules() const { return rules_; }
  const Rule& rule(std::size_t i) const { return rules_.at(i); }
  std::size_t size() const { return rules_.size(); }
  bool empty() const { return rules_.empty(); }

  bool indexed() const { return indexed_; }
  const std::vector<std::size_t>& matches(std::size_t i) const { return matches_.at(i); }

  std::optional<std::size_t> find(RuleKind kind, const std::string& key,
                                  const std::string& label) const;

  // Recompute the match index against a mention list.
  void index(const Corpus& corpus, const std::vector<CandidateMention>& mentions);

  // Rules of one kind and label (both polarities).
  RuleSet filter(RuleKind kind, const std::string& label) const;

 private:
  std::vector<Rule> rules_;
  std::vector<std::vector<std::size_t>> matches_;
  std::unordered_map<std::string, std::size_t> lookup_;
  bool indexed_ = false;
};

// Every candidate rule (all kinds) generated by the mentions, as positive
// candidates for `label`, keeping rules supported by >= min_support mentions.
RuleSet extract_candidate_rules(const Corpus& corpus, const std::vector<CandidateMention>& mentions,
                                const RuleExtractionConfig& cfg, const std::string& label);

// Keys a single mention generates for one rule kind.
std::vector<std::string> rule_keys_for_mention(const Corpus& corpus, const CandidateMention& m,
                                               RuleKind kind, const RuleExtractionConfig& cfg);

bool rule_matches(const Rule& rule, const Corpus& corpus, const CandidateMention& m);

// Indices of the mentions the rule matches.
std::vector<std::size_t> match_rule(const Rule& rule, const Corpus& corpus,
                                    const std::vector<CandidateMention>& mentions);

// KIND<TAB>KEY<TAB>LABEL<TAB>POLARITY, "#" comments.
RuleSet parse_seed_rules(std::string_view text);
RuleSet load_seed_rules(const std::string& path);
std::string format_seed_rules(const RuleSet& rules);
void save_seed_rules(const RuleSet& rules, const std::string& path);

}  // namespace rulegraph

#endif  // RULEGRAPH_RULES_H_
