#include "rulegraph/rules.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "rulegraph/common.h"

namespace rulegraph {

namespace {

constexpr std::array<std::string_view, 9> kKindNames = {
    "surface",     "prefix",       "suffix",    "prengram_in",    "prengram_ex",
    "postngram_in", "postngram_ex", "dep_first", "dep_secondlast",
};

std::string composite(RuleKind kind, const std::string& key, const std::string& label) {
  std::string s(kind_name(kind));
  s += '\t';
  s += key;
  s += '\t';
  s += label;
  return s;
}

std::string lower_tokens(const Sentence& sent, int begin, int end) {
  std::string out;
  for (int t = begin; t < end; ++t) {
    if (t > begin) out += '_';
    out += to_lower(sent.tokens[t].text);
  }
  return out;
}

std::size_t count_parts(const std::string& key) {
  return static_cast<std::size_t>(std::count(key.begin(), key.end(), '_')) + 1;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::optional<std::string> dep_key(const Sentence& sent, int position, int last) {
  const auto& label = sent.tokens[position].dep_label;
  if (!label || label->empty()) return std::nullopt;
  return *label + "_" + to_lower(sent.tokens[last].text);
}

}  // namespace

std::string_view kind_name(RuleKind kind) { return kKindNames[static_cast<int>(kind)]; }

RuleKind parse_kind(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<RuleKind>(i);
  }
  throw DataError("unknown rule kind: " + std::string(name));
}

std::string Rule::display() const {
  switch (kind) {
    case RuleKind::kSurfaceForm:
      return key;
    case RuleKind::kPrefix:
      return key + "*";
    case RuleKind::kSuffix:
      return "*" + key;
    case RuleKind::kPreNgramInclusive:
    case RuleKind::kPreNgramExclusive:
      return key + "_*";
    case RuleKind::kPostNgramInclusive:
    case RuleKind::kPostNgramExclusive:
      return "*_" + key;
    case RuleKind::kDepFirstToken:
    case RuleKind::kDepSecondLast: {
      auto cut = key.find('_');
      std::string head = kind == RuleKind::kDepFirstToken ? "FirstTokenDep:" : "SecondLastTokenDep:";
      if (cut == std::string::npos) return head + key;
      return head + key.substr(0, cut) + "_LastToken:" + key.substr(cut + 1);
    }
  }
  return key;
}

void RuleExtractionConfig::validate() const {
  if (affix_min < 1 || affix_max < affix_min) throw DataError("invalid affix length range");
  if (ngram_min < 1 || ngram_max < ngram_min) throw DataError("invalid n-gram range");
  if (min_support < 1) throw DataError("min_support must be >= 1");
}

void RuleSet::add(Rule rule, std::vector<std::size_t> matches) {
  if (rule.key.find_first_of("\t\n\r") != std::string::npos) {
    throw DataError("rule key contains a tab or newline");
  }
  if (find(rule.kind, rule.key, rule.label)) {
    throw DataError("duplicate rule: " + std::string(kind_name(rule.kind)) + " " + rule.key + " " +
                    rule.label);
  }
  if (!matches.empty()) indexed_ = true;
  lookup_.emplace(composite(rule.kind, rule.key, rule.label), rules_.size());
  rules_.push_back(std::move(rule));
  matches_.push_back(std::move(matches));
}

std::optional<std::size_t> RuleSet::find(RuleKind kind, const std::string& key,
                                         const std::string& label) const {
  auto it = lookup_.find(composite(kind, key, label));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

void RuleSet::index(const Corpus& corpus, const std::vector<CandidateMention>& mentions) {
  for (std::size_t i = 0; i < rules_.size(); ++i) matches_[i] = match_rule(rules_[i], corpus, mentions);
  indexed_ = true;
}

RuleSet RuleSet::filter(RuleKind kind, const std::string& label) const {
  RuleSet out;
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    if (rules_[i].kind != kind || rules_[i].label != label) continue;
    out.lookup_.emplace(composite(kind, rules_[i].key, label), out.rules_.size());
    out.rules_.push_back(rules_[i]);
    out.matches_.push_back(matches_[i]);
  }
  out.indexed_ = indexed_;
  return out;
}

std::vector<std::string> rule_keys_for_mention(const Corpus& corpus, const CandidateMention& m,
                                               RuleKind kind, const RuleExtractionConfig& cfg) {
  const Sentence& sent = corpus.sentence(m.doc, m.sent);
  const int len = m.length();
  std::vector<std::string> keys;
  switch (kind) {
    case RuleKind::kSurfaceForm:
      keys.push_back(lower_tokens(sent, m.start, m.end));
      break;
    case RuleKind::kPrefix:
    case RuleKind::kSuffix: {
      if (len != 1) break;
      std::string text = to_lower(sent.tokens[m.start].text);
      auto bounds = utf8_boundaries(text);
      const int chars = static_cast<int>(bounds.size()) - 1;
      for (int n = cfg.affix_min; n <= cfg.affix_max && n <= chars; ++n) {
        if (kind == RuleKind::kPrefix) {
          keys.push_back(text.substr(0, bounds[n]));
        } else {
          keys.push_back(text.substr(bounds[chars - n]));
        }
      }
      break;
    }
    case RuleKind::kPreNgramInclusive:
      for (int n = cfg.ngram_min; n <= cfg.ngram_max && n <= len; ++n)
        keys.push_back(lower_tokens(sent, m.start, m.start + n));
      break;
    case RuleKind::kPreNgramExclusive:
      for (int n = cfg.ngram_min; n <= cfg.ngram_max && n <= m.start; ++n)
        keys.push_back(lower_tokens(sent, m.start - n, m.start));
      break;
    case RuleKind::kPostNgramInclusive:
      for (int n = cfg.ngram_min; n <= cfg.ngram_max && n <= len; ++n)
        keys.push_back(lower_tokens(sent, m.end - n, m.end));
      break;
    case RuleKind::kPostNgramExclusive:
      for (int n = cfg.ngram_min; n <= cfg.ngram_max && m.end + n <= sent.size(); ++n)
        keys.push_back(lower_tokens(sent, m.end, m.end + n));
      break;
    case RuleKind::kDepFirstToken:
      if (len >= 2) {
        if (auto k = dep_key(sent, m.start, m.end - 1)) keys.push_back(*k);
      }
      break;
    case RuleKind::kDepSecondLast:
      if (len >= 2) {
        if (auto k = dep_key(sent, m.end - 2, m.end - 1)) keys.push_back(*k);
      }
      break;
  }
  return keys;
}

RuleSet extract_candidate_rules(const Corpus& corpus, const std::vector<CandidateMention>& mentions,
                                const RuleExtractionConfig& cfg, const std::string& label) {
  cfg.validate();
  std::map<std::pair<RuleKind, std::string>, std::set<std::size_t>> support;
  for (std::size_t i = 0; i < mentions.size(); ++i) {
    for (RuleKind kind : kAllRuleKinds) {
      for (auto& key : rule_keys_for_mention(corpus, mentions[i], kind, cfg)) {
        support[{kind, std::move(key)}].insert(i);
      }
    }
  }
  RuleSet out;
  for (auto& [id, ms] : support) {
    if (static_cast<int>(ms.size()) < cfg.min_support) continue;
    out.add(Rule{id.first, id.second, label, Polarity::kPositive},
            std::vector<std::size_t>(ms.begin(), ms.end()));
  }
  return out;
}

bool rule_matches(const Rule& rule, const Corpus& corpus, const CandidateMention& m) {
  const Sentence& sent = corpus.sentence(m.doc, m.sent);
  const int len = m.length();
  // N-gram keys are compared as joined strings; tokens may themselves
  // contain '_', so every window width up to the part count is tried.
  auto window_equals = [&](auto make_window, int available) {
    const int max_n = std::min(static_cast<int>(count_parts(rule.key)), available);
    for (int n = 1; n <= max_n; ++n) {
      if (make_window(n) == rule.key) return true;
    }
    return false;
  };
  switch (rule.kind) {
    case RuleKind::kSurfaceForm:
      return lower_tokens(sent, m.start, m.end) == rule.key;
    case RuleKind::kPrefix:
      return len == 1 && to_lower(sent.tokens[m.start].text).starts_with(rule.key);
    case RuleKind::kSuffix:
      return len == 1 && ends_with(to_lower(sent.tokens[m.start].text), rule.key);
    case RuleKind::kPreNgramInclusive:
      return window_equals([&](int n) { return lower_tokens(sent, m.start, m.start + n); }, len);
    case RuleKind::kPreNgramExclusive:
      return window_equals([&](int n) { return lower_tokens(sent, m.start - n, m.start); }, m.start);
    case RuleKind::kPostNgramInclusive:
      return window_equals([&](int n) { return lower_tokens(sent, m.end - n, m.end); }, len);
    case RuleKind::kPostNgramExclusive:
      return window_equals([&](int n) { return lower_tokens(sent, m.end, m.end + n); },
                           sent.size() - m.end);
    case RuleKind::kDepFirstToken:
      return len >= 2 && dep_key(sent, m.start, m.end - 1) == rule.key;
    case RuleKind::kDepSecondLast:
      return len >= 2 && dep_key(sent, m.end - 2, m.end - 1) == rule.key;
  }
  return false;
}

std::vector<std::size_t> match_rule(const Rule& rule, const Corpus& corpus,
                                    const std::vector<CandidateMention>& mentions) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mentions.size(); ++i) {
    if (rule_matches(rule, corpus, mentions[i])) out.push_back(i);
  }
  return out;
}

namespace {

// Accepts keys written with wildcards ("*axia", "suffer_from_*",
// "FirstTokenDep:amod_LastToken:dystrophy") as well as bare payloads.
std::string normalize_seed_key(RuleKind kind, std::string key) {
  auto strip_prefix = [&](std::string_view p) {
    if (key.starts_with(p)) key = key.substr(p.size());
  };
  auto strip_suffix = [&](std::string_view p) {
    if (ends_with(key, p)) key = key.substr(0, key.size() - p.size());
  };
  switch (kind) {
    case RuleKind::kPrefix:
      strip_suffix("*");
      return to_lower(key);
    case RuleKind::kSuffix:
      strip_prefix("*");
      return to_lower(key);
    case RuleKind::kPreNgramInclusive:
    case RuleKind::kPreNgramExclusive:
      strip_suffix("_*");
      return to_lower(key);
    case RuleKind::kPostNgramInclusive:
    case RuleKind::kPostNgramExclusive:
      strip_prefix("*_");
      return to_lower(key);
    case RuleKind::kDepFirstToken:
    case RuleKind::kDepSecondLast: {
      strip_prefix(kind == RuleKind::kDepFirstToken ? "FirstTokenDep:" : "SecondLastTokenDep:");
      if (auto at = key.find("_LastToken:"); at != std::string::npos) {
        key = key.substr(0, at) + "_" + key.substr(at + 11);
      }
      auto cut = key.find('_');
      if (cut == std::string::npos || cut == 0 || cut + 1 == key.size()) {
        throw DataError("dependency key must look like RELATION_LASTTOKEN: " + key);
      }
      return key.substr(0, cut + 1) + to_lower(key.substr(cut + 1));
    }
    case RuleKind::kSurfaceForm:
      return to_lower(key);
  }
  return key;
}

}  // namespace

RuleSet parse_seed_rules(std::string_view text) {
  RuleSet out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    auto where = [&] { return "seed rules line " + std::to_string(line_no) + ": "; };
    auto cols = split(line, '\t');
    if (cols.size() != 4) throw DataError(where() + "expected 4 tab-separated columns");
    try {
      Rule r;
      r.kind = parse_kind(cols[0]);
      r.key = normalize_seed_key(r.kind, cols[1]);
      r.label = cols[2];
      if (r.key.empty()) throw DataError("empty key");
      if (r.label.empty() || r.label == kOutsideLabel) throw DataError("invalid label '" + r.label + "'");
      if (cols[3] == "pos") {
        r.polarity = Polarity::kPositive;
      } else if (cols[3] == "neg") {
        r.polarity = Polarity::kNegative;
      } else {
        throw DataError("polarity must be pos or neg, got '" + cols[3] + "'");
      }
      out.add(std::move(r));
    } catch (const DataError& e) {
      throw DataError(where() + e.what());
    }
  }
  return out;
}

RuleSet load_seed_rules(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open seed rules: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_seed_rules(ss.str());
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

std::string format_seed_rules(const RuleSet& rules) {
  std::string out;
  for (const Rule& r : rules.rules()) {
    out += kind_name(r.kind);
    out += '\t';
    out += r.key;
    out += '\t';
    out += r.label;
    out += '\t';
    out += r.polarity == Polarity::kPositive ? "pos" : "neg";
    out += '\n';
  }
  return out;
}

void save_seed_rules(const RuleSet& rules, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  out << format_seed_rules(rules);
}

}  // namespace rulegraph
