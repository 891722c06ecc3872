#include "rulegraph/mentions.h"

#include <algorithm>
#include <map>
#include <set>

#include "rulegraph/common.h"

namespace rulegraph {

PosPattern::PosPattern(std::vector<PosElement> elements) : elements_(std::move(elements)) {
  bool required = std::any_of(elements_.begin(), elements_.end(), [](const PosElement& e) {
    return e.quantifier != Quantifier::kOptional;
  });
  if (!required) throw DataError("POS pattern needs at least one non-optional element");
  for (const auto& e : elements_) {
    if (e.tag.empty()) throw DataError("empty tag in POS pattern");
  }
}

PosPattern PosPattern::parse(std::string_view text) {
  std::vector<PosElement> elements;
  for (const std::string& part : split(text, ' ')) {
    if (part.empty()) continue;
    PosElement e;
    char last = part.back();
    if (last == '?' || last == '+') {
      e.quantifier = last == '?' ? Quantifier::kOptional : Quantifier::kOneOrMore;
      e.tag = part.substr(0, part.size() - 1);
    } else {
      e.tag = part;
    }
    elements.push_back(std::move(e));
  }
  if (elements.empty()) throw DataError("empty POS pattern");
  return PosPattern(std::move(elements));
}

PosPattern PosPattern::literal(const std::vector<std::string>& tags) {
  std::vector<PosElement> elements;
  for (const auto& t : tags) elements.push_back({t, Quantifier::kOne});
  return PosPattern(std::move(elements));
}

std::string PosPattern::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < elements_.size(); ++i) {
    if (i > 0) out += ' ';
    out += elements_[i].tag;
    if (elements_[i].quantifier == Quantifier::kOptional) out += '?';
    if (elements_[i].quantifier == Quantifier::kOneOrMore) out += '+';
  }
  return out;
}

namespace {

// NFA state: (element index, consumed-at-least-one flag for a "+" element),
// packed as 2 * index + flag.
using StateSet = std::vector<char>;

void close(const std::vector<PosElement>& els, StateSet& states) {
  const int n = static_cast<int>(els.size());
  for (int e = 0; e < n; ++e) {
    for (int f = 0; f < 2; ++f) {
      if (!states[2 * e + f]) continue;
      bool skippable = els[e].quantifier == Quantifier::kOptional ||
                       (els[e].quantifier == Quantifier::kOneOrMore && f == 1);
      if (skippable) states[2 * (e + 1)] = 1;
    }
  }
}

StateSet step(const std::vector<PosElement>& els, const StateSet& states, const std::string& tag) {
  const int n = static_cast<int>(els.size());
  StateSet next(2 * (n + 1), 0);
  for (int e = 0; e < n; ++e) {
    if (!(states[2 * e] || states[2 * e + 1]) || els[e].tag != tag) continue;
    if (els[e].quantifier == Quantifier::kOneOrMore) {
      next[2 * e + 1] = 1;
    } else {
      next[2 * (e + 1)] = 1;
    }
  }
  close(els, next);
  return next;
}

}  // namespace

std::vector<std::vector<int>> PosPattern::match_ends(const std::vector<std::string>& tags) const {
  const int n = static_cast<int>(tags.size());
  const int accept = 2 * static_cast<int>(elements_.size());
  std::vector<std::vector<int>> ends(n);
  for (int i = 0; i < n; ++i) {
    StateSet states(accept + 2, 0);
    states[0] = 1;
    close(elements_, states);
    for (int j = i; j < n; ++j) {
      states = step(elements_, states, tags[j]);
      if (std::none_of(states.begin(), states.end(), [](char c) { return c != 0; })) break;
      if (states[accept]) ends[i].push_back(j + 1);
    }
  }
  return ends;
}

bool PosPattern::matches(const std::vector<std::string>& tags) const {
  if (tags.empty()) return false;
  auto ends = match_ends(tags);
  return !ends[0].empty() && ends[0].back() == static_cast<int>(tags.size());
}

std::vector<std::pair<int, int>> PosPattern::maximal_matches(
    const std::vector<std::string>& tags) const {
  std::vector<std::pair<int, int>> all;
  auto ends = match_ends(tags);
  for (int i = 0; i < static_cast<int>(ends.size()); ++i)
    for (int e : ends[i]) all.emplace_back(i, e);
  std::vector<std::pair<int, int>> maximal;
  for (const auto& [s, e] : all) {
    bool contained = std::any_of(all.begin(), all.end(), [&](const auto& other) {
      return other.first <= s && e <= other.second && other != std::pair(s, e);
    });
    if (!contained) maximal.emplace_back(s, e);
  }
  return maximal;
}

std::vector<std::string> pos_sequence(const Sentence& sentence, int start, int end) {
  std::vector<std::string> tags;
  for (int t = start; t < end; ++t) tags.push_back(sentence.tokens[t].pos);
  return tags;
}

std::vector<PosPattern> mine_pos_patterns(const Corpus& dev, int top_k) {
  std::map<std::string, int> counts;
  for (const auto& doc : dev.documents()) {
    for (const auto& sent : doc.sentences) {
      if (!sent.gold_spans) continue;
      for (const auto& sp : *sent.gold_spans) counts[join(pos_sequence(sent, sp.start, sp.end), " ")]++;
    }
  }
  std::vector<std::pair<std::string, int>> ranked(counts.begin(), counts.end());
  // std::map iteration is already lexicographic, so a stable sort by count
  // keeps ties in pattern-string order.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<PosPattern> patterns{PosPattern::parse(kNounPhrasePattern)};
  for (int i = 0; i < top_k && i < static_cast<int>(ranked.size()); ++i) {
    patterns.push_back(PosPattern::literal(split(ranked[i].first, ' ')));
  }
  return patterns;
}

std::vector<CandidateMention> extract_candidates(const Corpus& corpus,
                                                 const std::vector<PosPattern>& patterns) {
  std::vector<CandidateMention> out;
  std::vector<std::string> ids;
  for (const auto& p : patterns) ids.push_back(p.to_string());
  for (std::size_t d = 0; d < corpus.num_documents(); ++d) {
    const auto& doc = corpus.document(d);
    for (std::size_t s = 0; s < doc.sentences.size(); ++s) {
      const Sentence& sent = doc.sentences[s];
      auto tags = pos_sequence(sent, 0, sent.size());
      std::set<std::pair<int, int>> seen;
      std::vector<CandidateMention> local;
      for (std::size_t p = 0; p < patterns.size(); ++p) {
        for (const auto& [b, e] : patterns[p].maximal_matches(tags)) {
          if (!seen.emplace(b, e).second) continue;
          local.push_back({static_cast<int>(d), static_cast<int>(s), b, e, ids[p]});
        }
      }
      std::sort(local.begin(), local.end(),
                [](const auto& a, const auto& b) { return a.key() < b.key(); });
      out.insert(out.end(), local.begin(), local.end());
    }
  }
  return out;
}

std::string mention_key(const Corpus& corpus, const CandidateMention& m) {
  const Sentence& sent = corpus.sentence(m.doc, m.sent);
  std::string key;
  for (int t = m.start; t < m.end; ++t) {
    if (t > m.start) key += '_';
    key += to_lower(sent.tokens[t].text);
  }
  return key;
}

}  // namespace rulegraph
