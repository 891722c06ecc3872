#include "rulegraph/labeling.h"

#include <algorithm>
#include <charconv>

#include "rulegraph/common.h"

namespace rulegraph {

LabelMatrix::LabelMatrix(std::size_t num_tokens, std::size_t num_rules)
    : num_rules_(num_rules), votes_(num_tokens) {}

void LabelMatrix::add(std::size_t token, int rule, std::string label) {
  if (token >= votes_.size()) throw DataError("vote token index out of range: " + std::to_string(token));
  if (rule < 0 || static_cast<std::size_t>(rule) >= num_rules_) {
    throw DataError("vote rule index out of range: " + std::to_string(rule));
  }
  if (label.empty()) throw DataError("empty vote label");
  auto& row = votes_[token];
  auto it = std::lower_bound(row.begin(), row.end(), rule,
                             [](const TokenVote& v, int r) { return v.rule < r; });
  if (it != row.end() && it->rule == rule) {
    if (it->label != label) {
      throw DataError("conflicting votes of rule " + std::to_string(rule) + " on token " +
                      std::to_string(token));
    }
    return;
  }
  row.insert(it, TokenVote{rule, std::move(label)});
  ++count_;
}

LabelMatrix apply_rules(const RuleSet& rules, const Corpus& corpus,
                        const std::vector<CandidateMention>& mentions) {
  LabelMatrix m(corpus.token_count(), rules.size());
  for (std::size_t r = 0; r < rules.size(); ++r) {
    const Rule& rule = rules.rule(r);
    const auto matched = rules.indexed() ? rules.matches(r) : match_rule(rule, corpus, mentions);
    const std::string vote = rule.vote();
    for (std::size_t i : matched) {
      const CandidateMention& mention = mentions.at(i);
      const std::size_t base = corpus.sentence_offset(mention.doc, mention.sent);
      for (int t = mention.start; t < mention.end; ++t) m.add(base + t, static_cast<int>(r), vote);
    }
  }
  return m;
}

namespace {

// Inverse of the global token numbering.
struct TokenAddress {
  std::size_t doc = 0;
  std::size_t sent = 0;
  int tok = 0;
};

std::vector<TokenAddress> token_addresses(const Corpus& corpus) {
  std::vector<TokenAddress> out;
  out.reserve(corpus.token_count());
  for (std::size_t d = 0; d < corpus.num_documents(); ++d)
    for (std::size_t s = 0; s < corpus.document(d).sentences.size(); ++s)
      for (int t = 0; t < corpus.sentence(d, s).size(); ++t) out.push_back({d, s, t});
  return out;
}

template <typename Int>
Int parse_int(const std::string& field, const std::string& where) {
  Int v{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw DataError(where + "expected an integer, got '" + field + "'");
  }
  return v;
}

// Global index of (doc, sent, tok) with bounds checks.
std::size_t locate(const Corpus& corpus, const std::vector<std::string>& cols, const std::string& where) {
  const auto d = parse_int<std::size_t>(cols[0], where);
  const auto s = parse_int<std::size_t>(cols[1], where);
  const auto t = parse_int<long>(cols[2], where);
  if (d >= corpus.num_documents()) throw DataError(where + "document index out of range");
  if (s >= corpus.document(d).sentences.size()) throw DataError(where + "sentence index out of range");
  if (t < 0 || t >= corpus.sentence(d, s).size()) throw DataError(where + "token index out of range");
  return corpus.global_index(d, s, static_cast<std::size_t>(t));
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    fn(line, line_no);
  }
}

}  // namespace

std::string format_label_matrix(const LabelMatrix& m, const Corpus& corpus) {
  if (m.num_tokens() != corpus.token_count()) throw DataError("label matrix does not match corpus");
  const auto addr = token_addresses(corpus);
  std::string out;
  for (std::size_t g = 0; g < m.num_tokens(); ++g) {
    for (const TokenVote& v : m.votes(g)) {
      out += std::to_string(addr[g].doc) + '\t' + std::to_string(addr[g].sent) + '\t' +
             std::to_string(addr[g].tok) + '\t' + std::to_string(v.rule) + '\t' + v.label + '\n';
    }
  }
  return out;
}

LabelMatrix parse_label_matrix(std::string_view text, const Corpus& corpus, std::size_t num_rules) {
  LabelMatrix m(corpus.token_count(), num_rules);
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    const std::string where = "label matrix line " + std::to_string(line_no) + ": ";
    auto cols = split(line, '\t');
    if (cols.size() != 5) throw DataError(where + "expected 5 tab-separated columns");
    const std::size_t g = locate(corpus, cols, where);
    try {
      m.add(g, parse_int<int>(cols[3], where), cols[4]);
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
  });
  return m;
}

void save_label_matrix(const LabelMatrix& m, const Corpus& corpus, const std::string& path) {
  write_text_file(path, format_label_matrix(m, corpus));
}

LabelMatrix load_label_matrix(const std::string& path, const Corpus& corpus, std::size_t num_rules) {
  return parse_label_matrix(read_text_file(path), corpus, num_rules);
}

LinkTable::LinkTable(std::size_t num_tokens, std::size_t num_sources)
    : num_tokens_(num_tokens), votes_(num_sources, std::vector<LinkVote>(num_tokens, LinkVote::kAbstain)) {}

void LinkTable::set(std::size_t source, std::size_t right_token, LinkVote v) {
  votes_.at(source).at(right_token) = v;
}

bool LinkTable::any_vote(std::size_t right_token) const {
  for (const auto& src : votes_)
    if (src[right_token] != LinkVote::kAbstain) return true;
  return false;
}

void LinkTable::append_sources(const LinkTable& other) {
  if (other.num_tokens_ != num_tokens_) throw DataError("link tables cover different corpora");
  votes_.insert(votes_.end(), other.votes_.begin(), other.votes_.end());
}

LinkTable parse_link_votes(std::string_view text, const Corpus& corpus) {
  LinkTable links(corpus.token_count(), 1);
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    const std::string where = "link votes line " + std::to_string(line_no) + ": ";
    auto cols = split(line, '\t');
    if (cols.size() != 4) throw DataError(where + "expected 4 tab-separated columns");
    const std::size_t g = locate(corpus, cols, where);
    if (cols[2] == "0") throw DataError(where + "token 0 has no left neighbor");
    LinkVote v;
    if (cols[3] == "LINK") {
      v = LinkVote::kLink;
    } else if (cols[3] == "BREAK") {
      v = LinkVote::kBreak;
    } else {
      throw DataError(where + "vote must be LINK or BREAK, got '" + cols[3] + "'");
    }
    const LinkVote old = links.vote(0, g);
    if (old != LinkVote::kAbstain && old != v) throw DataError(where + "conflicting vote for the pair");
    links.set(0, g, v);
  });
  return links;
}

LinkTable load_link_votes(const std::string& path, const Corpus& corpus) {
  return parse_link_votes(read_text_file(path), corpus);
}

std::string format_link_votes(const LinkTable& links, std::size_t source, const Corpus& corpus) {
  if (links.num_tokens() != corpus.token_count()) throw DataError("link table does not match corpus");
  const auto addr = token_addresses(corpus);
  std::string out;
  for (std::size_t g = 0; g < links.num_tokens(); ++g) {
    const LinkVote v = links.vote(source, g);
    if (v == LinkVote::kAbstain) continue;
    out += std::to_string(addr[g].doc) + '\t' + std::to_string(addr[g].sent) + '\t' +
           std::to_string(addr[g].tok) + '\t' + (v == LinkVote::kLink ? "LINK" : "BREAK") + '\n';
  }
  return out;
}

std::vector<std::string> io_to_bio(const std::vector<std::string>& io, const std::vector<bool>& split_before) {
  std::vector<std::string> out(io.size());
  for (std::size_t t = 0; t < io.size(); ++t) {
    if (io[t] == kOutsideLabel) {
      out[t] = "O";
      continue;
    }
    const bool split = t < split_before.size() && split_before[t];
    const bool continues = t > 0 && io[t - 1] == io[t] && !split;
    out[t] = (continues ? "I-" : "B-") + io[t];
  }
  return out;
}

std::vector<bool> link_splits(const LinkTable& links, std::size_t sentence_offset, int length) {
  std::vector<bool> split(length, false);
  if (links.num_sources() == 0) return split;
  for (int t = 1; t < length; ++t) {
    int balance = 0;
    for (std::size_t s = 0; s < links.num_sources(); ++s) {
      const LinkVote v = links.vote(s, sentence_offset + t);
      balance += v == LinkVote::kBreak ? 1 : v == LinkVote::kLink ? -1 : 0;
    }
    split[t] = balance > 0;
  }
  return split;
}

}  // namespace rulegraph
