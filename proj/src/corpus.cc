#include "rulegraph/corpus.h"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "rulegraph/common.h"

namespace rulegraph {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

Corpus::Corpus(std::vector<Document> documents) : documents_(std::move(documents)) {
  validate();
  for (const auto& doc : documents_) {
    doc_first_sentence_.push_back(sentence_offsets_.size());
    for (const auto& sent : doc.sentences) {
      sentence_offsets_.push_back(token_count_);
      token_count_ += sent.tokens.size();
    }
  }
}

std::size_t Corpus::sentence_offset(std::size_t d, std::size_t s) const {
  if (d >= documents_.size() || s >= documents_[d].sentences.size()) {
    throw DataError("sentence index out of range: doc " + std::to_string(d) + " sent " +
                    std::to_string(s));
  }
  return sentence_offsets_[doc_first_sentence_[d] + s];
}

bool Corpus::has_gold() const {
  for (const auto& doc : documents_)
    for (const auto& sent : doc.sentences)
      if (sent.gold_spans) return true;
  return false;
}

void Corpus::validate() const {
  std::unordered_set<std::string> ids;
  for (const auto& doc : documents_) {
    if (!ids.insert(doc.id).second) throw DataError("duplicate document id: " + doc.id);
    for (std::size_t s = 0; s < doc.sentences.size(); ++s) {
      const Sentence& sent = doc.sentences[s];
      const int n = sent.size();
      for (int t = 0; t < n; ++t) {
        const Token& tok = sent.tokens[t];
        if (tok.dep_head && (*tok.dep_head < 0 || *tok.dep_head >= n || *tok.dep_head == t)) {
          throw DataError("invalid dependency head " + std::to_string(*tok.dep_head) +
                          " for token " + std::to_string(t) + " ('" + tok.text +
                          "') in document " + doc.id + " sentence " + std::to_string(s));
        }
      }
      if (!sent.gold_spans) continue;
      int prev_start = -1;
      for (const Span& sp : *sent.gold_spans) {
        if (sp.start < 0 || sp.end > n || sp.start >= sp.end || sp.label.empty()) {
          throw DataError("invalid gold span [" + std::to_string(sp.start) + "," +
                          std::to_string(sp.end) + ") in document " + doc.id + " sentence " +
                          std::to_string(s));
        }
        if (sp.start < prev_start) {
          throw DataError("gold spans not sorted by start in document " + doc.id);
        }
        prev_start = sp.start;
      }
    }
  }
}

CorpusFormat parse_corpus_format(std::string_view name) {
  if (name == "jsonl") return CorpusFormat::kJsonl;
  if (name == "conll-tsv" || name == "conll") return CorpusFormat::kConllTsv;
  throw DataError("unknown corpus format: " + std::string(name));
}

CorpusFormat guess_corpus_format(std::string_view path) {
  auto ends_with = [&](std::string_view suffix) {
    return path.size() >= suffix.size() && path.substr(path.size() - suffix.size()) == suffix;
  };
  return ends_with(".jsonl") || ends_with(".json") ? CorpusFormat::kJsonl
                                                   : CorpusFormat::kConllTsv;
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Sentence sentence_from_json(const json& js) {
  Sentence sent;
  for (const auto& jt : js.at("tokens")) {
    Token tok;
    tok.text = jt.at("t").get<std::string>();
    tok.pos = jt.at("p").get<std::string>();
    if (auto it = jt.find("h"); it != jt.end() && !it->is_null()) tok.dep_head = it->get<int>();
    if (auto it = jt.find("d"); it != jt.end() && !it->is_null())
      tok.dep_label = it->get<std::string>();
    sent.tokens.push_back(std::move(tok));
  }
  if (auto it = js.find("spans"); it != js.end() && !it->is_null()) {
    std::vector<Span> spans;
    for (const auto& js_span : *it) {
      if (!js_span.is_array() || js_span.size() != 3) throw DataError("span must be [start,end,label]");
      spans.push_back({js_span[0].get<int>(), js_span[1].get<int>(), js_span[2].get<std::string>()});
    }
    sent.gold_spans = std::move(spans);
  }
  return sent;
}

}  // namespace

Corpus parse_jsonl(std::string_view text) {
  std::vector<Document> docs;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    try {
      json js = json::parse(line);
      Document doc;
      doc.id = js.at("id").get<std::string>();
      for (const auto& jsent : js.at("sentences")) doc.sentences.push_back(sentence_from_json(jsent));
      docs.push_back(std::move(doc));
    } catch (const json::exception& e) {
      throw DataError("malformed JSONL at line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("malformed JSONL at line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return Corpus(std::move(docs));
}

Corpus parse_conll(std::string_view text) {
  std::vector<Document> docs;
  Sentence current;
  std::vector<std::string> bio;
  bool any_bio = false;
  std::size_t line_no = 0;
  std::size_t sentence_line = 0;

  auto flush = [&]() {
    if (current.tokens.empty()) return;
    if (any_bio) {
      if (bio.size() != current.tokens.size()) {
        throw DataError("CoNLL sentence starting at line " + std::to_string(sentence_line) +
                        " mixes tokens with and without a BIO column");
      }
      current.gold_spans = spans_from_bio(bio);
    }
    if (docs.empty()) docs.push_back({"doc0", {}});
    docs.back().sentences.push_back(std::move(current));
    current = Sentence{};
    bio.clear();
    any_bio = false;
  };

  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      flush();
      continue;
    }
    if (line.starts_with("# doc_id = ")) {
      flush();
      docs.push_back({std::string(line.substr(11)), {}});
      continue;
    }
    if (line.starts_with("#")) continue;
    auto cols = split(line, '\t');
    if (cols.size() != 4 && cols.size() != 5) {
      throw DataError("malformed CoNLL line " + std::to_string(line_no) + ": expected 4 or 5 columns");
    }
    if (current.tokens.empty()) sentence_line = line_no;
    Token tok;
    tok.text = cols[0];
    tok.pos = cols[1];
    if (cols[2] != "_" && cols[2] != "0") {
      try {
        std::size_t used = 0;
        int head = std::stoi(cols[2], &used);
        if (used != cols[2].size() || head < 0) throw std::invalid_argument("head");
        tok.dep_head = head - 1;
      } catch (const std::exception&) {
        throw DataError("malformed HEAD at CoNLL line " + std::to_string(line_no));
      }
    }
    if (cols[3] != "_") tok.dep_label = cols[3];
    current.tokens.push_back(std::move(tok));
    if (cols.size() == 5) {
      any_bio = true;
      bio.push_back(cols[4]);
    }
  }
  flush();
  try {
    return Corpus(std::move(docs));
  } catch (const DataError& e) {
    throw DataError(std::string("CoNLL corpus: ") + e.what());
  }
}

Corpus load_corpus(const std::string& path, CorpusFormat format) {
  std::string text = read_file(path);
  try {
    return format == CorpusFormat::kJsonl ? parse_jsonl(text) : parse_conll(text);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

std::string to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& doc : corpus.documents()) {
    ordered_json jd;
    jd["id"] = doc.id;
    jd["sentences"] = ordered_json::array();
    for (const auto& sent : doc.sentences) {
      ordered_json js;
      js["tokens"] = ordered_json::array();
      for (const auto& tok : sent.tokens) {
        ordered_json jt;
        jt["t"] = tok.text;
        jt["p"] = tok.pos;
        jt["h"] = tok.dep_head ? ordered_json(*tok.dep_head) : ordered_json(nullptr);
        jt["d"] = tok.dep_label ? ordered_json(*tok.dep_label) : ordered_json(nullptr);
        js["tokens"].push_back(std::move(jt));
      }
      if (sent.gold_spans) {
        js["spans"] = ordered_json::array();
        for (const auto& sp : *sent.gold_spans) js["spans"].push_back({sp.start, sp.end, sp.label});
      }
      jd["sentences"].push_back(std::move(js));
    }
    out += jd.dump();
    out += '\n';
  }
  return out;
}

std::string to_conll(const Corpus& corpus) {
  std::string out;
  for (const auto& doc : corpus.documents()) {
    out += "# doc_id = " + doc.id + "\n";
    for (const auto& sent : doc.sentences) {
      std::vector<std::string> bio;
      if (sent.gold_spans) bio = bio_from_spans(*sent.gold_spans, sent.size());
      for (int t = 0; t < sent.size(); ++t) {
        const Token& tok = sent.tokens[t];
        out += tok.text;
        out += '\t';
        out += tok.pos;
        out += '\t';
        out += tok.dep_head ? std::to_string(*tok.dep_head + 1) : std::string("0");
        out += '\t';
        out += tok.dep_label ? *tok.dep_label : std::string("_");
        if (sent.gold_spans) {
          out += '\t';
          out += bio[t];
        }
        out += '\n';
      }
      out += '\n';
    }
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::string& path, CorpusFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  out << (format == CorpusFormat::kJsonl ? to_jsonl(corpus) : to_conll(corpus));
}

std::vector<Span> spans_from_bio(const std::vector<std::string>& tags) {
  std::vector<Span> spans;
  for (int t = 0; t < static_cast<int>(tags.size()); ++t) {
    const std::string& tag = tags[t];
    if (tag == "O" || tag.size() < 3 || tag[1] != '-') {
      continue;
    }
    std::string label = tag.substr(2);
    bool continues = tag[0] == 'I' && !spans.empty() && spans.back().end == t &&
                     spans.back().label == label;
    if (continues) {
      spans.back().end = t + 1;
    } else {
      spans.push_back({t, t + 1, label});
    }
  }
  return spans;
}

std::vector<std::string> bio_from_spans(const std::vector<Span>& spans, int length) {
  std::vector<std::string> tags(length, "O");
  int covered_until = 0;
  for (const Span& sp : spans) {
    if (sp.start < covered_until) throw DataError("overlapping spans cannot be written as BIO");
    tags[sp.start] = "B-" + sp.label;
    for (int t = sp.start + 1; t < sp.end; ++t) tags[t] = "I-" + sp.label;
    covered_until = sp.end;
  }
  return tags;
}

}  // namespace rulegraph
