#ifndef RULEGRAPH_CORPUS_H_
#define RULEGRAPH_CORPUS_H_

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rulegraph {

struct Token {
  std::string text;
  std::string pos;
  std::optional<int> dep_head;  // index within the sentence; absent = root
  std::optional<std::string> dep_label;

  bool operator==(const Token&) const = default;
};

// Half-open labeled token span.
struct Span {
  int start = 0;
  int end = 0;
  std::string label;

  int length() const { return end - start; }
  bool operator==(const Span&) const = default;
};

struct Sentence {
  std::vector<Token> tokens;
  std::optional<std::vector<Span>> gold_spans;

  int size() const { return static_cast<int>(tokens.size()); }
  bool operator==(const Sentence&) const = default;
};

struct Document {
  std::string id;
  std::vector<Sentence> sentences;

  bool operator==(const Document&) const = default;
};

// Documents in file order. Tokens are numbered globally in document, then
// sentence, then token order; embedding files and label matrices use this
// numbering.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<Document> documents);

  const std::vector<Document>& documents() const { return documents_; }
  const Document& document(std::size_t d) const { return documents_.at(d); }
  const Sentence& sentence(std::size_t d, std::size_t s) const {
    return documents_.at(d).sentences.at(s);
  }

  std::size_t num_documents() const { return documents_.size(); }
  std::size_t num_sentences() const { return sentence_offsets_.size(); }
  std::size_t token_count() const { return token_count_; }

  // Global index of token 0 of sentence (d, s).
  std::size_t sentence_offset(std::size_t d, std::size_t s) const;
  std::size_t global_index(std::size_t d, std::size_t s, std::size_t t) const {
    return sentence_offset(d, s) + t;
  }

  bool has_gold() const;

  bool operator==(const Corpus& other) const { return documents_ == other.documents_; }

 private:
  void validate() const;

  std::vector<Document> documents_;
  std::vector<std::size_t> doc_first_sentence_;
  std::vector<std::size_t> sentence_offsets_;
  std::size_t token_count_ = 0;
};

enum class CorpusFormat { kJsonl, kConllTsv };

CorpusFormat parse_corpus_format(std::string_view name);
// Picks by extension: .jsonl/.json -> JSONL, anything else -> CoNLL-TSV.
CorpusFormat guess_corpus_format(std::string_view path);

Corpus load_corpus(const std::string& path, CorpusFormat format);
Corpus parse_jsonl(std::string_view text);
Corpus parse_conll(std::string_view text);
std::string to_jsonl(const Corpus& corpus);
std::string to_conll(const Corpus& corpus);
void save_corpus(const Corpus& corpus, const std::string& path, CorpusFormat format);

// Decode a BIO column into spans; a stray I-X opens a new span.
std::vector<Span> spans_from_bio(const std::vector<std::string>& tags);
std::vector<std::string> bio_from_spans(const std::vector<Span>& spans, int length);

}  // namespace rulegraph

#endif  // RULEGRAPH_CORPUS_H_
