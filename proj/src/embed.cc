#include "rulegraph/embed.h"

#include <cmath>
#include <fstream>
#include <set>

#include "rulegraph/binary_io.h"
#include "rulegraph/common.h"

namespace rulegraph {

EmbeddingTable::EmbeddingTable(int dim, std::vector<double> values)
    : dim_(dim), values_(std::move(values)) {
  if (dim_ <= 0) throw DataError("embedding dim must be positive");
  if (values_.size() % static_cast<std::size_t>(dim_) != 0) {
    throw DataError("embedding values not a multiple of dim");
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw DataError("non-finite embedding value");
  }
}

void write_embedding_table(const EmbeddingTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  binio::write_magic(out, "GLRE");
  binio::write<std::uint32_t>(out, 1);
  binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(table.dim()));
  binio::write<std::uint64_t>(out, table.rows());
  for (double v : table.values()) binio::write<float>(out, static_cast<float>(v));
}

EmbeddingTable read_embedding_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embeddings: " + path);
  binio::expect_magic(in, "GLRE");
  auto version = binio::read<std::uint32_t>(in, "embedding version");
  if (version != 1) throw DataError("unsupported embedding version " + std::to_string(version));
  auto dim = binio::read<std::uint32_t>(in, "embedding dim");
  auto count = binio::read<std::uint64_t>(in, "embedding token count");
  if (dim == 0) throw DataError("embedding dim must be positive");
  std::vector<double> values(count * dim);
  for (auto& v : values) v = binio::read<float>(in, "embedding values");
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes in " + path);
  return EmbeddingTable(static_cast<int>(dim), std::move(values));
}

EmbeddingTable load_embedding_table(const std::string& path, const Corpus& corpus) {
  EmbeddingTable table = read_embedding_table(path);
  if (table.rows() != corpus.token_count()) {
    throw DataError("embedding token count mismatch: expected " +
                    std::to_string(corpus.token_count()) + ", found " +
                    std::to_string(table.rows()));
  }
  return table;
}

std::vector<double> mention_embedding(const Corpus& corpus, const CandidateMention& m,
                                      const EmbeddingTable& table, Pooling pooling) {
  const std::size_t base = corpus.global_index(m.doc, m.sent, 0);
  std::vector<double> v(table.dim(), 0.0);
  const int end = pooling == Pooling::kFirstToken ? m.start + 1 : m.end;
  for (int t = m.start; t < end; ++t) {
    auto row = table.row(base + t);
    for (int k = 0; k < table.dim(); ++k) v[k] += row[k];
  }
  const double n = end - m.start;
  for (double& x : v) x /= n;
  return v;
}

std::vector<double> rule_embedding(const Corpus& corpus, const std::vector<CandidateMention>& mentions,
                                   const std::vector<std::size_t>& matches,
                                   const EmbeddingTable& table, Pooling pooling) {
  std::set<std::size_t> distinct(matches.begin(), matches.end());
  if (distinct.empty()) throw DataError("embedding undefined: rule matches no mentions");
  std::vector<double> v(table.dim(), 0.0);
  for (std::size_t i : distinct) {
    auto e = mention_embedding(corpus, mentions.at(i), table, pooling);
    for (int k = 0; k < table.dim(); ++k) v[k] += e[k];
  }
  for (double& x : v) x /= static_cast<double>(distinct.size());
  return v;
}

namespace {

void add_hashed(std::vector<double>& v, std::string_view feature, std::uint64_t seed, double weight) {
  std::uint64_t h = fnv1a(feature, 0xcbf29ce484222325ULL ^ seed);
  // Two independent slots per feature reduce collision damage.
  for (int r = 0; r < 2; ++r) {
    h = h * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL;
    std::uint64_t mixed = h ^ (h >> 29);
    std::size_t slot = mixed % v.size();
    double sign = ((mixed >> 40) & 1) ? 1.0 : -1.0;
    v[slot] += sign * weight;
  }
}

}  // namespace

EmbeddingTable hash_fallback_embed(const Corpus& corpus, int dim, std::uint64_t seed) {
  if (dim < 1) throw DataError("embedding dim must be >= 1");
  std::vector<double> values;
  values.reserve(corpus.token_count() * dim);
  std::vector<double> v(dim);
  for (const auto& doc : corpus.documents()) {
    for (const auto& sent : doc.sentences) {
      for (int t = 0; t < sent.size(); ++t) {
        std::fill(v.begin(), v.end(), 0.0);
        std::string word = "<" + to_lower(sent.tokens[t].text) + ">";
        for (std::size_t i = 0; i + 3 <= word.size(); ++i) {
          add_hashed(v, "c3:" + word.substr(i, 3), seed, 1.0);
        }
        add_hashed(v, "w:" + word, seed, 1.0);
        for (int off = -2; off <= 2; ++off) {
          if (off == 0 || t + off < 0 || t + off >= sent.size()) continue;
          add_hashed(v, "ctx:" + to_lower(sent.tokens[t + off].text), seed, 1.5);
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm == 0.0) {
          v[0] = 1.0;
          norm = 1.0;
        }
        for (double x : v) values.push_back(x / norm);
      }
    }
  }
  return EmbeddingTable(dim, std::move(values));
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::max(-1.0, std::min(1.0, c));
}

}  // namespace rulegraph
