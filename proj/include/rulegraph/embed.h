#ifndef RULEGRAPH_EMBED_H_
#define RULEGRAPH_EMBED_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rulegraph/corpus.h"
#include "rulegraph/mentions.h"
#include "rulegraph/rules.h"

namespace rulegraph {

// One vector per global token index. Files store f32; values kept in memory
// at double precision so derived quantities are not re-rounded.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(int dim, std::vector<double> values);

  int dim() const { return dim_; }
  std::size_t rows() const { return dim_ == 0 ? 0 : values_.size() / dim_; }
  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }
  const std::vector<double>& values() const { return values_; }

  bool operator==(const EmbeddingTable&) const = default;

 private:
  int dim_ = 0;
  std::vector<double> values_;
};

// Little-endian: "GLRE", u32 version=1, u32 dim, u64 token_count, f32 rows.
void write_embedding_table(const EmbeddingTable& table, const std::string& path);
EmbeddingTable read_embedding_table(const std::string& path);
// Also checks the row count against the corpus.
EmbeddingTable load_embedding_table(const std::string& path, const Corpus& corpus);

enum class Pooling { kMean, kFirstToken };

std::vector<double> mention_embedding(const Corpus& corpus, const CandidateMention& m,
                                      const EmbeddingTable& table, Pooling pooling = Pooling::kMean);

// Mean of mention embeddings over the distinct matched mentions.
std::vector<double> rule_embedding(const Corpus& corpus, const std::vector<CandidateMention>& mentions,
                                   const std::vector<std::size_t>& matches,
                                   const EmbeddingTable& table, Pooling pooling = Pooling::kMean);

// Deterministic stand-in for contextual embeddings: signed feature hashing of
// the token's character trigrams plus a bag of the words within two positions,
// L2-normalized.
EmbeddingTable hash_fallback_embed(const Corpus& corpus, int dim, std::uint64_t seed);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace rulegraph

#endif  // RULEGRAPH_EMBED_H_
