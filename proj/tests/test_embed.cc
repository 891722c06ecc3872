#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "rulegraph/common.h"
#include "rulegraph/embed.h"

using namespace rulegraph;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("rulegraph_test_" + name)).string();
}

Corpus words(const std::vector<std::vector<std::string>>& sentences) {
  Document d{"d", {}};
  for (const auto& s : sentences) {
    Sentence sent;
    for (const auto& w : s) sent.tokens.push_back({w, "NN", std::nullopt, std::nullopt});
    d.sentences.push_back(sent);
  }
  return Corpus({d});
}

}  // namespace

TEST_CASE("table indexing and count mismatch") {
  Corpus c = words({{"a", "b", "c"}});
  EmbeddingTable t(2, {1, 0, 0, 1, 1, 1});
  const std::string path = temp_path("emb.bin");
  write_embedding_table(t, path);
  EmbeddingTable back = load_embedding_table(path, c);
  CHECK(back.row(2)[0] == 1.0);
  CHECK(back.row(2)[1] == 1.0);

  write_embedding_table(EmbeddingTable(2, {1, 0, 0, 1}), path);
  try {
    load_embedding_table(path, c);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("expected 3") != std::string::npos);
    CHECK(msg.find("found 2") != std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST_CASE("bad magic and version are rejected") {
  const std::string path = temp_path("bad.bin");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE";
  }
  CHECK_THROWS_AS(read_embedding_table(path), DataError);
  {
    std::ofstream out(path, std::ios::binary);
    out << "GLRE";
    const std::uint32_t v = 7;
    out.write(reinterpret_cast<const char*>(&v), 4);
  }
  CHECK_THROWS_AS(read_embedding_table(path), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("random table round trip") {
  Rng rng(11);
  std::vector<double> values(5 * 4);
  // Values representable in f32 survive the file exactly.
  for (double& v : values) v = static_cast<float>(rng.normal());
  EmbeddingTable t(4, values);
  const std::string path = temp_path("rt.bin");
  write_embedding_table(t, path);
  CHECK(read_embedding_table(path) == t);
  std::filesystem::remove(path);
}

TEST_CASE("mention and rule embeddings") {
  Corpus c = words({{"x", "y", "z"}, {"melanoma", "and", "carcinoma"}});
  EmbeddingTable t(2, {1, 0, 0, 1, 3, 5, 2, 0, 9, 9, 0, 2});
  CandidateMention one{0, 0, 0, 1, "p"};
  CandidateMention two{0, 0, 0, 2, "p"};
  CandidateMention three{0, 0, 0, 3, "p"};
  CHECK(mention_embedding(c, one, t) == std::vector<double>{1, 0});
  CHECK(mention_embedding(c, two, t) == std::vector<double>{0.5, 0.5});
  auto m3 = mention_embedding(c, three, t);
  CHECK(std::abs(m3[0] - (1.0 + 0.0 + 3.0) / 3.0) <= 1e-12);
  CHECK(std::abs(m3[1] - (0.0 + 1.0 + 5.0) / 3.0) <= 1e-12);
  CHECK(mention_embedding(c, three, t, Pooling::kFirstToken) == std::vector<double>{1, 0});

  std::vector<CandidateMention> ms = {{0, 1, 0, 1, "p"}, {0, 1, 2, 3, "p"}, one};
  CHECK(rule_embedding(c, ms, {0}, t) == mention_embedding(c, ms[0], t));
  CHECK(rule_embedding(c, ms, {0, 1}, t) == std::vector<double>{1, 1});
  // Duplicates and order do not matter.
  CHECK(rule_embedding(c, ms, {1, 0, 1}, t) == rule_embedding(c, ms, {0, 1}, t));
  CHECK_THROWS_AS(rule_embedding(c, ms, {}, t), DataError);

  // "*noma" over the fixture: brute-force average of the matched mentions.
  Rule noma{RuleKind::kSuffix, "noma", "Disease", Polarity::kPositive};
  auto matched = match_rule(noma, c, ms);
  REQUIRE(matched.size() == 2);
  std::vector<double> expect(2, 0.0);
  for (auto i : matched) {
    const std::size_t g = c.global_index(ms[i].doc, ms[i].sent, ms[i].start);
    for (int k = 0; k < 2; ++k) expect[k] += t.row(g)[k] / 2.0;
  }
  auto got = rule_embedding(c, ms, matched, t);
  CHECK(std::abs(got[0] - expect[0]) <= 1e-12);
  CHECK(std::abs(got[1] - expect[1]) <= 1e-12);
}

TEST_CASE("hash fallback embeddings") {
  Corpus c = words({{"the", "tumor", "grew", "fast"}, {"the", "tumor", "grew", "fast"},
                    {"an", "unrelated", "sentence"}});
  EmbeddingTable a = hash_fallback_embed(c, 32, 7);
  EmbeddingTable b = hash_fallback_embed(c, 32, 7);
  CHECK(a == b);
  CHECK(a.rows() == c.token_count());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double n = 0.0;
    for (double x : a.row(i)) n += x * x;
    CHECK(std::abs(std::sqrt(n) - 1.0) <= 1e-9);
  }
  for (int t = 0; t < 4; ++t) {
    auto r1 = a.row(t), r2 = a.row(4 + t);
    CHECK(std::equal(r1.begin(), r1.end(), r2.begin()));
  }
  EmbeddingTable other = hash_fallback_embed(c, 32, 8);
  CHECK_FALSE(other == a);
  CHECK(hash_fallback_embed(c, 1, 3).dim() == 1);
  CHECK_THROWS_AS(hash_fallback_embed(c, 0, 3), DataError);
}

TEST_CASE("cosine similarity") {
  std::vector<double> x = {0.3, -2.0, 1.5};
  CHECK(cosine_similarity(x, x) == doctest::Approx(1.0).epsilon(1e-15));
  std::vector<double> y = {-0.3, 2.0, -1.5};
  CHECK(cosine_similarity(x, y) == doctest::Approx(-1.0).epsilon(1e-15));
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> a(4), b(4);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    const double s = cosine_similarity(a, b);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
  }
}
