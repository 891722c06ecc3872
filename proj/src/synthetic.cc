#include "rulegraph/synthetic.h"

#include <filesystem>
#include <set>

#include "json.hpp"
#include "rulegraph/common.h"

namespace rulegraph {

namespace {

const std::vector<std::string> kDiseaseSuffixes = {"noma", "itis", "osis", "emia", "pathy", "plasia", "trophy", "algia"};
const std::vector<std::string> kOtherSuffixes = {"tion", "ment", "ance", "ity", "ure", "ism"};
const std::vector<std::string> kDiseaseAdjectives = {"acute", "chronic", "severe", "congenital"};
const std::vector<std::string> kOtherAdjectives = {"high", "low", "daily", "total"};
const std::vector<std::string> kCommonNouns = {"dose", "therapy", "study", "surgery", "diet", "exposure"};

// Word/POS pairs; <E> is a disease slot and <N> another noun phrase.
const std::vector<std::string> kDiseaseTemplates = {
    "Patients/NNS with/IN <E> were/VBD treated/VBN with/IN <N> ./.",
    "The/DT patient/NN suffered/VBD from/IN <E> ./.",
    "He/PRP was/VBD diagnosed/VBN with/IN <E> ./.",
    "<E> is/VBZ a/DT common/JJ cause/NN of/IN <N> ./.",
    "We/PRP report/VBP a/DT case/NN of/IN <E> in/IN <N> ./.",
    "The/DT risk/NN of/IN <E> increased/VBD with/IN <N> ./.",
    "Symptoms/NNS of/IN <E> included/VBD <N> ./.",
    "<E> was/VBD observed/VBN after/IN <N> ./.",
};

const std::vector<std::string> kOtherTemplates = {
    "The/DT <N> of/IN the/DT <N> was/VBD measured/VBN ./.",
    "Levels/NNS of/IN <N> decreased/VBD after/IN <N> ./.",
    "<N> improved/VBD the/DT <N> ./.",
    "The/DT <N> showed/VBD no/DT <N> ./.",
    "Patients/NNS received/VBD <N> during/IN the/DT study/NN ./.",
};

struct Vocabulary {
  std::vector<std::vector<std::string>> disease;  // per family
  std::vector<std::vector<std::string>> other;
  std::vector<std::string> eponyms;               // capitalized stems
};

std::string make_stem(Rng& rng, std::set<std::string>& used) {
  static const std::string consonants = "bcdfgklmnprstvz";
  static const std::string vowels = "aeiou";
  while (true) {
    std::string s;
    const int syllables = 2 + static_cast<int>(rng.below(2));
    for (int i = 0; i < syllables; ++i) {
      s.push_back(consonants[rng.below(consonants.size())]);
      s.push_back(vowels[rng.below(vowels.size())]);
    }
    if (used.insert(s).second) return s;
  }
}

Vocabulary make_vocabulary(Rng& rng, int stems_per_family) {
  std::set<std::string> used;
  Vocabulary v;
  for (const auto& suffix : kDiseaseSuffixes) {
    v.disease.emplace_back();
    for (int i = 0; i < stems_per_family; ++i) v.disease.back().push_back(make_stem(rng, used) + suffix);
  }
  for (const auto& suffix : kOtherSuffixes) {
    v.other.emplace_back();
    for (int i = 0; i < stems_per_family; ++i) v.other.back().push_back(make_stem(rng, used) + suffix);
  }
  for (int i = 0; i < 6; ++i) {
    std::string s = make_stem(rng, used);
    s[0] = static_cast<char>(s[0] - 'a' + 'A');
    v.eponyms.push_back(s);
  }
  return v;
}

struct Piece {
  std::string text;
  std::string pos;
};

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& xs) {
  return xs[rng.below(xs.size())];
}

std::vector<Piece> disease_phrase(Rng& rng, const Vocabulary& v) {
  const double r = rng.uniform();
  if (r < 0.75) return {{pick(rng, pick(rng, v.disease)), "NN"}};
  if (r < 0.87) return {{pick(rng, kDiseaseAdjectives), "JJ"}, {pick(rng, pick(rng, v.disease)), "NN"}};
  return {{pick(rng, v.eponyms), "NNP"}, {rng.bernoulli(0.5) ? "syndrome" : "disease", "NN"}};
}

std::vector<Piece> other_phrase(Rng& rng, const Vocabulary& v) {
  const double r = rng.uniform();
  if (r < 0.7) return {{pick(rng, pick(rng, v.other)), "NN"}};
  if (r < 0.85) return {{pick(rng, kOtherAdjectives), "JJ"}, {pick(rng, pick(rng, v.other)), "NN"}};
  return {{pick(rng, kCommonNouns), "NN"}};
}

bool is_noun(const std::string& pos) { return pos == "NN" || pos == "NNS" || pos == "NNP" || pos == "PRP"; }
bool is_verb(const std::string& pos) { return pos.rfind("VB", 0) == 0; }

// Fills dependency heads and labels: noun chunks headed by their last
// token, determiners, adjectives and prepositions attached to the next
// chunk head, chunk heads to the main verb (or to the previous chunk head
// after "of").
void add_dependencies(Sentence& s, const std::vector<int>& chunk_of) {
  const int n = s.size();
  int root = -1;
  for (int i = 0; i < n && root < 0; ++i)
    if (is_verb(s.tokens[i].pos) && !(i + 1 < n && is_verb(s.tokens[i + 1].pos))) root = i;
  auto chunk_head = [&](int i) {
    int j = i;
    while (j + 1 < n && chunk_of[j + 1] == chunk_of[i] && chunk_of[i] >= 0) ++j;
    return j;
  };
  auto next_head = [&](int i) {
    for (int j = i + 1; j < n; ++j)
      if (chunk_of[j] >= 0) return chunk_head(j);
    return root;
  };
  for (int i = 0; i < n; ++i) {
    Token& tok = s.tokens[i];
    if (i == root) continue;
    const std::string& pos = tok.pos;
    if (chunk_of[i] >= 0) {
      const int h = chunk_head(i);
      if (h != i) {
        tok.dep_head = h;
        tok.dep_label = pos == "JJ" ? "amod" : "compound";
        continue;
      }
      int prev_head = -1;
      int start = i;
      while (start > 0 && chunk_of[start - 1] == chunk_of[i]) --start;
      for (int j = start - 1; j >= 0; --j)
        if (chunk_of[j] >= 0) {
          prev_head = j;
          break;
        }
      if (start > 0 && to_lower(s.tokens[start - 1].text) == "of" && prev_head >= 0) {
        tok.dep_head = prev_head;
        tok.dep_label = "nmod";
      } else if (start == 0 || i < root) {
        tok.dep_head = root;
        tok.dep_label = "nsubj";
      } else {
        tok.dep_head = root;
        tok.dep_label = start == root + 1 ? "obj" : "obl";
      }
      continue;
    }
    if (pos == "DT" || pos == "JJ" || pos == "IN") {
      tok.dep_head = next_head(i);
      tok.dep_label = pos == "DT" ? "det" : pos == "JJ" ? "amod" : "case";
    } else if (is_verb(pos)) {
      tok.dep_head = root;
      tok.dep_label = "aux";
    } else {
      tok.dep_head = root;
      tok.dep_label = pos == "." ? "punct" : "dep";
    }
    if (tok.dep_head && *tok.dep_head == i) tok.dep_head = root;
  }
}

Sentence make_sentence(Rng& rng, const Vocabulary& v, const std::string& tmpl) {
  Sentence s;
  std::vector<Span> gold;
  std::vector<int> chunk_of;
  int chunks = 0;
  for (const auto& item : split(tmpl, ' ')) {
    if (item == "<E>" || item == "<N>") {
      const bool disease = item == "<E>";
      auto phrase = disease ? disease_phrase(rng, v) : other_phrase(rng, v);
      const int start = s.size();
      for (auto& p : phrase) {
        s.tokens.push_back({p.text, p.pos, std::nullopt, std::nullopt});
        chunk_of.push_back(chunks);
      }
      ++chunks;
      if (disease) gold.push_back({start, s.size(), "Disease"});
      continue;
    }
    const auto slash = item.rfind('/');
    Piece p{item.substr(0, slash), item.substr(slash + 1)};
    s.tokens.push_back({p.text, p.pos, std::nullopt, std::nullopt});
    chunk_of.push_back(is_noun(p.pos) ? chunks++ : -1);
  }
  std::string& first = s.tokens[0].text;
  if (first[0] >= 'a' && first[0] <= 'z') first[0] = static_cast<char>(first[0] - 'a' + 'A');
  add_dependencies(s, chunk_of);
  s.gold_spans = gold;
  return s;
}

Corpus make_corpus(Rng& rng, const Vocabulary& v, int sentences, double disease_rate, const std::string& prefix) {
  std::vector<Document> docs;
  for (int i = 0; i < sentences; ++i) {
    if (i % 20 == 0) docs.push_back({prefix + std::to_string(i / 20), {}});
    const auto& tmpl = rng.bernoulli(disease_rate) ? pick(rng, kDiseaseTemplates) : pick(rng, kOtherTemplates);
    docs.back().sentences.push_back(make_sentence(rng, v, tmpl));
  }
  return Corpus(std::move(docs));
}

}  // namespace

SynthData generate_synthetic(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.train_sentences < 1 || cfg.dev_sentences < 1 || cfg.test_sentences < 1) {
    throw DataError("synthetic corpus sizes must be positive");
  }
  if (cfg.stems_per_family < 2) throw DataError("stems_per_family must be at least 2");
  Rng rng(seed);
  Vocabulary v = make_vocabulary(rng, cfg.stems_per_family);
  SynthData out;
  out.train = make_corpus(rng, v, cfg.train_sentences, cfg.disease_rate, "train");
  out.dev = make_corpus(rng, v, cfg.dev_sentences, cfg.disease_rate, "dev");
  out.test = make_corpus(rng, v, cfg.test_sentences, cfg.disease_rate, "test");

  auto add = [&](RuleKind kind, const std::string& key, Polarity pol) {
    out.seeds.add(Rule{kind, key, "Disease", pol});
  };
  add(RuleKind::kSuffix, "noma", Polarity::kPositive);
  add(RuleKind::kSuffix, "itis", Polarity::kPositive);
  add(RuleKind::kSuffix, "tion", Polarity::kNegative);
  add(RuleKind::kSuffix, "ment", Polarity::kNegative);
  add(RuleKind::kSurfaceForm, v.disease[2][0], Polarity::kPositive);
  add(RuleKind::kSurfaceForm, v.disease[3][0], Polarity::kPositive);
  add(RuleKind::kSurfaceForm, "patient", Polarity::kNegative);
  add(RuleKind::kSurfaceForm, "risk", Polarity::kNegative);
  add(RuleKind::kPreNgramExclusive, "suffered_from", Polarity::kPositive);
  add(RuleKind::kPreNgramExclusive, "levels_of", Polarity::kNegative);
  return out;
}

void write_synthetic(const SynthData& data, const std::string& dir, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path d(dir);
  save_corpus(data.train, (d / "train.conll").string(), CorpusFormat::kConllTsv);
  save_corpus(data.dev, (d / "dev.conll").string(), CorpusFormat::kConllTsv);
  save_corpus(data.test, (d / "test.conll").string(), CorpusFormat::kConllTsv);
  save_seed_rules(data.seeds, (d / "seeds.tsv").string());

  nlohmann::ordered_json kinds = nlohmann::ordered_json::object();
  for (RuleKind k : kAllRuleKinds) {
    const bool on = k == RuleKind::kSuffix || k == RuleKind::kSurfaceForm || k == RuleKind::kPreNgramExclusive;
    const int m = k == RuleKind::kSuffix ? 30 : k == RuleKind::kSurfaceForm ? 40 : 8;
    kinds[std::string(kind_name(k))] = {{"enabled", on}, {"M", m}, {"epochs", 50}};
  }
  nlohmann::ordered_json cfg = {
      {"corpus", {{"train", "train.conll"}, {"dev", "dev.conll"}, {"test", "test.conll"}}},
      {"embeddings", {{"path", nullptr}, {"fallback_dim", 64}, {"fallback_seed", 13}}},
      {"seed_rules", "seeds.tsv"},
      {"labels", {"Disease"}},
      {"rule_kinds", kinds},
      {"propagation", {{"hidden", 32}, {"lr", 1e-3}}},
      {"crf", {{"epochs", 10}}},
      {"seed", seed},
  };
  write_text_file((d / "config.json").string(), cfg.dump(2) + "\n");
}

}  // namespace rulegraph
