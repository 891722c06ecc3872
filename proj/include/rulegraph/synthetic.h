#ifndef RULEGRAPH_SYNTHETIC_H_
#define RULEGRAPH_SYNTHETIC_H_

#include <cstdint>
#include <string>

#include "rulegraph/corpus.h"
#include "rulegraph/rules.h"

namespace rulegraph {

// Generator for a small biomedical-style NER corpus with one entity class,
// "Disease". Disease words are a stem plus a family suffix such as "noma"
// and appear in disease contexts ("suffered from X"); other nouns come in
// their own suffix families and contexts. Tokens carry POS and dependency
// annotation and sentences carry gold spans.
struct SynthConfig {
  int train_sentences = 2000;
  int dev_sentences = 200;
  int test_sentences = 500;
  int stems_per_family = 8;
  // Fraction of sentences built from a disease template.
  double disease_rate = 0.6;
};

struct SynthData {
  Corpus train;
  Corpus dev;
  Corpus test;
  // Ten seeds of three kinds, both polarities. Most disease families are
  // left for propagation to find.
  RuleSet seeds;
};

SynthData generate_synthetic(const SynthConfig& cfg, std::uint64_t seed);

// Writes train.conll, dev.conll, test.conll, seeds.tsv and a config.json
// that runs the whole pipeline on them with hash embeddings.
void write_synthetic(const SynthData& data, const std::string& dir, std::uint64_t seed);

}  // namespace rulegraph

#endif  // RULEGRAPH_SYNTHETIC_H_
