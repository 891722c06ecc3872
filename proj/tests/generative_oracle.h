#ifndef RULEGRAPH_TESTS_GENERATIVE_ORACLE_H_
#define RULEGRAPH_TESTS_GENERATIVE_ORACLE_H_

// Independent re-statements of the tagging model used as test oracles:
// emission and link factors computed directly from the definition, and
// exhaustive enumeration over every tag sequence.

#include <cmath>
#include <string>
#include <vector>

#include "rulegraph/common.h"
#include "rulegraph/generative.h"

namespace rulegraph::testing {

inline Corpus flat_corpus(const std::vector<int>& lengths) {
  Document d{"d0", {}};
  for (int n : lengths) {
    Sentence s;
    for (int i = 0; i < n; ++i) s.tokens.push_back({"w" + std::to_string(i), "NN", std::nullopt, std::nullopt});
    d.sentences.push_back(s);
  }
  return Corpus({d});
}

inline std::vector<double> random_simplex(Rng& rng, int n) {
  std::vector<double> p(n);
  double sum = 0.0;
  for (double& v : p) sum += (v = 0.05 + rng.uniform());
  for (double& v : p) v /= sum;
  return p;
}

struct Instance {
  GenerativeModel model;
  CompiledSentence sentence;
};

inline Instance random_instance(Rng& rng, int length, int num_tags, int num_rules, int num_sources,
                                bool tag_independent = false) {
  std::vector<std::string> labels;
  for (int i = 1; i < num_tags; ++i) labels.push_back("T" + std::to_string(i));
  Instance inst;
  GenerativeModel& m = inst.model;
  m.tags = TagSet(labels);
  m.config.tag_independent_propensity = tag_independent;
  m.start = random_simplex(rng, num_tags);
  for (int a = 0; a < num_tags; ++a)
    for (double v : random_simplex(rng, num_tags)) m.transition.push_back(v);
  for (int j = 0; j < num_rules; ++j) {
    m.accuracy.push_back(rng.uniform(0.3, 0.97));
    const double shared = rng.uniform(0.05, 0.95);
    for (int y = 0; y < num_tags; ++y) m.propensity.push_back(tag_independent ? shared : rng.uniform(0.05, 0.95));
  }
  for (int s = 0; s < num_sources; ++s) m.link_accuracy.push_back(rng.uniform(0.3, 0.95));

  CompiledSentence& cs = inst.sentence;
  cs.length = length;
  cs.id = "d0/0";
  cs.votes.resize(length);
  cs.links.assign(length, std::vector<LinkVote>(num_sources, LinkVote::kAbstain));
  for (int t = 0; t < length; ++t) {
    for (int j = 0; j < num_rules; ++j)
      if (rng.bernoulli(0.4)) cs.votes[t].push_back({j, static_cast<int>(rng.below(num_tags))});
    if (t > 0)
      for (int s = 0; s < num_sources; ++s) cs.links[t][s] = static_cast<LinkVote>(rng.below(3));
  }
  return inst;
}

// Product over all rules of the vote-or-abstain probability given tag y.
inline double oracle_emission(const GenerativeModel& m, const CompiledSentence& s, int t, int y) {
  const int L = m.num_tags();
  double p = 1.0;
  for (std::size_t j = 0; j < m.num_rules(); ++j) {
    const CompiledVote* vote = nullptr;
    for (const auto& v : s.votes[t])
      if (v.rule == static_cast<int>(j)) vote = &v;
    if (vote == nullptr) {
      p *= 1.0 - m.rho(j, y);
    } else {
      const double th = m.accuracy[j];
      p *= m.rho(j, y) * (vote->tag == y ? th : (1.0 - th) / (L - 1));
    }
  }
  return p;
}

// Link factor for the pair (t-1, t) with tags a, b.
inline double oracle_link(const GenerativeModel& m, const CompiledSentence& s, int t, int a, int b) {
  double p = 1.0;
  for (std::size_t src = 0; src < m.link_accuracy.size(); ++src) {
    const double lam = m.link_accuracy[src];
    switch (s.links[t][src]) {
      case LinkVote::kLink: p *= a == b ? lam : 1.0 - lam; break;
      case LinkVote::kBreak: p *= a == b ? 1.0 - lam : lam; break;
      case LinkVote::kAbstain: break;
    }
  }
  return p;
}

struct Enumeration {
  double total = 0.0;
  std::vector<std::vector<double>> marginals;
  std::vector<int> argmax;
};

inline Enumeration enumerate(const GenerativeModel& m, const CompiledSentence& s) {
  const int L = m.num_tags(), T = s.length;
  Enumeration e;
  e.marginals.assign(T, std::vector<double>(L, 0.0));
  std::vector<int> y(T, 0);
  double best = -1.0;
  while (true) {
    double p = m.start[y[0]] * oracle_emission(m, s, 0, y[0]);
    for (int t = 1; t < T; ++t)
      p *= m.trans(y[t - 1], y[t]) * oracle_link(m, s, t, y[t - 1], y[t]) * oracle_emission(m, s, t, y[t]);
    e.total += p;
    for (int t = 0; t < T; ++t) e.marginals[t][y[t]] += p;
    // Odometer order visits sequences lexicographically with the last
    // position fastest; keeping the first strict maximum matches a
    // lowest-index tie rule only when ties are absent, which holds for
    // random real parameters.
    if (p > best) {
      best = p;
      e.argmax = y;
    }
    int t = T - 1;
    while (t >= 0 && ++y[t] == L) y[t--] = 0;
    if (t < 0) break;
  }
  for (auto& row : e.marginals)
    for (double& v : row) v /= e.total;
  return e;
}

struct KnownModelSample {
  Corpus corpus;
  TagSet tags;
  LabelMatrix matrix;
  LinkTable links;
  std::vector<int> truth;
};

// Samples tag sequences from a sticky chain and rule votes with known
// accuracies; rule j votes with propensity 0.5 and accuracy 0.6 + 0.3 j / R.
inline KnownModelSample sample_known_model(Rng& rng, int sentences, int length, int num_tags, int num_rules,
                                           int num_sources) {
  std::vector<std::string> labels;
  for (int i = 1; i < num_tags; ++i) labels.push_back("T" + std::to_string(i));
  KnownModelSample out;
  out.tags = TagSet(labels);
  out.corpus = flat_corpus(std::vector<int>(sentences, length));
  const std::size_t n = out.corpus.token_count();
  out.matrix = LabelMatrix(n, num_rules);
  out.links = LinkTable(n, num_sources);
  std::size_t g = 0;
  for (int s = 0; s < sentences; ++s) {
    int prev = -1;
    for (int t = 0; t < length; ++t, ++g) {
      int y = prev >= 0 && rng.bernoulli(0.7) ? prev : static_cast<int>(rng.below(num_tags));
      out.truth.push_back(y);
      for (int j = 0; j < num_rules; ++j) {
        if (!rng.bernoulli(0.5)) continue;
        const double acc = 0.6 + 0.3 * j / num_rules;
        int v = y;
        if (!rng.bernoulli(acc)) v = (y + 1 + static_cast<int>(rng.below(num_tags - 1))) % num_tags;
        out.matrix.add(g, j, out.tags.tag(v));
      }
      if (t > 0)
        for (int src = 0; src < num_sources; ++src) {
          if (!rng.bernoulli(0.5)) continue;
          const bool same = y == prev;
          const bool right = rng.bernoulli(0.8);
          out.links.set(src, g, same == right ? LinkVote::kLink : LinkVote::kBreak);
        }
      prev = y;
    }
  }
  return out;
}

// One rule voting on every token with a known accuracy over a sticky
// chain of `num_tags` tags; sentences of `length` tokens.
inline KnownModelSample sample_single_rule(Rng& rng, int sentences, int length, int num_tags, double accuracy,
                                           double stay) {
  std::vector<std::string> labels;
  for (int i = 1; i < num_tags; ++i) labels.push_back("T" + std::to_string(i));
  KnownModelSample out;
  out.tags = TagSet(labels);
  out.corpus = flat_corpus(std::vector<int>(sentences, length));
  out.matrix = LabelMatrix(out.corpus.token_count(), 1);
  std::size_t g = 0;
  for (int s = 0; s < sentences; ++s) {
    int y = static_cast<int>(rng.below(num_tags));
    for (int t = 0; t < length; ++t, ++g) {
      if (t > 0 && !rng.bernoulli(stay)) y = static_cast<int>(rng.below(num_tags));
      out.truth.push_back(y);
      int v = y;
      if (!rng.bernoulli(accuracy)) v = (y + 1 + static_cast<int>(rng.below(num_tags - 1))) % num_tags;
      out.matrix.add(g, 0, out.tags.tag(v));
    }
  }
  return out;
}

}  // namespace rulegraph::testing

#endif  // RULEGRAPH_TESTS_GENERATIVE_ORACLE_H_
