#ifndef RULEGRAPH_GENERATIVE_H_
#define RULEGRAPH_GENERATIVE_H_

#include <optional>
#include <string>
#include <vector>

#include "rulegraph/corpus.h"
#include "rulegraph/labeling.h"

namespace rulegraph {

// IO tag inventory with "O" at index 0.
class TagSet {
 public:
  TagSet() = default;
  // Entity labels in order; "O" is prepended. Needs at least one label.
  explicit TagSet(const std::vector<std::string>& labels);

  int size() const { return static_cast<int>(tags_.size()); }
  const std::string& tag(int i) const { return tags_.at(i); }
  const std::vector<std::string>& tags() const { return tags_; }
  std::optional<int> index(const std::string& tag) const;

  bool operator==(const TagSet&) const = default;

 private:
  std::vector<std::string> tags_;
};

struct GenerativeConfig {
  double init_acc = 0.85;
  double acc_prior = 5.0;
  double balance_prior = 1.0;
  int epochs = 5;
  // One propensity per rule shared by all tags.
  bool tag_independent_propensity = false;

  void validate() const;
};

// HMM over IO tags. Each rule j votes on a token with probability
// rho[j][y] given the true tag y; a vote is correct with probability
// theta[j] and otherwise spread evenly over the other tags. Each link source
// s votes LINK or BREAK on an adjacent pair and is right with probability
// link_accuracy[s]. Priors (MAP):
//   theta_j, link accuracies ~ Beta(1 + acc_prior * init_acc, 1 + acc_prior * (1 - init_acc))
//   rho_{j,y}                ~ Beta(2, 2)
//   start, transition rows   ~ Dirichlet(2 + balance_prior * [tag = O])
struct GenerativeModel {
  TagSet tags;
  std::vector<double> start;          // L
  std::vector<double> transition;     // L x L, row-major, from -> to
  std::vector<double> accuracy;       // per rule
  std::vector<double> propensity;     // rules x L
  std::vector<double> link_accuracy;  // per link source
  GenerativeConfig config;

  int num_tags() const { return tags.size(); }
  std::size_t num_rules() const { return accuracy.size(); }
  double trans(int from, int to) const { return transition[from * num_tags() + to]; }
  double rho(std::size_t rule, int tag) const { return propensity[rule * num_tags() + tag]; }

  // Log of the prior density up to an additive constant.
  double log_prior() const;
  // Throws DataError unless every distribution is normalized within 1e-9
  // and every probability lies in (0, 1).
  void validate() const;
};

// Votes translated to tag indices, grouped by sentence.
struct CompiledVote {
  int rule = 0;
  int tag = 0;
};

struct CompiledSentence {
  std::size_t offset = 0;  // global index of token 0
  int length = 0;
  std::string id;          // "doc/sent" for messages
  std::vector<std::vector<CompiledVote>> votes;    // per token
  std::vector<std::vector<LinkVote>> links;        // per token (right token of pair), per source
};

struct CompiledData {
  std::vector<CompiledSentence> sentences;
  std::size_t num_rules = 0;
  std::size_t num_sources = 0;
};

// Throws DataError on a vote label outside the tag set.
CompiledData compile_votes(const Corpus& corpus, const LabelMatrix& matrix, const LinkTable* links,
                           const TagSet& tags);

GenerativeModel init_generative(const LabelMatrix& matrix, std::size_t num_link_sources, const TagSet& tags,
                                const GenerativeConfig& cfg);

struct FitResult {
  GenerativeModel model;
  // MAP objective (log-likelihood + log prior) before the first epoch and
  // after every epoch: epochs + 1 values.
  std::vector<double> objective;
};

FitResult fit_em(GenerativeModel model, const CompiledData& data, int epochs, int threads = 1);

// Log-likelihood of the observed votes of one sentence (forward algorithm).
double sentence_log_likelihood(const GenerativeModel& model, const CompiledSentence& s);
// Same value from the backward pass.
double sentence_log_likelihood_backward(const GenerativeModel& model, const CompiledSentence& s);

// Per token, a distribution over tags.
using Marginals = std::vector<std::vector<double>>;

Marginals posterior_marginals(const GenerativeModel& model, const CompiledSentence& s);
std::vector<int> viterbi_decode(const GenerativeModel& model, const CompiledSentence& s);

// Direct summation over all tag sequences; evaluates every rule's factor
// (voting or abstaining) from the model definition. Length <= 10.
double sequence_likelihood_bruteforce(const GenerativeModel& model, const CompiledSentence& s);

// Whole-corpus helpers, parallel per sentence; results in global token order.
std::vector<std::vector<double>> corpus_marginals(const GenerativeModel& model, const CompiledData& data,
                                                  int threads = 1);
std::vector<std::vector<int>> corpus_viterbi(const GenerativeModel& model, const CompiledData& data,
                                             int threads = 1);

// doc<TAB>sent<TAB>tok<TAB>tag:prob,... with 4 decimals.
std::string format_marginals(const Corpus& corpus, const TagSet& tags,
                             const std::vector<std::vector<double>>& marginals);
std::vector<std::vector<double>> parse_marginals(std::string_view text, const Corpus& corpus,
                                                 const TagSet& tags);

// "GLGM", u32 version, tags, counts, then f64 parameters and priors.
void save_generative_model(const GenerativeModel& model, const std::string& path);
GenerativeModel load_generative_model(const std::string& path);

}  // namespace rulegraph

#endif  // RULEGRAPH_GENERATIVE_H_
