#ifndef RULEGRAPH_DISCRIMINATIVE_H_
#define RULEGRAPH_DISCRIMINATIVE_H_

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "rulegraph/corpus.h"
#include "rulegraph/generative.h"

namespace rulegraph {

// BIO tags: "O" first, then B-X and I-X for every entity label in order.
class BioTags {
 public:
  BioTags() = default;
  explicit BioTags(const std::vector<std::string>& labels);

  int size() const { return static_cast<int>(tags_.size()); }
  const std::string& tag(int i) const { return tags_.at(i); }
  const std::vector<std::string>& labels() const { return labels_; }
  std::optional<int> index(const std::string& tag) const;

  // Whether tag `to` may follow tag `from`; from = -1 is the sentence start.
  // I-X may only follow B-X or I-X.
  bool allowed(int from, int to) const;

  bool operator==(const BioTags& other) const { return labels_ == other.labels_; }

 private:
  std::vector<std::string> labels_;
  std::vector<std::string> tags_;
};

// Orthographic pattern with one symbol per code point. Upper case gives X,
// lower case x, digits d; other ASCII stays as is and non-ASCII code points
// give x. "NCBI" -> "XXXX".
std::string word_shape(std::string_view word);

// Feature strings for token t: bias, then for each offset in -2..2 the
// lowercased word, prefixes and suffixes of length 1-4, POS and shape.
// Positions outside the sentence give a single boundary marker.
std::vector<std::string> token_features(const Sentence& sentence, int t);

class FeatureVocab {
 public:
  int add(const std::string& name);
  std::optional<int> find(const std::string& name) const;
  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int id) const { return names_.at(id); }

  bool operator==(const FeatureVocab& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> ids_;
};

// Feature ids per token.
using SentenceFeatures = std::vector<std::vector<int>>;

// Every feature seen in the corpus, in first-seen order.
FeatureVocab build_vocab(const Corpus& corpus);
// Features missing from the vocabulary are dropped.
SentenceFeatures featurize(const Sentence& sentence, const FeatureVocab& vocab);
std::vector<SentenceFeatures> featurize_corpus(const Corpus& corpus, const FeatureVocab& vocab, int threads = 1);

struct CrfModel {
  BioTags tags;
  FeatureVocab vocab;
  std::vector<double> emission;    // vocab.size() x tags.size(), feature-major
  std::vector<double> transition;  // tags x tags, from -> to
  double l2 = 0.0;

  static CrfModel zeros(const BioTags& tags, const FeatureVocab& vocab, double l2);
  int num_tags() const { return tags.size(); }
  double emit(int feature, int tag) const { return emission[static_cast<std::size_t>(feature) * num_tags() + tag]; }
  double trans(int from, int to) const { return transition[from * num_tags() + to]; }
};

// Training target: per token a distribution over BIO tags. Adjacent pairs
// are weighted by the product of their token distributions.
struct CrfExample {
  SentenceFeatures features;
  std::vector<std::vector<double>> target;
};

// One-hot targets from BIO strings; throws DataError on an unknown tag or
// an invalid transition.
std::vector<std::vector<double>> hard_targets(const std::vector<std::string>& bio, const BioTags& tags);

// Maps IO marginals (over a TagSet) to BIO: P(B-X) = p_t(X) (1 - p_{t-1}(X))
// and P(I-X) = p_t(X) p_{t-1}(X), with p_{-1} = 0.
std::vector<std::vector<double>> soft_targets(const std::vector<std::vector<double>>& io_marginals,
                                              const TagSet& io_tags, const BioTags& tags);

// Unnormalized score of a tag sequence.
double crf_sequence_score(const CrfModel& model, const SentenceFeatures& x, const std::vector<int>& tags);
// Log partition function over valid BIO sequences (forward algorithm).
double crf_log_partition(const CrfModel& model, const SentenceFeatures& x);
// Per-token tag marginals.
std::vector<std::vector<double>> crf_marginals(const CrfModel& model, const SentenceFeatures& x);

struct CrfGradient {
  std::vector<double> emission;
  std::vector<double> transition;
};

// Regularized objective sum_i [E_target score - log Z] - l2_scale * l2 / 2 * |w|^2.
// Fills `grad` when given.
double crf_objective(const CrfModel& model, const std::vector<CrfExample>& data, double l2_scale = 1.0,
                     CrfGradient* grad = nullptr);

// Best valid sequence; ties go to the lower tag index at each step.
std::vector<int> crf_viterbi(const CrfModel& model, const SentenceFeatures& x);
std::vector<std::string> predict_crf(const CrfModel& model, const Sentence& sentence);
// Per sentence in corpus order.
std::vector<std::vector<std::string>> predict_corpus(const CrfModel& model, const Corpus& corpus, int threads = 1);

struct CrfConfig {
  double lr = 0.05;
  double l2 = 1e-3;
  int epochs = 20;
  int batch_size = 16;  // 0 = full batch
  bool soft_labels = false;

  void validate() const;
};

struct CrfTrainResult {
  CrfModel model;
  std::vector<double> objective;  // full objective after each epoch
};

// Adam ascent on mini-batches in an order shuffled per epoch from `seed`.
// Throws NumericError naming the epoch on a non-finite objective.
CrfTrainResult train_crf(const std::vector<CrfExample>& data, const BioTags& tags, const FeatureVocab& vocab,
                         const CrfConfig& cfg, std::uint64_t seed);

// "epoch,objective" rows.
std::string format_crf_log(const std::vector<double>& objective);

// "GLCM", u32 version, labels, features, f64 l2, f64 weights.
void save_crf_model(const CrfModel& model, const std::string& path);
CrfModel load_crf_model(const std::string& path);

}  // namespace rulegraph

#endif  // RULEGRAPH_DISCRIMINATIVE_H_
