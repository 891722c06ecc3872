#include "rulegraph/discriminative.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "rulegraph/binary_io.h"
#include "rulegraph/common.h"

namespace rulegraph {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const double* v, int n) {
  double mx = kNegInf;
  for (int i = 0; i < n; ++i) mx = std::max(mx, v[i]);
  if (mx == kNegInf) return kNegInf;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(v[i] - mx);
  return mx + std::log(s);
}

std::vector<const Sentence*> flat_sentences(const Corpus& corpus) {
  std::vector<const Sentence*> out;
  out.reserve(corpus.num_sentences());
  for (const auto& d : corpus.documents())
    for (const auto& s : d.sentences) out.push_back(&s);
  return out;
}

// Code points of s as substrings.
std::vector<std::string_view> code_points(std::string_view s) {
  auto b = utf8_boundaries(s);
  std::vector<std::string_view> out;
  for (std::size_t i = 0; i + 1 < b.size(); ++i) out.push_back(s.substr(b[i], b[i + 1] - b[i]));
  return out;
}

}  // namespace

BioTags::BioTags(const std::vector<std::string>& labels) : labels_(labels) {
  if (labels.empty()) throw DataError("BIO tag set needs at least one entity label");
  tags_.push_back("O");
  for (const auto& l : labels) {
    if (l.empty() || l == "O") throw DataError("invalid entity label: '" + l + "'");
    tags_.push_back("B-" + l);
    tags_.push_back("I-" + l);
  }
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (labels[i] == labels[j]) throw DataError("duplicate entity label: " + labels[i]);
}

std::optional<int> BioTags::index(const std::string& tag) const {
  for (int i = 0; i < size(); ++i)
    if (tags_[i] == tag) return i;
  return std::nullopt;
}

bool BioTags::allowed(int from, int to) const {
  if (to == 0 || to % 2 == 1) return true;  // O or B-X
  // to is I-X with X = to / 2 - 1; predecessor must be B-X (to - 1) or I-X.
  return from == to - 1 || from == to;
}

std::string word_shape(std::string_view word) {
  std::string out;
  for (auto cp : code_points(word)) {
    const unsigned char c = static_cast<unsigned char>(cp[0]);
    if (cp.size() > 1 || c >= 0x80) {
      out.push_back('x');
    } else if (c >= 'A' && c <= 'Z') {
      out.push_back('X');
    } else if (c >= 'a' && c <= 'z') {
      out.push_back('x');
    } else if (c >= '0' && c <= '9') {
      out.push_back('d');
    } else {
      out.push_back(static_cast<char>(c));
    }
  }
  return out;
}

std::vector<std::string> token_features(const Sentence& sentence, int t) {
  std::vector<std::string> out;
  out.reserve(56);
  out.emplace_back("bias");
  for (int off = -2; off <= 2; ++off) {
    const int i = t + off;
    const std::string tag = "[" + std::to_string(off) + "]";
    if (i < 0 || i >= sentence.size()) {
      out.push_back("w" + tag + "=" + (i < 0 ? "<s>" : "</s>"));
      continue;
    }
    const Token& tok = sentence.tokens[i];
    const std::string lower = to_lower(tok.text);
    out.push_back("w" + tag + "=" + lower);
    auto cps = code_points(lower);
    const int n = static_cast<int>(cps.size());
    for (int k = 1; k <= 4 && k <= n; ++k) {
      const std::size_t pre_len = cps[k - 1].data() + cps[k - 1].size() - lower.data();
      const std::size_t suf_at = cps[n - k].data() - lower.data();
      out.push_back("p" + std::to_string(k) + tag + "=" + lower.substr(0, pre_len));
      out.push_back("s" + std::to_string(k) + tag + "=" + lower.substr(suf_at));
    }
    out.push_back("pos" + tag + "=" + tok.pos);
    out.push_back("shape" + tag + "=" + word_shape(tok.text));
  }
  return out;
}

int FeatureVocab::add(const std::string& name) {
  auto [it, inserted] = ids_.emplace(name, static_cast<int>(names_.size()));
  if (inserted) names_.push_back(name);
  return it->second;
}

std::optional<int> FeatureVocab::find(const std::string& name) const {
  auto it = ids_.find(name);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

FeatureVocab build_vocab(const Corpus& corpus) {
  FeatureVocab vocab;
  for (const Sentence* s : flat_sentences(corpus))
    for (int t = 0; t < s->size(); ++t)
      for (const auto& f : token_features(*s, t)) vocab.add(f);
  return vocab;
}

SentenceFeatures featurize(const Sentence& sentence, const FeatureVocab& vocab) {
  SentenceFeatures out(sentence.size());
  for (int t = 0; t < sentence.size(); ++t) {
    for (const auto& f : token_features(sentence, t))
      if (auto id = vocab.find(f)) out[t].push_back(*id);
    std::sort(out[t].begin(), out[t].end());
  }
  return out;
}

std::vector<SentenceFeatures> featurize_corpus(const Corpus& corpus, const FeatureVocab& vocab, int threads) {
  auto sentences = flat_sentences(corpus);
  std::vector<SentenceFeatures> out(sentences.size());
  parallel_for(sentences.size(), threads, [&](std::size_t i) { out[i] = featurize(*sentences[i], vocab); });
  return out;
}

CrfModel CrfModel::zeros(const BioTags& tags, const FeatureVocab& vocab, double l2) {
  CrfModel m;
  m.tags = tags;
  m.vocab = vocab;
  m.emission.assign(static_cast<std::size_t>(vocab.size()) * tags.size(), 0.0);
  m.transition.assign(static_cast<std::size_t>(tags.size()) * tags.size(), 0.0);
  m.l2 = l2;
  return m;
}

std::vector<std::vector<double>> hard_targets(const std::vector<std::string>& bio, const BioTags& tags) {
  std::vector<std::vector<double>> out(bio.size(), std::vector<double>(tags.size(), 0.0));
  int prev = -1;
  for (std::size_t t = 0; t < bio.size(); ++t) {
    auto k = tags.index(bio[t]);
    if (!k) throw DataError("unknown BIO tag '" + bio[t] + "' at token " + std::to_string(t));
    if (!tags.allowed(prev, *k)) {
      throw DataError("invalid BIO transition to '" + bio[t] + "' at token " + std::to_string(t));
    }
    out[t][*k] = 1.0;
    prev = *k;
  }
  return out;
}

std::vector<std::vector<double>> soft_targets(const std::vector<std::vector<double>>& io_marginals,
                                              const TagSet& io_tags, const BioTags& tags) {
  std::vector<int> io_of_label;
  for (const auto& l : tags.labels()) {
    auto i = io_tags.index(l);
    if (!i) throw DataError("entity label '" + l + "' missing from the label model tags");
    io_of_label.push_back(*i);
  }
  std::vector<std::vector<double>> out(io_marginals.size(), std::vector<double>(tags.size(), 0.0));
  for (std::size_t t = 0; t < io_marginals.size(); ++t) {
    const auto& p = io_marginals[t];
    if (static_cast<int>(p.size()) != io_tags.size()) throw DataError("marginal width does not match tag set");
    out[t][0] = p[0];
    for (std::size_t x = 0; x < io_of_label.size(); ++x) {
      const double cur = p[io_of_label[x]];
      const double prev = t == 0 ? 0.0 : io_marginals[t - 1][io_of_label[x]];
      out[t][1 + 2 * x] = cur * (1.0 - prev);
      out[t][2 + 2 * x] = cur * prev;
    }
  }
  return out;
}

namespace {

// Emission scores per token and tag.
std::vector<double> emission_scores(const CrfModel& m, const SentenceFeatures& x) {
  const int K = m.num_tags();
  std::vector<double> out(x.size() * K, 0.0);
  for (std::size_t t = 0; t < x.size(); ++t)
    for (int f : x[t])
      for (int k = 0; k < K; ++k) out[t * K + k] += m.emit(f, k);
  return out;
}

// Transition score with the structural mask; from = -1 is the start.
double masked_trans(const CrfModel& m, int from, int to) {
  if (!m.tags.allowed(from, to)) return kNegInf;
  return from < 0 ? 0.0 : m.trans(from, to);
}

struct ForwardBackward {
  std::vector<double> alpha;  // T x K, log
  std::vector<double> beta;   // T x K, log
  double log_z = 0.0;
};

ForwardBackward forward_backward(const CrfModel& m, const std::vector<double>& em, int T, bool with_beta) {
  const int K = m.num_tags();
  ForwardBackward fb;
  fb.alpha.assign(static_cast<std::size_t>(T) * K, kNegInf);
  std::vector<double> buf(K);
  for (int k = 0; k < K; ++k) fb.alpha[k] = masked_trans(m, -1, k) + em[k];
  for (int t = 1; t < T; ++t)
    for (int b = 0; b < K; ++b) {
      for (int a = 0; a < K; ++a) buf[a] = fb.alpha[(t - 1) * K + a] + masked_trans(m, a, b);
      fb.alpha[t * K + b] = log_sum_exp(buf.data(), K) + em[t * K + b];
    }
  fb.log_z = T == 0 ? 0.0 : log_sum_exp(&fb.alpha[(T - 1) * K], K);
  if (!with_beta || T == 0) return fb;
  fb.beta.assign(static_cast<std::size_t>(T) * K, 0.0);
  for (int t = T - 2; t >= 0; --t)
    for (int a = 0; a < K; ++a) {
      for (int b = 0; b < K; ++b) buf[b] = masked_trans(m, a, b) + em[(t + 1) * K + b] + fb.beta[(t + 1) * K + b];
      fb.beta[t * K + a] = log_sum_exp(buf.data(), K);
    }
  return fb;
}

}  // namespace

double crf_sequence_score(const CrfModel& model, const SentenceFeatures& x, const std::vector<int>& tags) {
  if (tags.size() != x.size()) throw DataError("tag sequence length does not match sentence");
  double s = 0.0;
  int prev = -1;
  for (std::size_t t = 0; t < x.size(); ++t) {
    for (int f : x[t]) s += model.emit(f, tags[t]);
    s += masked_trans(model, prev, tags[t]);
    prev = tags[t];
  }
  return s;
}

double crf_log_partition(const CrfModel& model, const SentenceFeatures& x) {
  return forward_backward(model, emission_scores(model, x), static_cast<int>(x.size()), false).log_z;
}

std::vector<std::vector<double>> crf_marginals(const CrfModel& model, const SentenceFeatures& x) {
  const int K = model.num_tags(), T = static_cast<int>(x.size());
  auto fb = forward_backward(model, emission_scores(model, x), T, true);
  std::vector<std::vector<double>> out(T, std::vector<double>(K));
  for (int t = 0; t < T; ++t)
    for (int k = 0; k < K; ++k) out[t][k] = std::exp(fb.alpha[t * K + k] + fb.beta[t * K + k] - fb.log_z);
  return out;
}

double crf_objective(const CrfModel& model, const std::vector<CrfExample>& data, double l2_scale,
                     CrfGradient* grad) {
  const int K = model.num_tags();
  if (grad) {
    grad->emission.assign(model.emission.size(), 0.0);
    grad->transition.assign(model.transition.size(), 0.0);
  }
  double total = 0.0;
  for (const auto& ex : data) {
    const int T = static_cast<int>(ex.features.size());
    if (static_cast<int>(ex.target.size()) != T) throw DataError("target length does not match sentence");
    if (T == 0) continue;
    auto em = emission_scores(model, ex.features);
    auto fb = forward_backward(model, em, T, grad != nullptr);
    // Expected target score.
    for (int t = 0; t < T; ++t) {
      const auto& q = ex.target[t];
      for (int k = 0; k < K; ++k) {
        if (q[k] == 0.0) continue;
        total += q[k] * em[t * K + k];
        if (grad)
          for (int f : ex.features[t]) grad->emission[static_cast<std::size_t>(f) * K + k] += q[k];
      }
      if (t == 0) continue;
      const auto& qp = ex.target[t - 1];
      for (int a = 0; a < K; ++a)
        for (int b = 0; b < K; ++b) {
          const double w = qp[a] * q[b];
          if (w == 0.0 || !model.tags.allowed(a, b)) continue;
          total += w * model.trans(a, b);
          if (grad) grad->transition[a * K + b] += w;
        }
    }
    total -= fb.log_z;
    if (!grad) continue;
    // Model expectations.
    for (int t = 0; t < T; ++t)
      for (int k = 0; k < K; ++k) {
        const double mu = std::exp(fb.alpha[t * K + k] + fb.beta[t * K + k] - fb.log_z);
        if (mu == 0.0) continue;
        for (int f : ex.features[t]) grad->emission[static_cast<std::size_t>(f) * K + k] -= mu;
      }
    for (int t = 1; t < T; ++t)
      for (int a = 0; a < K; ++a)
        for (int b = 0; b < K; ++b) {
          if (!model.tags.allowed(a, b)) continue;
          const double lp = fb.alpha[(t - 1) * K + a] + model.trans(a, b) + em[t * K + b] + fb.beta[t * K + b];
          grad->transition[a * K + b] -= std::exp(lp - fb.log_z);
        }
  }
  const double lam = l2_scale * model.l2;
  double sq = 0.0;
  for (double w : model.emission) sq += w * w;
  for (double w : model.transition) sq += w * w;
  total -= 0.5 * lam * sq;
  if (grad) {
    for (std::size_t i = 0; i < model.emission.size(); ++i) grad->emission[i] -= lam * model.emission[i];
    for (std::size_t i = 0; i < model.transition.size(); ++i) grad->transition[i] -= lam * model.transition[i];
  }
  return total;
}

std::vector<int> crf_viterbi(const CrfModel& model, const SentenceFeatures& x) {
  const int K = model.num_tags(), T = static_cast<int>(x.size());
  if (T == 0) return {};
  auto em = emission_scores(model, x);
  std::vector<double> delta(static_cast<std::size_t>(T) * K, kNegInf);
  std::vector<int> back(static_cast<std::size_t>(T) * K, 0);
  for (int k = 0; k < K; ++k) delta[k] = masked_trans(model, -1, k) + em[k];
  for (int t = 1; t < T; ++t)
    for (int b = 0; b < K; ++b) {
      double best = kNegInf;
      int arg = 0;
      for (int a = 0; a < K; ++a) {
        const double v = delta[(t - 1) * K + a] + masked_trans(model, a, b);
        if (v > best) {
          best = v;
          arg = a;
        }
      }
      delta[t * K + b] = best + em[t * K + b];
      back[t * K + b] = arg;
    }
  std::vector<int> path(T);
  double best = kNegInf;
  for (int k = 0; k < K; ++k)
    if (delta[(T - 1) * K + k] > best) {
      best = delta[(T - 1) * K + k];
      path[T - 1] = k;
    }
  for (int t = T - 1; t > 0; --t) path[t - 1] = back[t * K + path[t]];
  return path;
}

std::vector<std::string> predict_crf(const CrfModel& model, const Sentence& sentence) {
  std::vector<std::string> out;
  for (int k : crf_viterbi(model, featurize(sentence, model.vocab))) out.push_back(model.tags.tag(k));
  return out;
}

std::vector<std::vector<std::string>> predict_corpus(const CrfModel& model, const Corpus& corpus, int threads) {
  auto sentences = flat_sentences(corpus);
  std::vector<std::vector<std::string>> out(sentences.size());
  parallel_for(sentences.size(), threads, [&](std::size_t i) { out[i] = predict_crf(model, *sentences[i]); });
  return out;
}

void CrfConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw DataError("crf lr must be positive");
  if (!(l2 >= 0.0) || !std::isfinite(l2)) throw DataError("crf l2 must be non-negative");
  if (epochs < 1) throw DataError("crf epochs must be at least 1");
  if (batch_size < 0) throw DataError("crf batch_size must be non-negative");
}

CrfTrainResult train_crf(const std::vector<CrfExample>& data, const BioTags& tags, const FeatureVocab& vocab,
                         const CrfConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  CrfTrainResult result{CrfModel::zeros(tags, vocab, cfg.l2), {}};
  CrfModel& model = result.model;
  const std::size_t n = data.size();
  const std::size_t batch = cfg.batch_size == 0 ? std::max<std::size_t>(n, 1) : cfg.batch_size;
  const std::size_t ne = model.emission.size(), nt = model.transition.size();
  std::vector<double> m1(ne + nt, 0.0), m2(ne + nt, 0.0);
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double b1t = 1.0, b2t = 1.0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::vector<CrfExample> chunk;
  CrfGradient g;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t lo = 0; lo < n; lo += batch) {
      const std::size_t hi = std::min(n, lo + batch);
      chunk.clear();
      for (std::size_t i = lo; i < hi; ++i) chunk.push_back(data[order[i]]);
      const double obj = crf_objective(model, chunk, static_cast<double>(hi - lo) / n, &g);
      if (!std::isfinite(obj)) throw NumericError("non-finite CRF objective in epoch " + std::to_string(epoch));
      b1t *= b1;
      b2t *= b2;
      auto step = [&](std::vector<double>& w, const std::vector<double>& grad, std::size_t base) {
        for (std::size_t i = 0; i < w.size(); ++i) {
          double& a = m1[base + i];
          double& v = m2[base + i];
          a = b1 * a + (1.0 - b1) * grad[i];
          v = b2 * v + (1.0 - b2) * grad[i] * grad[i];
          w[i] += cfg.lr * (a / (1.0 - b1t)) / (std::sqrt(v / (1.0 - b2t)) + eps);
        }
      };
      step(model.emission, g.emission, 0);
      step(model.transition, g.transition, ne);
    }
    const double full = crf_objective(model, data);
    if (!std::isfinite(full)) throw NumericError("non-finite CRF objective in epoch " + std::to_string(epoch));
    result.objective.push_back(full);
  }
  return result;
}

std::string format_crf_log(const std::vector<double>& objective) {
  std::string out = "epoch,objective\n";
  for (std::size_t i = 0; i < objective.size(); ++i)
    out += std::to_string(i + 1) + "," + format_fixed(objective[i], 6) + "\n";
  return out;
}

void save_crf_model(const CrfModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  binio::write_magic(out, "GLCM");
  binio::write<std::uint32_t>(out, 1);
  binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(model.tags.labels().size()));
  for (const auto& l : model.tags.labels()) binio::write_string(out, l);
  binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(model.vocab.size()));
  for (int i = 0; i < model.vocab.size(); ++i) binio::write_string(out, model.vocab.name(i));
  binio::write<double>(out, model.l2);
  for (double w : model.emission) binio::write<double>(out, w);
  for (double w : model.transition) binio::write<double>(out, w);
  if (!out) throw DataError("write failed: " + path);
}

CrfModel load_crf_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open CRF model: " + path);
  binio::expect_magic(in, "GLCM");
  const auto version = binio::read<std::uint32_t>(in, "model version");
  if (version != 1) throw DataError("unsupported CRF model version " + std::to_string(version));
  const auto num_labels = binio::read<std::uint32_t>(in, "label count");
  if (num_labels == 0 || num_labels > 4096) throw DataError("implausible label count in " + path);
  std::vector<std::string> labels;
  for (std::uint32_t i = 0; i < num_labels; ++i) labels.push_back(binio::read_string(in, "label"));
  const auto num_features = binio::read<std::uint32_t>(in, "feature count");
  if (num_features > (1u << 26)) throw DataError("implausible feature count in " + path);
  FeatureVocab vocab;
  for (std::uint32_t i = 0; i < num_features; ++i) {
    if (vocab.add(binio::read_string(in, "feature")) != static_cast<int>(i)) {
      throw DataError("duplicate feature name in " + path);
    }
  }
  const double l2 = binio::read<double>(in, "l2");
  CrfModel model = CrfModel::zeros(BioTags(labels), vocab, l2);
  for (double& w : model.emission) w = binio::read<double>(in, "emission weights");
  for (double& w : model.transition) w = binio::read<double>(in, "transition weights");
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes in " + path);
  return model;
}

}  // namespace rulegraph
