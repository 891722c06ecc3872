#include "rulegraph/generative.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "rulegraph/binary_io.h"
#include "rulegraph/common.h"

namespace rulegraph {

TagSet::TagSet(const std::vector<std::string>& labels) {
  if (labels.empty()) throw DataError("tag set needs at least one entity label");
  tags_.push_back(std::string(kOutsideLabel));
  for (const auto& l : labels) {
    if (l.empty() || l == kOutsideLabel) throw DataError("invalid entity label '" + l + "'");
    if (index(l)) throw DataError("duplicate entity label '" + l + "'");
    tags_.push_back(l);
  }
}

std::optional<int> TagSet::index(const std::string& tag) const {
  for (int i = 0; i < size(); ++i)
    if (tags_[i] == tag) return i;
  return std::nullopt;
}

void GenerativeConfig::validate() const {
  if (!(init_acc > 0.5 && init_acc < 1.0)) throw DataError("init_acc must lie in (0.5, 1)");
  if (!(acc_prior >= 0.0) || !std::isfinite(acc_prior)) throw DataError("acc_prior must be >= 0");
  if (!(balance_prior >= 0.0) || !std::isfinite(balance_prior)) throw DataError("balance_prior must be >= 0");
  if (epochs < 1) throw DataError("EM epochs must be >= 1");
}

namespace {

constexpr double kMinProb = 1e-6;

double clamp_prob(double p) { return std::min(1.0 - kMinProb, std::max(kMinProb, p)); }

double o_bonus(const GenerativeConfig& c, int tag) { return tag == 0 ? c.balance_prior : 0.0; }

// Beta(1 + a*m, 1 + a*(1-m)) log density without the constant.
double accuracy_log_prior(const GenerativeConfig& c, double p) {
  return c.acc_prior * (c.init_acc * std::log(p) + (1.0 - c.init_acc) * std::log1p(-p));
}

}  // namespace

double GenerativeModel::log_prior() const {
  const int L = num_tags();
  double lp = 0.0;
  for (int a = 0; a < L; ++a) {
    lp += (1.0 + o_bonus(config, a)) * std::log(start[a]);
    for (int b = 0; b < L; ++b) lp += (1.0 + o_bonus(config, b)) * std::log(trans(a, b));
  }
  for (double th : accuracy) lp += accuracy_log_prior(config, th);
  for (double la : link_accuracy) lp += accuracy_log_prior(config, la);
  for (std::size_t j = 0; j < num_rules(); ++j) {
    const int span = config.tag_independent_propensity ? 1 : L;
    for (int y = 0; y < span; ++y) lp += std::log(rho(j, y)) + std::log1p(-rho(j, y));
  }
  return lp;
}

void GenerativeModel::validate() const {
  const int L = num_tags();
  if (L < 2) throw DataError("generative model needs at least 2 tags");
  auto check_dist = [](const double* p, int n, const char* what) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      if (!(p[i] > 0.0 && p[i] < 1.0)) throw DataError(std::string(what) + " has an entry outside (0, 1)");
      s += p[i];
    }
    if (std::abs(s - 1.0) > 1e-9) throw DataError(std::string(what) + " does not sum to 1");
  };
  if (start.size() != static_cast<std::size_t>(L) || transition.size() != static_cast<std::size_t>(L * L) ||
      propensity.size() != num_rules() * L) {
    throw DataError("generative model arrays have inconsistent sizes");
  }
  check_dist(start.data(), L, "start distribution");
  for (int a = 0; a < L; ++a) check_dist(&transition[a * L], L, "transition row");
  auto check_prob = [](double p, const char* what) {
    if (!(p > 0.0 && p < 1.0)) throw DataError(std::string(what) + " outside (0, 1)");
  };
  for (double p : accuracy) check_prob(p, "rule accuracy");
  for (double p : propensity) check_prob(p, "rule propensity");
  for (double p : link_accuracy) check_prob(p, "link accuracy");
}

CompiledData compile_votes(const Corpus& corpus, const LabelMatrix& matrix, const LinkTable* links,
                           const TagSet& tags) {
  if (matrix.num_tokens() != corpus.token_count()) throw DataError("label matrix does not match corpus");
  if (links != nullptr && links->num_sources() > 0 && links->num_tokens() != corpus.token_count()) {
    throw DataError("link table does not match corpus");
  }
  CompiledData data;
  data.num_rules = matrix.num_rules();
  data.num_sources = links == nullptr ? 0 : links->num_sources();
  for (std::size_t d = 0; d < corpus.num_documents(); ++d) {
    for (std::size_t s = 0; s < corpus.document(d).sentences.size(); ++s) {
      CompiledSentence cs;
      cs.offset = corpus.sentence_offset(d, s);
      cs.length = corpus.sentence(d, s).size();
      cs.id = corpus.document(d).id + "/" + std::to_string(s);
      cs.votes.resize(cs.length);
      cs.links.resize(cs.length);
      for (int t = 0; t < cs.length; ++t) {
        for (const TokenVote& v : matrix.votes(cs.offset + t)) {
          auto tag = tags.index(v.label);
          if (!tag) throw DataError("vote label '" + v.label + "' is not in the tag set");
          cs.votes[t].push_back({v.rule, *tag});
        }
        if (data.num_sources > 0) {
          cs.links[t].resize(data.num_sources, LinkVote::kAbstain);
          if (t > 0)
            for (std::size_t src = 0; src < data.num_sources; ++src)
              cs.links[t][src] = links->vote(src, cs.offset + t);
        }
      }
      data.sentences.push_back(std::move(cs));
    }
  }
  return data;
}

GenerativeModel init_generative(const LabelMatrix& matrix, std::size_t num_link_sources, const TagSet& tags,
                                const GenerativeConfig& cfg) {
  cfg.validate();
  const int L = tags.size();
  if (L < 2) throw DataError("tag set needs at least 2 tags");
  GenerativeModel m;
  m.tags = tags;
  m.config = cfg;
  double z = 0.0;
  m.start.resize(L);
  for (int t = 0; t < L; ++t) z += m.start[t] = 1.0 + o_bonus(cfg, t);
  for (double& p : m.start) p /= z;
  m.transition.resize(L * L);
  for (int a = 0; a < L; ++a)
    for (int b = 0; b < L; ++b) m.transition[a * L + b] = m.start[b];
  m.accuracy.assign(matrix.num_rules(), cfg.init_acc);
  std::vector<double> counts(matrix.num_rules(), 0.0);
  for (std::size_t g = 0; g < matrix.num_tokens(); ++g)
    for (const TokenVote& v : matrix.votes(g)) counts[v.rule] += 1.0;
  const double n = static_cast<double>(matrix.num_tokens());
  m.propensity.resize(matrix.num_rules() * L);
  for (std::size_t j = 0; j < matrix.num_rules(); ++j)
    for (int y = 0; y < L; ++y) m.propensity[j * L + y] = (counts[j] + 1.0) / (n + 2.0);
  m.link_accuracy.assign(num_link_sources, cfg.init_acc);
  return m;
}

namespace {

// Per-model quantities shared by every sentence.
struct Precomputed {
  int L = 0;
  std::vector<double> base;         // L: sum_j log(1 - rho_jy)
  std::vector<double> vote_gain;    // rules x L: log rho - log(1 - rho)
  std::vector<double> log_right;    // per rule
  std::vector<double> log_wrong;    // per rule
  std::vector<double> log_link_ok;  // per source
  std::vector<double> log_link_bad;
  std::vector<double> log_trans;
  std::vector<double> log_start;

  explicit Precomputed(const GenerativeModel& m) : L(m.num_tags()) {
    base.assign(L, 0.0);
    vote_gain.resize(m.num_rules() * L);
    for (std::size_t j = 0; j < m.num_rules(); ++j) {
      for (int y = 0; y < L; ++y) {
        const double r = m.rho(j, y);
        base[y] += std::log1p(-r);
        vote_gain[j * L + y] = std::log(r) - std::log1p(-r);
      }
      log_right.push_back(std::log(m.accuracy[j]));
      log_wrong.push_back(std::log1p(-m.accuracy[j]) - std::log(L - 1.0));
    }
    for (double la : m.link_accuracy) {
      log_link_ok.push_back(std::log(la));
      log_link_bad.push_back(std::log1p(-la));
    }
    for (double p : m.transition) log_trans.push_back(std::log(p));
    for (double p : m.start) log_start.push_back(std::log(p));
  }

  // Log emission of every tag at token t.
  void emission(const CompiledSentence& s, int t, double* out) const {
    for (int y = 0; y < L; ++y) out[y] = base[y];
    for (const CompiledVote& v : s.votes[t]) {
      if (static_cast<std::size_t>(v.rule) >= log_right.size()) {
        throw DataError("vote references rule " + std::to_string(v.rule) + " beyond the model");
      }
      for (int y = 0; y < L; ++y) {
        out[y] += vote_gain[v.rule * L + y] + (v.tag == y ? log_right[v.rule] : log_wrong[v.rule]);
      }
    }
  }

  // Log link factors for the pair ending at t: same-tag and different-tag.
  std::pair<double, double> link(const CompiledSentence& s, int t) const {
    double same = 0.0, diff = 0.0;
    if (t == 0 || s.links.empty() || s.links[t].empty()) return {0.0, 0.0};
    if (s.links[t].size() > log_link_ok.size()) throw DataError("link votes exceed the model's sources");
    for (std::size_t src = 0; src < s.links[t].size(); ++src) {
      switch (s.links[t][src]) {
        case LinkVote::kLink:
          same += log_link_ok[src];
          diff += log_link_bad[src];
          break;
        case LinkVote::kBreak:
          same += log_link_bad[src];
          diff += log_link_ok[src];
          break;
        case LinkVote::kAbstain:
          break;
      }
    }
    return {same, diff};
  }
};

// Scaled forward-backward of one sentence. Emissions and link factors are
// shifted by their maxima before exponentiation; the shifts and the scale
// factors add back into the log-likelihood.
struct Lattice {
  int T = 0, L = 0;
  std::vector<double> emit;   // T x L, exp(log e - shift)
  std::vector<double> pair;   // T x L x L, psi(a, b) for the pair ending at t, shifted
  std::vector<double> alpha;  // T x L, normalized
  std::vector<double> beta;   // T x L, scaled
  std::vector<double> scale;  // T
  double log_likelihood = 0.0;

  double& e(int t, int y) { return emit[t * L + y]; }
  double& p(int t, int a, int b) { return pair[(t * L + a) * L + b]; }
  double& al(int t, int y) { return alpha[t * L + y]; }
  double& be(int t, int y) { return beta[t * L + y]; }

  Lattice(const GenerativeModel& m, const Precomputed& pc, const CompiledSentence& s, bool backward)
      : T(s.length), L(m.num_tags()) {
    emit.resize(T * L);
    pair.resize(T * L * L);
    alpha.resize(T * L);
    scale.resize(T);
    std::vector<double> le(L);
    double shift_total = 0.0;
    for (int t = 0; t < T; ++t) {
      pc.emission(s, t, le.data());
      const double top = *std::max_element(le.begin(), le.end());
      for (int y = 0; y < L; ++y) e(t, y) = std::exp(le[y] - top);
      shift_total += top;
      if (t > 0) {
        auto [same, diff] = pc.link(s, t);
        const double lt = std::max(same, diff);
        shift_total += lt;
        const double fs = std::exp(same - lt), fd = std::exp(diff - lt);
        for (int a = 0; a < L; ++a)
          for (int b = 0; b < L; ++b) p(t, a, b) = m.trans(a, b) * (a == b ? fs : fd);
      }
    }
    double log_scale = 0.0;
    for (int t = 0; t < T; ++t) {
      double z = 0.0;
      for (int b = 0; b < L; ++b) {
        double v;
        if (t == 0) {
          v = m.start[b];
        } else {
          v = 0.0;
          for (int a = 0; a < L; ++a) v += al(t - 1, a) * p(t, a, b);
        }
        al(t, b) = v * e(t, b);
        z += al(t, b);
      }
      scale[t] = z;
      for (int b = 0; b < L; ++b) al(t, b) /= z;
      log_scale += std::log(z);
    }
    log_likelihood = T == 0 ? 0.0 : log_scale + shift_total;
    if (!backward) return;
    beta.assign(T * L, 1.0);
    for (int t = T - 2; t >= 0; --t) {
      for (int a = 0; a < L; ++a) {
        double v = 0.0;
        for (int b = 0; b < L; ++b) v += p(t + 1, a, b) * e(t + 1, b) * be(t + 1, b);
        be(t, a) = v / scale[t + 1];
      }
    }
  }

  std::vector<double> gamma(int t) {
    std::vector<double> g(L);
    double z = 0.0;
    for (int y = 0; y < L; ++y) z += g[y] = al(t, y) * be(t, y);
    for (double& x : g) x /= z;
    return g;
  }

  // Pair posterior for (t-1, t), row-major a x b.
  std::vector<double> xi(int t) {
    std::vector<double> x(L * L);
    double z = 0.0;
    for (int a = 0; a < L; ++a)
      for (int b = 0; b < L; ++b) z += x[a * L + b] = al(t - 1, a) * p(t, a, b) * e(t, b) * be(t, b);
    for (double& v : x) v /= z;
    return x;
  }
};

struct Stats {
  std::vector<double> start, trans;
  std::vector<double> correct, votes;        // per rule
  std::vector<double> voted, tag_mass;       // rules x L, L
  std::vector<double> link_correct, link_total;
  double log_likelihood = 0.0;

  Stats(std::size_t rules, std::size_t sources, int L)
      : start(L, 0.0), trans(L * L, 0.0), correct(rules, 0.0), votes(rules, 0.0), voted(rules * L, 0.0),
        tag_mass(L, 0.0), link_correct(sources, 0.0), link_total(sources, 0.0) {}

  void add(const Stats& o) {
    auto acc = [](std::vector<double>& a, const std::vector<double>& b) {
      for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    };
    acc(start, o.start);
    acc(trans, o.trans);
    acc(correct, o.correct);
    acc(votes, o.votes);
    acc(voted, o.voted);
    acc(tag_mass, o.tag_mass);
    acc(link_correct, o.link_correct);
    acc(link_total, o.link_total);
    log_likelihood += o.log_likelihood;
  }
};

void accumulate(const GenerativeModel& m, const Precomputed& pc, const CompiledSentence& s, Stats& st) {
  if (s.length == 0) return;
  Lattice lat(m, pc, s, true);
  if (!std::isfinite(lat.log_likelihood)) throw NumericError("non-finite likelihood in sentence " + s.id);
  st.log_likelihood += lat.log_likelihood;
  const int L = m.num_tags();
  for (int t = 0; t < s.length; ++t) {
    const auto g = lat.gamma(t);
    if (t == 0)
      for (int y = 0; y < L; ++y) st.start[y] += g[y];
    for (int y = 0; y < L; ++y) st.tag_mass[y] += g[y];
    for (const CompiledVote& v : s.votes[t]) {
      st.votes[v.rule] += 1.0;
      st.correct[v.rule] += g[v.tag];
      for (int y = 0; y < L; ++y) st.voted[v.rule * L + y] += g[y];
    }
    if (t == 0) continue;
    const auto x = lat.xi(t);
    for (int i = 0; i < L * L; ++i) st.trans[i] += x[i];
    if (!s.links.empty() && !s.links[t].empty()) {
      double same = 0.0;
      for (int a = 0; a < L; ++a) same += x[a * L + a];
      for (std::size_t src = 0; src < s.links[t].size(); ++src) {
        const LinkVote v = s.links[t][src];
        if (v == LinkVote::kAbstain) continue;
        st.link_total[src] += 1.0;
        st.link_correct[src] += v == LinkVote::kLink ? same : 1.0 - same;
      }
    }
  }
}

// Sentences are summed in fixed blocks and the blocks in order, so the
// result does not depend on the thread count.
constexpr std::size_t kBlock = 32;

Stats e_step(const GenerativeModel& m, const CompiledData& data, int threads) {
  const Precomputed pc(m);
  const std::size_t blocks = (data.sentences.size() + kBlock - 1) / kBlock;
  std::vector<Stats> partial(blocks, Stats(m.num_rules(), m.link_accuracy.size(), m.num_tags()));
  parallel_for(blocks, threads, [&](std::size_t b) {
    const std::size_t end = std::min(data.sentences.size(), (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) accumulate(m, pc, data.sentences[i], partial[b]);
  });
  Stats total(m.num_rules(), m.link_accuracy.size(), m.num_tags());
  for (const Stats& p : partial) total.add(p);
  return total;
}

double map_accuracy(double correct, double total, double current, const GenerativeConfig& c) {
  const double denom = total + c.acc_prior;
  if (denom <= 0.0) return current;
  return clamp_prob((correct + c.acc_prior * c.init_acc) / denom);
}

void m_step(GenerativeModel& m, const Stats& st) {
  const int L = m.num_tags();
  const GenerativeConfig& c = m.config;
  double z = 0.0;
  for (int y = 0; y < L; ++y) z += m.start[y] = 1.0 + st.start[y] + o_bonus(c, y);
  for (double& p : m.start) p /= z;
  for (int a = 0; a < L; ++a) {
    double rz = 0.0;
    for (int b = 0; b < L; ++b) rz += m.transition[a * L + b] = 1.0 + st.trans[a * L + b] + o_bonus(c, b);
    for (int b = 0; b < L; ++b) m.transition[a * L + b] /= rz;
  }
  for (std::size_t j = 0; j < m.num_rules(); ++j) {
    m.accuracy[j] = map_accuracy(st.correct[j], st.votes[j], m.accuracy[j], c);
    if (c.tag_independent_propensity) {
      double v = 0.0, n = 0.0;
      for (int y = 0; y < L; ++y) {
        v += st.voted[j * L + y];
        n += st.tag_mass[y];
      }
      for (int y = 0; y < L; ++y) m.propensity[j * L + y] = (v + 1.0) / (n + 2.0);
    } else {
      for (int y = 0; y < L; ++y) m.propensity[j * L + y] = (st.voted[j * L + y] + 1.0) / (st.tag_mass[y] + 2.0);
    }
  }
  for (std::size_t s = 0; s < m.link_accuracy.size(); ++s) {
    m.link_accuracy[s] = map_accuracy(st.link_correct[s], st.link_total[s], m.link_accuracy[s], c);
  }
}

void check_compatible(const GenerativeModel& m, const CompiledData& data) {
  if (data.num_rules != m.num_rules()) {
    throw DataError("label matrix has " + std::to_string(data.num_rules) + " rules, model has " +
                    std::to_string(m.num_rules()));
  }
  if (data.num_sources > m.link_accuracy.size()) {
    throw DataError("link table has more sources than the model");
  }
}

}  // namespace

FitResult fit_em(GenerativeModel model, const CompiledData& data, int epochs, int threads) {
  if (epochs < 1) throw DataError("EM epochs must be >= 1");
  check_compatible(model, data);
  FitResult r;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    Stats st = e_step(model, data, threads);
    r.objective.push_back(st.log_likelihood + model.log_prior());
    m_step(model, st);
  }
  Stats last = e_step(model, data, threads);
  r.objective.push_back(last.log_likelihood + model.log_prior());
  for (double v : r.objective) {
    if (!std::isfinite(v)) throw NumericError("EM objective is not finite");
  }
  r.model = std::move(model);
  return r;
}

double sentence_log_likelihood(const GenerativeModel& model, const CompiledSentence& s) {
  const Precomputed pc(model);
  return Lattice(model, pc, s, false).log_likelihood;
}

double sentence_log_likelihood_backward(const GenerativeModel& model, const CompiledSentence& s) {
  if (s.length == 0) return 0.0;
  const Precomputed pc(model);
  Lattice lat(model, pc, s, false);
  // Independent backward recursion with its own scaling.
  const int L = model.num_tags(), T = s.length;
  std::vector<double> b(L, 1.0), next(L);
  double log_scale = 0.0;
  for (int t = T - 1; t >= 1; --t) {
    double z = 0.0;
    for (int a = 0; a < L; ++a) {
      double v = 0.0;
      for (int c = 0; c < L; ++c) v += lat.p(t, a, c) * lat.e(t, c) * b[c];
      z += next[a] = v;
    }
    for (int a = 0; a < L; ++a) b[a] = next[a] / z;
    log_scale += std::log(z);
  }
  double total = 0.0;
  for (int y = 0; y < L; ++y) total += model.start[y] * lat.e(0, y) * b[y];
  // Undo the shifts applied inside the lattice: the forward value minus its
  // own scale sum recovers them.
  double fwd_scale = 0.0;
  for (double c : lat.scale) fwd_scale += std::log(c);
  const double shifts = lat.log_likelihood - fwd_scale;
  return std::log(total) + log_scale + shifts;
}

Marginals posterior_marginals(const GenerativeModel& model, const CompiledSentence& s) {
  const Precomputed pc(model);
  Lattice lat(model, pc, s, true);
  Marginals out(s.length);
  for (int t = 0; t < s.length; ++t) out[t] = lat.gamma(t);
  return out;
}

std::vector<int> viterbi_decode(const GenerativeModel& model, const CompiledSentence& s) {
  const int L = model.num_tags(), T = s.length;
  if (T == 0) return {};
  const Precomputed pc(model);
  std::vector<double> le(L), delta(L), next(L);
  std::vector<int> back(T * L, 0);
  pc.emission(s, 0, le.data());
  for (int y = 0; y < L; ++y) delta[y] = pc.log_start[y] + le[y];
  for (int t = 1; t < T; ++t) {
    pc.emission(s, t, le.data());
    auto [same, diff] = pc.link(s, t);
    for (int b = 0; b < L; ++b) {
      double best = -std::numeric_limits<double>::infinity();
      int arg = 0;
      for (int a = 0; a < L; ++a) {
        const double v = delta[a] + pc.log_trans[a * L + b] + (a == b ? same : diff);
        if (v > best) {
          best = v;
          arg = a;
        }
      }
      next[b] = best + le[b];
      back[t * L + b] = arg;
    }
    delta.swap(next);
  }
  std::vector<int> path(T);
  path[T - 1] = static_cast<int>(std::max_element(delta.begin(), delta.end()) - delta.begin());
  for (int t = T - 1; t > 0; --t) path[t - 1] = back[t * L + path[t]];
  return path;
}

double sequence_likelihood_bruteforce(const GenerativeModel& model, const CompiledSentence& s) {
  const int L = model.num_tags(), T = s.length;
  if (T > 10) throw DataError("brute-force likelihood limited to 10 tokens, got " + std::to_string(T));
  if (T == 0) return 1.0;
  const std::size_t R = model.num_rules();
  // vote_of[t][j] = voted tag or -1.
  std::vector<std::vector<int>> vote_of(T, std::vector<int>(R, -1));
  for (int t = 0; t < T; ++t)
    for (const CompiledVote& v : s.votes[t]) vote_of[t].at(v.rule) = v.tag;
  auto emission = [&](int t, int y) {
    double e = 1.0;
    for (std::size_t j = 0; j < R; ++j) {
      const double r = model.rho(j, y);
      if (vote_of[t][j] < 0) {
        e *= 1.0 - r;
      } else {
        const double th = model.accuracy[j];
        e *= r * (vote_of[t][j] == y ? th : (1.0 - th) / (L - 1));
      }
    }
    return e;
  };
  auto link = [&](int t, int a, int b) {
    double f = 1.0;
    if (s.links.empty() || s.links[t].empty()) return f;
    for (std::size_t src = 0; src < s.links[t].size(); ++src) {
      const double la = model.link_accuracy.at(src);
      if (s.links[t][src] == LinkVote::kLink) f *= a == b ? la : 1.0 - la;
      if (s.links[t][src] == LinkVote::kBreak) f *= a == b ? 1.0 - la : la;
    }
    return f;
  };
  std::vector<int> y(T, 0);
  double total = 0.0;
  while (true) {
    double p = model.start[y[0]] * emission(0, y[0]);
    for (int t = 1; t < T; ++t) p *= model.trans(y[t - 1], y[t]) * link(t, y[t - 1], y[t]) * emission(t, y[t]);
    total += p;
    int pos = T - 1;
    while (pos >= 0 && ++y[pos] == L) y[pos--] = 0;
    if (pos < 0) break;
  }
  return total;
}

std::vector<std::vector<double>> corpus_marginals(const GenerativeModel& model, const CompiledData& data,
                                                  int threads) {
  check_compatible(model, data);
  std::size_t tokens = 0;
  for (const auto& s : data.sentences) tokens = std::max(tokens, s.offset + s.length);
  std::vector<std::vector<double>> out(tokens);
  parallel_for(data.sentences.size(), threads, [&](std::size_t i) {
    const auto& s = data.sentences[i];
    Marginals m = posterior_marginals(model, s);
    for (int t = 0; t < s.length; ++t) out[s.offset + t] = std::move(m[t]);
  });
  return out;
}

std::vector<std::vector<int>> corpus_viterbi(const GenerativeModel& model, const CompiledData& data, int threads) {
  check_compatible(model, data);
  std::vector<std::vector<int>> out(data.sentences.size());
  parallel_for(data.sentences.size(), threads,
               [&](std::size_t i) { out[i] = viterbi_decode(model, data.sentences[i]); });
  return out;
}

std::string format_marginals(const Corpus& corpus, const TagSet& tags,
                             const std::vector<std::vector<double>>& marginals) {
  if (marginals.size() != corpus.token_count()) throw DataError("marginals do not match corpus");
  std::string out;
  std::size_t g = 0;
  for (std::size_t d = 0; d < corpus.num_documents(); ++d) {
    for (std::size_t s = 0; s < corpus.document(d).sentences.size(); ++s) {
      for (int t = 0; t < corpus.sentence(d, s).size(); ++t, ++g) {
        out += std::to_string(d) + '\t' + std::to_string(s) + '\t' + std::to_string(t) + '\t';
        for (int y = 0; y < tags.size(); ++y) {
          if (y > 0) out += ',';
          out += tags.tag(y) + ':' + format_fixed(marginals[g].at(y), 4);
        }
        out += '\n';
      }
    }
  }
  return out;
}

std::vector<std::vector<double>> parse_marginals(std::string_view text, const Corpus& corpus,
                                                 const TagSet& tags) {
  std::vector<std::vector<double>> out(corpus.token_count());
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "marginals line " + std::to_string(line_no) + ": ";
    auto cols = split(line, '\t');
    if (cols.size() != 4) throw DataError(where + "expected 4 tab-separated columns");
    std::size_t d, s;
    int t;
    try {
      d = std::stoul(cols[0]);
      s = std::stoul(cols[1]);
      t = std::stoi(cols[2]);
    } catch (const std::exception&) {
      throw DataError(where + "bad token address");
    }
    if (d >= corpus.num_documents() || s >= corpus.document(d).sentences.size() || t < 0 ||
        t >= corpus.sentence(d, s).size()) {
      throw DataError(where + "token address out of range");
    }
    std::vector<double> dist(tags.size(), 0.0);
    auto items = split(cols[3], ',');
    if (static_cast<int>(items.size()) != tags.size()) throw DataError(where + "wrong number of tags");
    for (const auto& item : items) {
      const auto colon = item.rfind(':');
      auto tag = colon == std::string::npos ? std::nullopt : tags.index(item.substr(0, colon));
      if (!tag) throw DataError(where + "unknown tag in '" + item + "'");
      try {
        dist[*tag] = std::stod(item.substr(colon + 1));
      } catch (const std::exception&) {
        throw DataError(where + "bad probability in '" + item + "'");
      }
    }
    out[corpus.global_index(d, s, t)] = std::move(dist);
  }
  return out;
}

void save_generative_model(const GenerativeModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  binio::write_magic(out, "GLGM");
  binio::write<std::uint32_t>(out, 1);
  binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(m.num_tags()));
  for (const auto& t : m.tags.tags()) binio::write_string(out, t);
  binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(m.num_rules()));
  binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(m.link_accuracy.size()));
  binio::write<std::uint8_t>(out, m.config.tag_independent_propensity ? 1 : 0);
  binio::write<double>(out, m.config.init_acc);
  binio::write<double>(out, m.config.acc_prior);
  binio::write<double>(out, m.config.balance_prior);
  binio::write<std::int32_t>(out, m.config.epochs);
  for (const auto* v : {&m.start, &m.transition, &m.accuracy, &m.propensity, &m.link_accuracy})
    for (double x : *v) binio::write<double>(out, x);
}

GenerativeModel load_generative_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open label model: " + path);
  binio::expect_magic(in, "GLGM");
  const auto version = binio::read<std::uint32_t>(in, "label model version");
  if (version != 1) throw DataError("unsupported label model version " + std::to_string(version));
  const auto L = binio::read<std::uint32_t>(in, "tag count");
  if (L < 2 || L > 1024) throw DataError("implausible tag count in " + path);
  std::vector<std::string> tags;
  for (std::uint32_t i = 0; i < L; ++i) tags.push_back(binio::read_string(in, "tag"));
  if (tags[0] != kOutsideLabel) throw DataError("label model tag 0 must be O");
  GenerativeModel m;
  m.tags = TagSet(std::vector<std::string>(tags.begin() + 1, tags.end()));
  const auto rules = binio::read<std::uint32_t>(in, "rule count");
  const auto sources = binio::read<std::uint32_t>(in, "link source count");
  if (rules > (1u << 24) || sources > (1u << 16)) throw DataError("implausible sizes in " + path);
  m.config.tag_independent_propensity = binio::read<std::uint8_t>(in, "flags") != 0;
  m.config.init_acc = binio::read<double>(in, "init_acc");
  m.config.acc_prior = binio::read<double>(in, "acc_prior");
  m.config.balance_prior = binio::read<double>(in, "balance_prior");
  m.config.epochs = binio::read<std::int32_t>(in, "epochs");
  m.start.resize(L);
  m.transition.resize(L * L);
  m.accuracy.resize(rules);
  m.propensity.resize(rules * L);
  m.link_accuracy.resize(sources);
  for (auto* v : {&m.start, &m.transition, &m.accuracy, &m.propensity, &m.link_accuracy})
    for (double& x : *v) x = binio::read<double>(in, "label model parameters");
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes in " + path);
  m.validate();
  return m;
}

}  // namespace rulegraph
