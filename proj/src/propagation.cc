#include "rulegraph/propagation.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <utility>

#include "rulegraph/binary_io.h"
#include "rulegraph/common.h"

namespace rulegraph {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::vector<std::pair<int, int>> RuleGraph::undirected_edges() const {
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < num_nodes(); ++i)
    for (int j : neighbors[i])
      if (i < j) edges.emplace_back(i, j);
  return edges;
}

bool RuleGraph::is_seed(int i) const {
  return std::find(seed_pos.begin(), seed_pos.end(), i) != seed_pos.end() ||
         std::find(seed_neg.begin(), seed_neg.end(), i) != seed_neg.end();
}

std::vector<std::vector<int>> knn_lists(const MatrixXd& features, int k) {
  const int n = static_cast<int>(features.rows());
  if (k >= n) {
    throw DataError("k = " + std::to_string(k) + " must be smaller than the node count " +
                    std::to_string(n));
  }
  MatrixXd unit = features;
  for (int i = 0; i < n; ++i) {
    double norm = unit.row(i).norm();
    if (norm > 0.0) unit.row(i) /= norm;
  }
  const MatrixXd sim = unit * unit.transpose();
  std::vector<std::vector<int>> lists(n);
  std::vector<int> order;
  for (int i = 0; i < n; ++i) {
    order.clear();
    for (int j = 0; j < n; ++j)
      if (j != i) order.push_back(j);
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
      if (sim(i, a) != sim(i, b)) return sim(i, a) > sim(i, b);
      return a < b;
    });
    lists[i].assign(order.begin(), order.begin() + k);
  }
  return lists;
}

std::vector<std::vector<int>> symmetrize(const std::vector<std::vector<int>>& directed) {
  const int n = static_cast<int>(directed.size());
  std::vector<std::vector<int>> out(n);
  for (int i = 0; i < n; ++i) {
    for (int j : directed[i]) {
      out[i].push_back(j);
      out[j].push_back(i);
    }
  }
  for (auto& row : out) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
  }
  return out;
}

RuleGraph build_rule_graph(const std::vector<RuleNode>& candidates, const std::vector<RuleNode>& seeds,
                           int k) {
  RuleGraph g;
  g.k = k;
  std::vector<const std::vector<double>*> rows;
  for (const auto& c : candidates) {
    g.nodes.push_back(c.rule);
    rows.push_back(&c.embedding);
  }
  for (const auto& s : seeds) {
    int at = -1;
    for (int i = 0; i < static_cast<int>(candidates.size()); ++i) {
      if (g.nodes[i].same_pattern(s.rule)) {
        at = i;
        break;
      }
    }
    if (at < 0) {
      at = static_cast<int>(g.nodes.size());
      g.nodes.push_back(s.rule);
      rows.push_back(&s.embedding);
    } else {
      g.nodes[at] = s.rule;
    }
    auto& bucket = s.rule.polarity == Polarity::kPositive ? g.seed_pos : g.seed_neg;
    if (std::find(bucket.begin(), bucket.end(), at) == bucket.end()) bucket.push_back(at);
  }
  for (int p : g.seed_pos) {
    if (std::find(g.seed_neg.begin(), g.seed_neg.end(), p) != g.seed_neg.end()) {
      throw DataError("rule is both a positive and a negative seed: " + g.nodes[p].display());
    }
  }
  std::sort(g.seed_pos.begin(), g.seed_pos.end());
  std::sort(g.seed_neg.begin(), g.seed_neg.end());
  const int n = static_cast<int>(rows.size());
  const int dim = n == 0 ? 0 : static_cast<int>(rows.front()->size());
  g.features.resize(n, dim);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(rows[i]->size()) != dim) throw DataError("rule embedding dims differ");
    for (int c = 0; c < dim; ++c) g.features(i, c) = (*rows[i])[c];
  }
  g.neighbors = symmetrize(knn_lists(g.features, k));
  return g;
}

void GatConfig::validate() const {
  if (heads < 1 || hidden < 1) throw DataError("heads and hidden size must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw DataError("dropout must be in [0, 1)");
  if (!std::isfinite(leaky_slope)) throw DataError("leaky slope must be finite");
}

namespace {

void glorot(MatrixXd& m, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-limit, limit);
}

void glorot(VectorXd& v, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(v.size() + 1));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(-limit, limit);
}

GatLayer make_layer(int heads, int in, int out, Rng* rng) {
  GatLayer layer;
  for (int h = 0; h < heads; ++h) {
    MatrixXd w = MatrixXd::Zero(out, in);
    VectorXd a = VectorXd::Zero(2 * out);
    if (rng != nullptr) {
      glorot(w, *rng);
      glorot(a, *rng);
    }
    layer.weight.push_back(std::move(w));
    layer.attn.push_back(std::move(a));
  }
  return layer;
}

int hidden_width(const GatConfig& c) { return c.average_all_layers ? c.hidden : c.heads * c.hidden; }

}  // namespace

PropagationModel PropagationModel::init(int in_dim, const GatConfig& config, std::uint64_t seed) {
  config.validate();
  if (in_dim < 1) throw DataError("input dim must be positive");
  Rng rng(seed);
  PropagationModel m;
  m.config = config;
  m.layer1 = make_layer(config.heads, in_dim, config.hidden, &rng);
  m.layer2 = make_layer(config.heads, hidden_width(config), config.hidden, &rng);
  m.classifier = VectorXd::Zero(config.hidden);
  glorot(m.classifier, rng);
  m.bias = 0.0;
  return m;
}

PropagationModel PropagationModel::zeros_like() const {
  PropagationModel z;
  z.config = config;
  z.layer1 = make_layer(config.heads, in_dim(), config.hidden, nullptr);
  z.layer2 = make_layer(config.heads, hidden_width(config), config.hidden, nullptr);
  z.classifier = VectorXd::Zero(config.hidden);
  z.bias = 0.0;
  return z;
}

std::vector<std::span<double>> PropagationModel::parameter_blocks() {
  std::vector<std::span<double>> blocks;
  for (GatLayer* layer : {&layer1, &layer2}) {
    for (std::size_t h = 0; h < layer->weight.size(); ++h) {
      blocks.emplace_back(layer->weight[h].data(), layer->weight[h].size());
      blocks.emplace_back(layer->attn[h].data(), layer->attn[h].size());
    }
  }
  blocks.emplace_back(classifier.data(), classifier.size());
  blocks.emplace_back(&bias, 1);
  return blocks;
}

std::vector<std::span<const double>> PropagationModel::parameter_blocks() const {
  auto mutable_blocks = const_cast<PropagationModel*>(this)->parameter_blocks();
  return {mutable_blocks.begin(), mutable_blocks.end()};
}

std::size_t PropagationModel::parameter_count() const {
  std::size_t n = 0;
  for (auto b : parameter_blocks()) n += b.size();
  return n;
}

namespace {

double leaky(double x, double slope) { return x > 0.0 ? x : slope * x; }
double leaky_grad(double x, double slope) { return x > 0.0 ? 1.0 : slope; }
double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
double elu_grad(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// Node i attends over {i} followed by its neighbors.
int attended(const RuleGraph& g, int i, std::size_t idx) {
  return idx == 0 ? i : g.neighbors[i][idx - 1];
}

MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  MatrixXd mask(rows, cols);
  const double keep = 1.0 / (1.0 - p);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) mask(r, c) = rng.bernoulli(p) ? 0.0 : keep;
  return mask;
}

// Runs every head of a layer on an already-dropped input.
void run_layer(const GatLayer& layer, const RuleGraph& g, double slope, bool literal, Rng* attn_rng,
               double dropout, LayerCache& cache) {
  const int n = g.num_nodes();
  const int heads = static_cast<int>(layer.weight.size());
  const int out = layer.out_dim();
  cache.projected.assign(heads, MatrixXd());
  cache.scores.assign(heads, {});
  cache.attention.assign(heads, {});
  cache.attention_mask.assign(heads, {});
  cache.head_out.assign(heads, MatrixXd());
  for (int h = 0; h < heads; ++h) {
    const MatrixXd proj = cache.input * layer.weight[h].transpose();
    const VectorXd a_src = layer.attn[h].head(out);
    const VectorXd a_dst = layer.attn[h].tail(out);
    const VectorXd s = proj * a_src;
    const VectorXd t = proj * a_dst;
    AttentionRows scores(n), alpha(n), mask(n);
    MatrixXd result = MatrixXd::Zero(n, out);
    for (int i = 0; i < n; ++i) {
      const std::size_t width = g.neighbors[i].size() + 1;
      scores[i].resize(width);
      alpha[i].resize(width);
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t idx = 0; idx < width; ++idx) {
        scores[i][idx] = s(i) + t(attended(g, i, idx));
        top = std::max(top, leaky(scores[i][idx], slope));
      }
      double z = 0.0;
      for (std::size_t idx = 0; idx < width; ++idx) {
        alpha[i][idx] = std::exp(leaky(scores[i][idx], slope) - top);
        z += alpha[i][idx];
      }
      for (double& a : alpha[i]) a /= z;
      if (attn_rng != nullptr) {
        mask[i].resize(width);
        const double keep = 1.0 / (1.0 - dropout);
        for (auto& m : mask[i]) m = attn_rng->bernoulli(dropout) ? 0.0 : keep;
      }
      for (std::size_t idx = 0; idx < width; ++idx) {
        const int j = attended(g, i, idx);
        const double w = alpha[i][idx] * (attn_rng != nullptr ? mask[i][idx] : 1.0);
        if (literal && idx > 0) {
          result.row(i) += proj.row(j);
        } else {
          result.row(i) += w * proj.row(j);
        }
      }
    }
    cache.projected[h] = proj;
    cache.scores[h] = std::move(scores);
    cache.attention[h] = std::move(alpha);
    cache.attention_mask[h] = std::move(mask);
    cache.head_out[h] = std::move(result);
  }
}

// Accumulates parameter gradients and returns d(loss)/d(layer input) taken
// before dropout.
MatrixXd backprop_layer(const GatLayer& layer, GatLayer& grad, const RuleGraph& g,
                        const LayerCache& cache, const std::vector<MatrixXd>& d_out, double slope,
                        bool literal) {
  const int n = g.num_nodes();
  const int heads = static_cast<int>(layer.weight.size());
  const int out = layer.out_dim();
  MatrixXd d_input = MatrixXd::Zero(cache.input.rows(), cache.input.cols());
  for (int h = 0; h < heads; ++h) {
    const MatrixXd& proj = cache.projected[h];
    const bool masked = !cache.attention_mask[h].empty() && !cache.attention_mask[h][0].empty();
    MatrixXd d_proj = MatrixXd::Zero(n, out);
    VectorXd d_s = VectorXd::Zero(n);
    VectorXd d_t = VectorXd::Zero(n);
    std::vector<double> d_alpha;
    for (int i = 0; i < n; ++i) {
      const auto& alpha = cache.attention[h][i];
      const std::size_t width = alpha.size();
      d_alpha.assign(width, 0.0);
      for (std::size_t idx = 0; idx < width; ++idx) {
        const int j = attended(g, i, idx);
        const double m = masked ? cache.attention_mask[h][i][idx] : 1.0;
        if (literal && idx > 0) {
          d_proj.row(j) += d_out[h].row(i);
          continue;
        }
        d_alpha[idx] = d_out[h].row(i).dot(proj.row(j)) * m;
        d_proj.row(j) += alpha[idx] * m * d_out[h].row(i);
      }
      double dot = 0.0;
      for (std::size_t idx = 0; idx < width; ++idx) dot += alpha[idx] * d_alpha[idx];
      for (std::size_t idx = 0; idx < width; ++idx) {
        const double d_e =
            alpha[idx] * (d_alpha[idx] - dot) * leaky_grad(cache.scores[h][i][idx], slope);
        d_s(i) += d_e;
        d_t(attended(g, i, idx)) += d_e;
      }
    }
    const VectorXd a_src = layer.attn[h].head(out);
    const VectorXd a_dst = layer.attn[h].tail(out);
    grad.attn[h].head(out) += proj.transpose() * d_s;
    grad.attn[h].tail(out) += proj.transpose() * d_t;
    d_proj += d_s * a_src.transpose() + d_t * a_dst.transpose();
    grad.weight[h] += d_proj.transpose() * cache.input;
    d_input += d_proj * layer.weight[h];
  }
  if (cache.input_mask.size() > 0) d_input = d_input.cwiseProduct(cache.input_mask);
  return d_input;
}

}  // namespace

std::vector<MatrixXd> gat_layer_forward(const GatLayer& layer, const RuleGraph& graph,
                                        const MatrixXd& input, double leaky_slope, bool unweighted_neighbors,
                                        std::vector<AttentionRows>* attention) {
  LayerCache cache;
  cache.input = input;
  run_layer(layer, graph, leaky_slope, unweighted_neighbors, nullptr, 0.0, cache);
  if (attention != nullptr) *attention = cache.attention;
  return cache.head_out;
}

ForwardResult gat_forward(const PropagationModel& model, const RuleGraph& graph, bool training,
                          std::uint64_t rng_seed) {
  const GatConfig& cfg = model.config;
  if (graph.dim() != model.in_dim()) {
    throw DataError("model input dim " + std::to_string(model.in_dim()) + " != graph dim " +
                    std::to_string(graph.dim()));
  }
  const bool drop = training && cfg.dropout > 0.0;
  Rng rng(rng_seed);
  ForwardResult r;
  const int n = graph.num_nodes();

  r.layer1.input = graph.features;
  if (drop) {
    r.layer1.input_mask = dropout_mask(n, graph.dim(), cfg.dropout, rng);
    r.layer1.input = r.layer1.input.cwiseProduct(r.layer1.input_mask);
  }
  run_layer(model.layer1, graph, cfg.leaky_slope, cfg.unweighted_neighbors, drop ? &rng : nullptr, cfg.dropout,
            r.layer1);
  const int heads = cfg.heads;
  if (cfg.average_all_layers) {
    r.hidden_pre = MatrixXd::Zero(n, cfg.hidden);
    for (int h = 0; h < heads; ++h) r.hidden_pre += r.layer1.head_out[h];
    r.hidden_pre /= heads;
  } else {
    r.hidden_pre.resize(n, heads * cfg.hidden);
    for (int h = 0; h < heads; ++h) r.hidden_pre.middleCols(h * cfg.hidden, cfg.hidden) = r.layer1.head_out[h];
  }
  r.layer2.input = r.hidden_pre.unaryExpr(&elu);
  if (drop) {
    r.layer2.input_mask = dropout_mask(n, r.layer2.input.cols(), cfg.dropout, rng);
    r.layer2.input = r.layer2.input.cwiseProduct(r.layer2.input_mask);
  }
  run_layer(model.layer2, graph, cfg.leaky_slope, cfg.unweighted_neighbors, drop ? &rng : nullptr, cfg.dropout,
            r.layer2);
  r.final_embeddings = MatrixXd::Zero(n, cfg.hidden);
  for (int h = 0; h < heads; ++h) r.final_embeddings += r.layer2.head_out[h];
  r.final_embeddings /= heads;
  r.logits = (r.final_embeddings * model.classifier).array() + model.bias;
  r.probabilities = r.logits.unaryExpr(&sigmoid);
  return r;
}

namespace {

VectorXd centroid(const MatrixXd& h, const std::vector<int>& nodes) {
  VectorXd c = VectorXd::Zero(h.cols());
  for (int i : nodes) c += h.row(i).transpose();
  return c / static_cast<double>(nodes.size());
}

void require_seeds(const RuleGraph& g) {
  if (g.seed_pos.empty() || g.seed_neg.empty()) {
    throw DataError("graph needs at least one positive and one negative seed");
  }
}

// Loss plus d(total)/d(h*) and d(total)/d(logit).
LossBreakdown loss_with_output_grads(const RuleGraph& g, const ForwardResult& out, const LossWeights& w,
                                     MatrixXd* d_h, VectorXd* d_logit) {
  require_seeds(g);
  const MatrixXd& h = out.final_embeddings;
  LossBreakdown loss;
  if (d_h != nullptr) {
    *d_h = MatrixXd::Zero(h.rows(), h.cols());
    *d_logit = VectorXd::Zero(h.rows());
  }

  const double seeds = static_cast<double>(g.seed_pos.size() + g.seed_neg.size());
  for (int y = 0; y <= 1; ++y) {
    for (int i : (y == 1 ? g.seed_pos : g.seed_neg)) {
      const double l = out.logits(i);
      loss.sup += (softplus(l) - y * l) / seeds;
      if (d_logit != nullptr) (*d_logit)(i) += (sigmoid(l) - y) / seeds;
    }
  }

  const auto edges = g.undirected_edges();
  if (!edges.empty()) {
    const double scale = w.reg / static_cast<double>(edges.size());
    for (const auto& [i, j] : edges) {
      VectorXd diff = (h.row(i) - h.row(j)).transpose();
      const double norm = diff.norm();
      loss.reg += scale * norm;
      if (d_h != nullptr && norm > 0.0) {
        d_h->row(i) += (scale / norm) * diff.transpose();
        d_h->row(j) -= (scale / norm) * diff.transpose();
      }
    }
  }

  const VectorXd cp = centroid(h, g.seed_pos);
  const VectorXd cn = centroid(h, g.seed_neg);
  const double np = cp.norm();
  const double nn = cn.norm();
  if (np > 0.0 && nn > 0.0) {
    const double cos = cp.dot(cn) / (np * nn);
    loss.dist = w.dist * cos;
    if (d_h != nullptr) {
      const VectorXd d_cp = w.dist * (cn / (np * nn) - cos * cp / (np * np));
      const VectorXd d_cn = w.dist * (cp / (np * nn) - cos * cn / (nn * nn));
      for (int i : g.seed_pos) d_h->row(i) += d_cp.transpose() / static_cast<double>(g.seed_pos.size());
      for (int i : g.seed_neg) d_h->row(i) += d_cn.transpose() / static_cast<double>(g.seed_neg.size());
    }
  }
  loss.total = loss.sup + loss.reg + loss.dist;
  return loss;
}

}  // namespace

LossBreakdown compute_loss(const RuleGraph& graph, const ForwardResult& out, const LossWeights& w) {
  return loss_with_output_grads(graph, out, w, nullptr, nullptr);
}

std::pair<LossBreakdown, PropagationModel> loss_and_gradient(const PropagationModel& model,
                                                             const RuleGraph& graph,
                                                             const LossWeights& w, bool training,
                                                             std::uint64_t rng_seed) {
  const GatConfig& cfg = model.config;
  ForwardResult out = gat_forward(model, graph, training, rng_seed);
  MatrixXd d_h;
  VectorXd d_logit;
  LossBreakdown loss = loss_with_output_grads(graph, out, w, &d_h, &d_logit);

  PropagationModel grad = model.zeros_like();
  grad.classifier = out.final_embeddings.transpose() * d_logit;
  grad.bias = d_logit.sum();
  d_h += d_logit * model.classifier.transpose();

  const int heads = cfg.heads;
  std::vector<MatrixXd> d_out2(heads, d_h / heads);
  MatrixXd d_hidden = backprop_layer(model.layer2, grad.layer2, graph, out.layer2, d_out2,
                                     cfg.leaky_slope, cfg.unweighted_neighbors);
  d_hidden = d_hidden.cwiseProduct(out.hidden_pre.unaryExpr(&elu_grad));
  std::vector<MatrixXd> d_out1(heads);
  for (int h = 0; h < heads; ++h) {
    d_out1[h] = cfg.average_all_layers ? MatrixXd(d_hidden / heads)
                                       : MatrixXd(d_hidden.middleCols(h * cfg.hidden, cfg.hidden));
  }
  backprop_layer(model.layer1, grad.layer1, graph, out.layer1, d_out1, cfg.leaky_slope,
                 cfg.unweighted_neighbors);
  return {loss, std::move(grad)};
}

namespace {

std::uint64_t epoch_seed(std::uint64_t seed, int epoch) {
  std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(epoch + 1));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  return x ^ (x >> 31);
}

}  // namespace

TrainResult train_propagation(PropagationModel model, const RuleGraph& graph, const TrainConfig& cfg,
                              std::uint64_t rng_seed) {
  require_seeds(graph);
  TrainResult result;
  const std::size_t count = model.parameter_count();
  std::vector<double> m(count, 0.0), v(count, 0.0);
  double b1t = 1.0, b2t = 1.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto [loss, grad] = loss_and_gradient(model, graph, cfg.weights, true, epoch_seed(rng_seed, epoch));
    if (!std::isfinite(loss.total)) {
      throw NumericError("propagation loss is not finite at epoch " + std::to_string(epoch + 1));
    }
    result.log.push_back(loss);
    b1t *= cfg.beta1;
    b2t *= cfg.beta2;
    auto params = model.parameter_blocks();
    auto grads = std::as_const(grad).parameter_blocks();
    std::size_t k = 0;
    for (std::size_t b = 0; b < params.size(); ++b) {
      for (std::size_t i = 0; i < params[b].size(); ++i, ++k) {
        const double g = grads[b][i];
        m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
        v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = m[k] / (1.0 - b1t);
        const double v_hat = v[k] / (1.0 - b2t);
        params[b][i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
      }
    }
  }
  result.model = std::move(model);
  return result;
}

std::string format_training_log(const std::vector<LossBreakdown>& log) {
  std::ostringstream out;
  out.precision(10);
  out << "epoch,l_sup,l_reg,l_dist,l_total\n";
  for (std::size_t e = 0; e < log.size(); ++e) {
    out << e + 1 << ',' << log[e].sup << ',' << log[e].reg << ',' << log[e].dist << ','
        << log[e].total << '\n';
  }
  return out.str();
}

SelectionResult select_by_centroids(const MatrixXd& embeddings, const RuleGraph& graph,
                                    const SelectionConfig& cfg) {
  require_seeds(graph);
  if (cfg.max_rules < 1) throw DataError("M must be >= 1");
  const VectorXd cp = centroid(embeddings, graph.seed_pos);
  const VectorXd cn = centroid(embeddings, graph.seed_neg);
  auto cos = [](const VectorXd& a, const VectorXd& b) {
    const double na = a.norm(), nb = b.norm();
    return na > 0.0 && nb > 0.0 ? a.dot(b) / (na * nb) : 0.0;
  };
  std::vector<ScoredNode> scored;
  for (int i = 0; i < graph.num_nodes(); ++i) {
    if (cfg.exclude_seeds && graph.is_seed(i)) continue;
    const VectorXd h = embeddings.row(i).transpose();
    scored.push_back({i, (1.0 - cos(h, cn)) - (1.0 - cos(h, cp))});
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const ScoredNode& a, const ScoredNode& b) { return a.score > b.score; });
  SelectionResult r;
  r.truncated = static_cast<int>(scored.size()) < cfg.max_rules;
  if (!r.truncated) scored.resize(cfg.max_rules);
  r.selected = std::move(scored);
  return r;
}

SelectionResult select_new_rules(const PropagationModel& model, const RuleGraph& graph,
                                 const SelectionConfig& cfg) {
  ForwardResult out = gat_forward(model, graph, false, 0);
  return select_by_centroids(out.final_embeddings, graph, cfg);
}

void save_propagation_model(const PropagationModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  binio::write_magic(out, "GLPM");
  binio::write<std::uint32_t>(out, 1);
  binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(model.in_dim()));
  binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(model.config.hidden));
  binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(model.config.heads));
  std::uint32_t flags = (model.config.unweighted_neighbors ? 1u : 0u) | (model.config.average_all_layers ? 2u : 0u);
  binio::write<std::uint32_t>(out, flags);
  binio::write<double>(out, model.config.dropout);
  binio::write<double>(out, model.config.leaky_slope);
  for (auto block : model.parameter_blocks())
    for (double v : block) binio::write<float>(out, static_cast<float>(v));
}

PropagationModel load_propagation_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open propagation model: " + path);
  binio::expect_magic(in, "GLPM");
  auto version = binio::read<std::uint32_t>(in, "model version");
  if (version != 1) throw DataError("unsupported propagation model version " + std::to_string(version));
  GatConfig cfg;
  const auto in_dim = binio::read<std::uint32_t>(in, "in_dim");
  cfg.hidden = static_cast<int>(binio::read<std::uint32_t>(in, "hidden"));
  cfg.heads = static_cast<int>(binio::read<std::uint32_t>(in, "heads"));
  const auto flags = binio::read<std::uint32_t>(in, "flags");
  cfg.unweighted_neighbors = (flags & 1u) != 0;
  cfg.average_all_layers = (flags & 2u) != 0;
  cfg.dropout = binio::read<double>(in, "dropout");
  cfg.leaky_slope = binio::read<double>(in, "leaky slope");
  if (in_dim == 0 || in_dim > (1u << 20) || cfg.hidden > (1 << 16) || cfg.heads > 256) {
    throw DataError("implausible propagation model dimensions in " + path);
  }
  PropagationModel model = PropagationModel::init(static_cast<int>(in_dim), cfg, 0).zeros_like();
  for (auto block : model.parameter_blocks())
    for (double& v : block) v = binio::read<float>(in, "parameters");
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes in " + path);
  return model;
}

}  // namespace rulegraph
