#ifndef RULEGRAPH_PROPAGATION_H_
#define RULEGRAPH_PROPAGATION_H_

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rulegraph/rules.h"

namespace rulegraph {

struct RuleNode {
  Rule rule;
  std::vector<double> embedding;
};

// k-NN graph over rules of one kind and label. Node features are the rule
// embeddings; seed nodes carry their seed polarity.
struct RuleGraph {
  std::vector<Rule> nodes;
  Eigen::MatrixXd features;                // nodes x dim
  std::vector<std::vector<int>> neighbors;  // symmetric, sorted, no self loops
  std::vector<int> seed_pos;
  std::vector<int> seed_neg;
  int k = 0;

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int dim() const { return static_cast<int>(features.cols()); }
  // Each undirected edge once, as (i, j) with i < j.
  std::vector<std::pair<int, int>> undirected_edges() const;
  bool is_seed(int i) const;
};

// Directed k-NN lists by cosine similarity (ties to the lower index), before
// symmetrization.
std::vector<std::vector<int>> knn_lists(const Eigen::MatrixXd& features, int k);
std::vector<std::vector<int>> symmetrize(const std::vector<std::vector<int>>& directed);

// Seeds whose (kind, key) matches a candidate mark that node; the rest are
// appended as new nodes. Throws DataError when k >= node count.
RuleGraph build_rule_graph(const std::vector<RuleNode>& candidates, const std::vector<RuleNode>& seeds,
                           int k);

struct GatConfig {
  int heads = 3;
  int hidden = 64;
  double dropout = 0.5;
  double leaky_slope = 0.2;
  // Neighbor term without attention weights: h_i' = a_ii W h_i + sum_j W h_j.
  bool unweighted_neighbors = false;
  // Average heads in the hidden layer too, instead of concatenating.
  bool average_all_layers = false;

  void validate() const;
};

struct GatLayer {
  std::vector<Eigen::MatrixXd> weight;  // per head: out x in
  std::vector<Eigen::VectorXd> attn;    // per head: [a_src; a_dst], length 2 * out

  int in_dim() const { return static_cast<int>(weight.front().cols()); }
  int out_dim() const { return static_cast<int>(weight.front().rows()); }
};

struct PropagationModel {
  GatConfig config;
  GatLayer layer1;
  GatLayer layer2;
  Eigen::VectorXd classifier;  // on the averaged final embedding
  double bias = 0.0;

  static PropagationModel init(int in_dim, const GatConfig& config, std::uint64_t seed);
  PropagationModel zeros_like() const;

  int in_dim() const { return layer1.in_dim(); }
  // Layer-1 heads (W, a), layer-2 heads (W, a), classifier, bias.
  std::vector<std::span<double>> parameter_blocks();
  std::vector<std::span<const double>> parameter_blocks() const;
  std::size_t parameter_count() const;
};

// Attention weights of one head over S_i = {i} followed by N_i.
using AttentionRows = std::vector<std::vector<double>>;

struct LayerCache {
  Eigen::MatrixXd input;        // after dropout
  Eigen::MatrixXd input_mask;   // scaled keep mask (empty when not training)
  std::vector<Eigen::MatrixXd> projected;    // per head: nodes x out (W h)
  std::vector<AttentionRows> scores;         // pre-activation e_ij
  std::vector<AttentionRows> attention;      // softmax alpha_ij
  std::vector<AttentionRows> attention_mask; // scaled keep mask on alpha
  std::vector<Eigen::MatrixXd> head_out;
};

struct ForwardResult {
  Eigen::MatrixXd final_embeddings;  // h*, nodes x hidden
  Eigen::VectorXd logits;
  Eigen::VectorXd probabilities;
  // Kept for backpropagation.
  Eigen::MatrixXd hidden_pre;  // layer-1 combined output before ELU
  LayerCache layer1;
  LayerCache layer2;
};

// One attention layer with per-head outputs; exposed for hand-checkable tests.
// The input is used as-is (no dropout).
std::vector<Eigen::MatrixXd> gat_layer_forward(const GatLayer& layer, const RuleGraph& graph,
                                               const Eigen::MatrixXd& input, double leaky_slope,
                                               bool unweighted_neighbors, std::vector<AttentionRows>* attention);

ForwardResult gat_forward(const PropagationModel& model, const RuleGraph& graph, bool training,
                          std::uint64_t rng_seed);

struct LossWeights {
  double reg = 1.0;
  double dist = 1.0;
};

struct LossBreakdown {
  double sup = 0.0;
  double reg = 0.0;
  double dist = 0.0;
  double total = 0.0;
};

LossBreakdown compute_loss(const RuleGraph& graph, const ForwardResult& out, const LossWeights& w);

// Loss and the exact gradient of its total with respect to every parameter.
std::pair<LossBreakdown, PropagationModel> loss_and_gradient(const PropagationModel& model,
                                                             const RuleGraph& graph,
                                                             const LossWeights& w, bool training,
                                                             std::uint64_t rng_seed);

struct TrainConfig {
  int epochs = 50;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  LossWeights weights;
};

struct TrainResult {
  PropagationModel model;
  std::vector<LossBreakdown> log;  // one entry per epoch
};

// Full-batch Adam. Throws NumericError naming the epoch on a non-finite loss.
TrainResult train_propagation(PropagationModel model, const RuleGraph& graph, const TrainConfig& cfg,
                              std::uint64_t rng_seed);

std::string format_training_log(const std::vector<LossBreakdown>& log);

struct SelectionConfig {
  int max_rules = 50;  // M
  bool exclude_seeds = true;
};

struct ScoredNode {
  int node = 0;
  double score = 0.0;
};

struct SelectionResult {
  std::vector<ScoredNode> selected;
  bool truncated = false;  // fewer eligible nodes than requested
};

// score = cos_dist(h, centroid_neg) - cos_dist(h, centroid_pos), descending.
SelectionResult select_by_centroids(const Eigen::MatrixXd& embeddings, const RuleGraph& graph,
                                    const SelectionConfig& cfg);
SelectionResult select_new_rules(const PropagationModel& model, const RuleGraph& graph,
                                 const SelectionConfig& cfg);

// "GLPM", u32 version, u32 in_dim, u32 hidden, u32 heads, u32 flags,
// f64 dropout, f64 leaky slope, then f32 parameters in parameter_blocks order.
void save_propagation_model(const PropagationModel& model, const std::string& path);
PropagationModel load_propagation_model(const std::string& path);

}  // namespace rulegraph

#endif  // RULEGRAPH_PROPAGATION_H_
