#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "rulegraph/common.h"
#include "rulegraph/propagation.h"
#include "test_util.h"

using namespace rulegraph;
using Eigen::MatrixXd;

namespace {

RuleNode node(const std::string& key, std::vector<double> emb,
              Polarity polarity = Polarity::kPositive) {
  return RuleNode{Rule{RuleKind::kSuffix, key, "Disease", polarity}, std::move(emb)};
}

// Hand-built graph with explicit adjacency.
RuleGraph manual_graph(const std::vector<std::vector<double>>& feats,
                       std::vector<std::vector<int>> neighbors, std::vector<int> pos,
                       std::vector<int> neg) {
  RuleGraph g;
  const int n = static_cast<int>(feats.size());
  g.features.resize(n, static_cast<int>(feats[0].size()));
  for (int i = 0; i < n; ++i) {
    g.nodes.push_back(Rule{RuleKind::kSuffix, "n" + std::to_string(i), "Disease", Polarity::kPositive});
    for (std::size_t c = 0; c < feats[i].size(); ++c) g.features(i, c) = feats[i][c];
  }
  g.neighbors = std::move(neighbors);
  g.seed_pos = std::move(pos);
  g.seed_neg = std::move(neg);
  g.k = 1;
  return g;
}

double naive_cos(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return d / std::sqrt(na * nb);
}

std::vector<double> row(const MatrixXd& m, int i) {
  std::vector<double> v(m.cols());
  for (int c = 0; c < m.cols(); ++c) v[c] = m(i, c);
  return v;
}

// Second implementation path: plain loops over probabilities and vectors.
LossBreakdown naive_loss(const RuleGraph& g, const ForwardResult& out, const LossWeights& w) {
  LossBreakdown l;
  const int seeds = static_cast<int>(g.seed_pos.size() + g.seed_neg.size());
  for (int i : g.seed_pos) l.sup -= std::log(out.probabilities(i)) / seeds;
  for (int i : g.seed_neg) l.sup -= std::log(1.0 - out.probabilities(i)) / seeds;
  int edges = 0;
  double sum = 0.0;
  for (int i = 0; i < g.num_nodes(); ++i) {
    for (int j : g.neighbors[i]) {
      if (j <= i) continue;
      double s = 0.0;
      for (int c = 0; c < out.final_embeddings.cols(); ++c) {
        const double d = out.final_embeddings(i, c) - out.final_embeddings(j, c);
        s += d * d;
      }
      sum += std::sqrt(s);
      ++edges;
    }
  }
  l.reg = edges > 0 ? w.reg * sum / edges : 0.0;
  const int dim = static_cast<int>(out.final_embeddings.cols());
  std::vector<double> cp(dim, 0.0), cn(dim, 0.0);
  for (int i : g.seed_pos)
    for (int c = 0; c < dim; ++c) cp[c] += out.final_embeddings(i, c) / g.seed_pos.size();
  for (int i : g.seed_neg)
    for (int c = 0; c < dim; ++c) cn[c] += out.final_embeddings(i, c) / g.seed_neg.size();
  l.dist = w.dist * naive_cos(cp, cn);
  l.total = l.sup + l.reg + l.dist;
  return l;
}

GatConfig small_config(int heads) {
  GatConfig cfg;
  cfg.heads = heads;
  cfg.hidden = 6;
  return cfg;
}

}  // namespace

TEST_CASE("kNN on three points against brute force") {
  MatrixXd f(3, 2);
  f << 1, 0, 0.9, 0.1, 0, 1;
  auto lists = knn_lists(f, 1);
  // Brute force: argmax cosine over the other nodes, lower index on ties.
  for (int i = 0; i < 3; ++i) {
    int best = -1;
    double best_sim = -2.0;
    for (int j = 0; j < 3; ++j) {
      if (j == i) continue;
      double s = naive_cos(row(f, i), row(f, j));
      if (s > best_sim) {
        best_sim = s;
        best = j;
      }
    }
    CHECK(lists[i] == std::vector<int>{best});
  }
  CHECK(lists[0] == std::vector<int>{1});
  CHECK(lists[1] == std::vector<int>{0});
  // cos((0,1),(0.9,0.1)) = 0.110 > cos((0,1),(1,0)) = 0.
  CHECK(lists[2] == std::vector<int>{1});
  auto sym = symmetrize(lists);
  CHECK(sym[0] == std::vector<int>{1});
  CHECK(sym[1] == std::vector<int>{0, 2});
  CHECK(sym[2] == std::vector<int>{1});
}

TEST_CASE("kNN ties go to lower indices") {
  MatrixXd f = MatrixXd::Ones(5, 3);
  auto lists = knn_lists(f, 2);
  CHECK(lists[0] == std::vector<int>{1, 2});
  CHECK(lists[1] == std::vector<int>{0, 2});
  CHECK(lists[4] == std::vector<int>{0, 1});
  CHECK_THROWS_AS(knn_lists(f, 5), DataError);
}

TEST_CASE("graph construction with seeds") {
  std::vector<RuleNode> cands = {node("a", {1, 0}), node("b", {0.9, 0.1}), node("c", {0, 1})};
  std::vector<RuleNode> seeds = {node("a", {1, 0}), node("z", {0.1, 0.9}, Polarity::kNegative)};
  RuleGraph g = build_rule_graph(cands, seeds, 1);
  CHECK(g.num_nodes() == 4);
  CHECK(g.seed_pos == std::vector<int>{0});
  CHECK(g.seed_neg == std::vector<int>{3});
  CHECK(g.nodes[3].key == "z");
  for (int i = 0; i < g.num_nodes(); ++i) {
    for (int j : g.neighbors[i]) {
      CHECK(j != i);
      CHECK(std::count(g.neighbors[j].begin(), g.neighbors[j].end(), i) == 1);
    }
  }
  CHECK_THROWS_AS(build_rule_graph(cands, {}, 3), DataError);
  std::vector<RuleNode> clash = {node("a", {1, 0}), node("a", {1, 0}, Polarity::kNegative)};
  CHECK_THROWS_AS(build_rule_graph(cands, clash, 1), DataError);
}

TEST_CASE("four-node path, one head, identity W: hand-computed attention") {
  RuleGraph g = manual_graph({{1, 0}, {0, 1}, {1, 1}, {-1, 2}}, {{1}, {0, 2}, {1, 3}, {2}}, {0}, {3});
  GatLayer layer;
  layer.weight = {MatrixXd::Identity(2, 2)};
  Eigen::VectorXd a(4);
  a << 0.5, -1.0, 1.0, 0.25;
  layer.attn = {a};
  std::vector<AttentionRows> alpha;
  auto out = gat_layer_forward(layer, g, g.features, 0.2, false, &alpha);
  // Node 0: e00 = 0.5 + 1 = 1.5, e01 = 0.5 + 0.25 = 0.75.
  const double a00 = 1.0 / (1.0 + std::exp(-0.75));
  CHECK(std::abs(alpha[0][0][0] - a00) <= 1e-9);
  CHECK(std::abs(out[0](0, 0) - a00) <= 1e-9);
  CHECK(std::abs(out[0](0, 1) - (1.0 - a00)) <= 1e-9);
  // Node 3: e33 = LeakyReLU(-2.5 - 0.5) = -0.6, e32 = LeakyReLU(-2.5 + 1.25) = -0.25.
  const double a33 = 1.0 / (1.0 + std::exp(0.35));
  CHECK(std::abs(alpha[0][3][0] - a33) <= 1e-9);
  CHECK(std::abs(out[0](3, 0) - (-a33 + (1.0 - a33))) <= 1e-9);
  CHECK(std::abs(out[0](3, 1) - (2.0 * a33 + (1.0 - a33))) <= 1e-9);
  // Middle nodes, values from an independent evaluation.
  CHECK(std::abs(alpha[0][1][0] - 0.27369823410470107) <= 1e-9);
  CHECK(std::abs(out[0](1, 0) - 0.7263017658952989) <= 1e-9);
  CHECK(std::abs(out[0](2, 1) - 1.2106352296330392) <= 1e-9);

  // Variant without attention weights on the neighbor terms.
  auto lit = gat_layer_forward(layer, g, g.features, 0.2, true, nullptr);
  CHECK(std::abs(lit[0](0, 0) - a00) <= 1e-9);
  CHECK(std::abs(lit[0](0, 1) - 1.0) <= 1e-9);
}

TEST_CASE("isolated node attends only to itself") {
  RuleGraph g = manual_graph({{1, 2}, {3, -1}}, {{}, {}}, {0}, {1});
  GatLayer layer;
  MatrixXd w(2, 2);
  w << 0.5, 1.0, -2.0, 0.25;
  layer.weight = {w};
  layer.attn = {Eigen::VectorXd::Constant(4, 0.3)};
  std::vector<AttentionRows> alpha;
  auto out = gat_layer_forward(layer, g, g.features, 0.2, false, &alpha);
  CHECK(alpha[0][0] == std::vector<double>{1.0});
  CHECK(out[0](0, 0) == doctest::Approx(0.5 * 1 + 1.0 * 2));
  CHECK(out[0](0, 1) == doctest::Approx(-2.0 * 1 + 0.25 * 2));
}

TEST_CASE("attention rows sum to one") {
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    RuleGraph g = testing::random_graph(15, 8, 3, 2, 2, rng);
    auto model = PropagationModel::init(8, small_config(3), trial);
    for (bool training : {false, true}) {
      ForwardResult out = gat_forward(model, g, training, trial);
      for (const LayerCache* layer : {&out.layer1, &out.layer2})
        for (const auto& head : layer->attention)
          for (const auto& r : head) {
            double s = 0.0;
            for (double x : r) s += x;
            CHECK(std::abs(s - 1.0) <= 1e-6);
          }
    }
  }
}

TEST_CASE("loss edge cases") {
  RuleGraph g = manual_graph({{1, 0}, {0, 1}, {1, 1}}, {{1}, {0, 2}, {1}}, {0}, {1});
  ForwardResult out;
  out.final_embeddings = MatrixXd::Ones(3, 4);
  out.logits = Eigen::VectorXd(3);
  out.logits << 800.0, -800.0, 0.0;
  out.probabilities = Eigen::VectorXd(3);
  out.probabilities << 1.0, 0.0, 0.5;
  LossBreakdown l = compute_loss(g, out, {2.0, 3.0});
  CHECK(l.sup == 0.0);
  CHECK(l.reg == 0.0);
  CHECK(l.dist == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(l.total == doctest::Approx(3.0).epsilon(1e-15));

  RuleGraph no_neg = manual_graph({{1, 0}, {0, 1}}, {{1}, {0}}, {0}, {});
  CHECK_THROWS_AS(compute_loss(no_neg, out, {}), DataError);
}

TEST_CASE("loss equals a naive recomputation") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    RuleGraph g = testing::random_graph(12, 8, 3, 2, 3, rng);
    GatConfig cfg = small_config(1 + trial % 3);
    cfg.average_all_layers = trial % 2 == 0;
    auto model = PropagationModel::init(8, cfg, trial);
    ForwardResult out = gat_forward(model, g, trial % 4 == 0, 3);
    LossWeights w{0.5 + trial * 0.1, 1.5};
    LossBreakdown a = compute_loss(g, out, w);
    LossBreakdown b = naive_loss(g, out, w);
    CHECK(std::abs(a.sup - b.sup) <= 1e-10);
    CHECK(std::abs(a.reg - b.reg) <= 1e-10);
    CHECK(std::abs(a.dist - b.dist) <= 1e-10);
    CHECK(std::abs(a.total - b.total) <= 1e-10);
    CHECK(a.total == doctest::Approx(a.sup + a.reg + a.dist).epsilon(1e-14));
  }
}

TEST_CASE("gradient check, one head, twenty draws") {
  Rng rng(1);
  std::size_t checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    RuleGraph g = testing::random_graph(20, 8, 3, 3, 3, rng);
    GatConfig cfg = small_config(1);
    auto model = PropagationModel::init(8, cfg, trial);
    auto eval = testing::check_propagation_gradient(model, g, {}, false, 7);
    auto train = testing::check_propagation_gradient(model, g, {0.7, 1.3}, true, 7 + trial);
    CHECK(eval.max_rel_error <= 1e-4);
    CHECK(train.max_rel_error <= 1e-4);
    checked += eval.checked + train.checked;
  }
  CHECK(checked > 20 * 200);
}

TEST_CASE("gradient check, three heads and layer variants") {
  Rng rng(2);
  for (int trial = 0; trial < 6; ++trial) {
    RuleGraph g = testing::random_graph(16, 8, 3, 2, 2, rng);
    GatConfig cfg = small_config(3);
    cfg.unweighted_neighbors = trial % 2 == 1;
    cfg.average_all_layers = trial % 3 == 2;
    auto model = PropagationModel::init(8, cfg, 100 + trial);
    // A smaller step keeps truncation error below the tolerance on the
    // tiny gradient entries that several heads produce.
    auto r = testing::check_propagation_gradient(model, g, {}, true, trial, 1e-5);
    CHECK(r.max_rel_error <= 1e-4);
  }
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  Rng rng(4);
  RuleGraph g = testing::random_graph(10, 8, 2, 2, 2, rng);
  auto model = PropagationModel::init(8, small_config(2), 3);
  TrainConfig tc;
  tc.learning_rate = 0.0;
  tc.epochs = 7;
  TrainResult r = train_propagation(model, g, tc, 5);
  auto a = model.parameter_blocks();
  auto b = std::as_const(r.model).parameter_blocks();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::equal(a[i].begin(), a[i].end(), b[i].begin()));
  CHECK(r.log.size() == 7u);
}

TEST_CASE("training separates two clusters and is deterministic") {
  Rng rng(21);
  RuleGraph g = testing::two_cluster_graph(15, 8, 3, 0.2, 5, rng);
  GatConfig cfg = small_config(3);
  cfg.hidden = 16;
  auto model = PropagationModel::init(8, cfg, 1);
  TrainConfig tc;
  tc.epochs = 200;
  tc.learning_rate = 1e-3;
  TrainResult r = train_propagation(model, g, tc, 9);
  ForwardResult out = gat_forward(r.model, g, false, 0);
  double pos = 0.0, neg = 0.0;
  for (int i = 0; i < 15; ++i) pos += out.probabilities(i) / 15.0;
  for (int i = 15; i < 30; ++i) neg += out.probabilities(i) / 15.0;
  CHECK(pos > neg);

  TrainResult again = train_propagation(model, g, tc, 9);
  auto a = std::as_const(r.model).parameter_blocks();
  auto b = std::as_const(again.model).parameter_blocks();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::equal(a[i].begin(), a[i].end(), b[i].begin()));
  CHECK(format_training_log(r.log) == format_training_log(again.log));
}

TEST_CASE("loss decreases over the first ten epochs on a separable graph") {
  Rng rng(8);
  RuleGraph g = testing::two_cluster_graph(10, 8, 3, 0.1, 4, rng);
  auto model = PropagationModel::init(8, small_config(3), 2);
  TrainConfig tc;
  tc.epochs = 10;
  TrainResult r = train_propagation(model, g, tc, 4);
  const double before = compute_loss(g, gat_forward(model, g, false, 0), tc.weights).total;
  const double after = compute_loss(g, gat_forward(r.model, g, false, 0), tc.weights).total;
  CHECK(before - after >= 1e-6);
}

TEST_CASE("non-finite loss reports the epoch") {
  Rng rng(4);
  RuleGraph g = testing::random_graph(6, 8, 2, 1, 1, rng);
  g.features(2, 3) = std::nan("");
  auto model = PropagationModel::init(8, small_config(1), 3);
  try {
    train_propagation(model, g, TrainConfig{}, 1);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
  }
}

TEST_CASE("training log format") {
  std::vector<LossBreakdown> log = {{0.5, 0.25, 0.125, 0.875}};
  CHECK(format_training_log(log) == "epoch,l_sup,l_reg,l_dist,l_total\n1,0.5,0.25,0.125,0.875\n");
}

TEST_CASE("centroid selection arithmetic") {
  // Seeds 0 (pos) and 1 (neg) put the centroids at (1,0) and (0,1).
  RuleGraph g = manual_graph({{1, 0}, {0, 1}, {1, 0}, {1, 1}, {-1, 3}, {2, 0.5}},
                             {{1}, {0}, {3}, {2}, {5}, {4}}, {0}, {1});
  SelectionConfig cfg;
  cfg.max_rules = 10;
  SelectionResult r = select_by_centroids(g.features, g, cfg);
  REQUIRE(r.selected.size() == 4u);
  CHECK(r.truncated);
  CHECK(r.selected[0].node == 2);
  CHECK(r.selected[0].score == doctest::Approx(1.0));
  auto equidistant = std::find_if(r.selected.begin(), r.selected.end(),
                                  [](const ScoredNode& s) { return s.node == 3; });
  CHECK(equidistant->score == doctest::Approx(0.0).epsilon(1e-12));
  for (std::size_t i = 1; i < r.selected.size(); ++i) CHECK(r.selected[i - 1].score >= r.selected[i].score);

  cfg.exclude_seeds = false;
  cfg.max_rules = 2;
  SelectionResult with_seeds = select_by_centroids(g.features, g, cfg);
  CHECK_FALSE(with_seeds.truncated);
  // Nodes 0 and 2 tie at score 1; the lower index comes first.
  CHECK(with_seeds.selected[0].node == 0);
  CHECK(with_seeds.selected[1].node == 2);

  cfg.max_rules = 0;
  CHECK_THROWS_AS(select_by_centroids(g.features, g, cfg), DataError);
}

TEST_CASE("selection ranking is invariant to positive rescaling") {
  Rng rng(13);
  RuleGraph g = testing::random_graph(20, 8, 3, 3, 3, rng);
  auto model = PropagationModel::init(8, small_config(2), 1);
  MatrixXd h = gat_forward(model, g, false, 0).final_embeddings;
  SelectionConfig cfg;
  cfg.max_rules = 14;
  auto base = select_by_centroids(h, g, cfg);
  for (double scale : {1e-3, 0.5, 7.0, 1e4}) {
    auto scaled = select_by_centroids(h * scale, g, cfg);
    REQUIRE(scaled.selected.size() == base.selected.size());
    for (std::size_t i = 0; i < base.selected.size(); ++i) CHECK(scaled.selected[i].node == base.selected[i].node);
  }
}

TEST_CASE("planted clusters are recovered") {
  Rng rng(31);
  RuleGraph g = testing::two_cluster_graph(30, 8, 3, 0.3, 10, rng);
  auto model = PropagationModel::init(8, small_config(3), 5);
  TrainConfig tc;
  tc.epochs = 200;
  TrainResult r = train_propagation(model, g, tc, 6);
  SelectionConfig cfg;
  cfg.max_rules = 30;
  cfg.exclude_seeds = false;
  auto sel = select_new_rules(r.model, g, cfg);
  int hits = 0;
  for (const auto& s : sel.selected) hits += s.node < 30;
  CHECK(hits >= 27);
}

TEST_CASE("GLPM round trip") {
  const std::string path = (std::filesystem::temp_directory_path() / "rulegraph_model.glpm").string();
  Rng rng(6);
  for (int trial = 0; trial < 8; ++trial) {
    GatConfig cfg = small_config(1 + trial % 3);
    cfg.unweighted_neighbors = trial % 2 == 0;
    cfg.average_all_layers = trial % 4 == 1;
    cfg.dropout = 0.1 * trial;
    cfg.leaky_slope = 0.01 + 0.07 * trial;
    auto model = PropagationModel::init(5 + trial, cfg, trial);
    for (auto block : model.parameter_blocks())
      for (double& v : block) v = static_cast<float>(v);
    save_propagation_model(model, path);
    PropagationModel back = load_propagation_model(path);
    CHECK(back.config.heads == cfg.heads);
    CHECK(back.config.hidden == cfg.hidden);
    CHECK(back.config.unweighted_neighbors == cfg.unweighted_neighbors);
    CHECK(back.config.average_all_layers == cfg.average_all_layers);
    CHECK(back.config.dropout == cfg.dropout);
    CHECK(back.config.leaky_slope == cfg.leaky_slope);
    auto a = std::as_const(model).parameter_blocks();
    auto b = std::as_const(back).parameter_blocks();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::equal(a[i].begin(), a[i].end(), b[i].begin()));
  }
  {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out << 'x';
  }
  CHECK_THROWS_AS(load_propagation_model(path), DataError);
  std::filesystem::remove(path);
}
