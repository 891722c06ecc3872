#include "rulegraph/pipeline.h"

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>

#include "rulegraph/common.h"
#include "rulegraph/labeling.h"
#include "rulegraph/mentions.h"

namespace fs = std::filesystem;

namespace rulegraph {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// Reads keys from one JSON object and rejects the ones nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json* j, std::string path) : j_(j), path_(std::move(path)) {
    if (j_ && !j_->is_object()) throw UsageError("config: " + where() + " must be an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_ && j_->contains(key) && !(*j_)[key].is_null();
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = (*j_)[key].get<T>();
    } catch (const json::exception&) {
      throw UsageError("config: " + join_key(key) + " has the wrong type");
    }
  }

  template <typename T>
  void require(const std::string& key, T& out) {
    if (!has(key)) throw UsageError("config: missing required key " + join_key(key));
    get(key, out);
  }

  ObjectReader child(const std::string& key) {
    return ObjectReader(has(key) ? &(*j_)[key] : nullptr, join_key(key));
  }

  std::vector<std::string> keys() const {
    std::vector<std::string> out;
    if (j_)
      for (auto it = j_->begin(); it != j_->end(); ++it) out.push_back(it.key());
    return out;
  }

  void finish() const {
    if (!j_) return;
    for (auto it = j_->begin(); it != j_->end(); ++it)
      if (!seen_.count(it.key())) throw UsageError("config: unknown key " + join_key(it.key()));
  }

 private:
  std::string where() const { return path_.empty() ? "top level" : path_; }
  std::string join_key(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j, const std::string& base_dir) {
  PipelineConfig c;
  c.base_dir = base_dir;
  ObjectReader top(&j, "");

  ObjectReader corpus = top.child("corpus");
  if (!top.has("corpus")) throw UsageError("config: missing required key corpus");
  corpus.require("train", c.train_path);
  corpus.require("dev", c.dev_path);
  corpus.require("test", c.test_path);
  corpus.get("format", c.corpus_format);
  corpus.finish();

  ObjectReader emb = top.child("embeddings");
  emb.get("path", c.embeddings_path);
  emb.get("fallback_dim", c.fallback_dim);
  emb.get("fallback_seed", c.fallback_seed);
  std::string pooling = "mean";
  emb.get("pooling", pooling);
  if (pooling == "mean") {
    c.pooling = Pooling::kMean;
  } else if (pooling == "first") {
    c.pooling = Pooling::kFirstToken;
  } else {
    throw UsageError("config: embeddings.pooling must be \"mean\" or \"first\"");
  }
  emb.finish();

  top.require("seed_rules", c.seed_rules_path);
  top.get("link_votes", c.link_votes_path);
  top.get("labels", c.labels);

  ObjectReader ex = top.child("extraction");
  ex.get("pattern_top_k", c.pattern_top_k);
  ex.get("affix_min", c.extraction.affix_min);
  ex.get("affix_max", c.extraction.affix_max);
  ex.get("ngram_min", c.extraction.ngram_min);
  ex.get("ngram_max", c.extraction.ngram_max);
  ex.get("min_support", c.extraction.min_support);
  ex.finish();

  ObjectReader graph = top.child("graph");
  graph.get("k", c.k);
  graph.finish();

  ObjectReader prop = top.child("propagation");
  prop.get("heads", c.gat.heads);
  prop.get("hidden", c.gat.hidden);
  prop.get("dropout", c.gat.dropout);
  prop.get("leaky_slope", c.gat.leaky_slope);
  prop.get("unweighted_neighbors", c.gat.unweighted_neighbors);
  prop.get("average_all_layers", c.gat.average_all_layers);
  prop.get("lr", c.learning_rate);
  prop.get("lambda_reg", c.loss_weights.reg);
  prop.get("lambda_dist", c.loss_weights.dist);
  prop.get("exclude_seeds", c.exclude_seeds);
  prop.finish();

  ObjectReader kinds = top.child("rule_kinds");
  for (const auto& name : kinds.keys()) {
    RuleKind kind;
    try {
      kind = parse_kind(name);
    } catch (const DataError&) {
      throw UsageError("config: unknown rule kind rule_kinds." + name);
    }
    ObjectReader r = kinds.child(name);
    KindSettings& s = c.kind(kind);
    r.get("enabled", s.enabled);
    r.get("M", s.max_rules);
    r.get("epochs", s.epochs);
    r.finish();
  }
  kinds.finish();

  ObjectReader gen = top.child("generative");
  gen.get("init_acc", c.generative.init_acc);
  gen.get("acc_prior", c.generative.acc_prior);
  gen.get("balance_prior", c.generative.balance_prior);
  gen.get("em_epochs", c.generative.epochs);
  gen.get("tag_independent_propensity", c.generative.tag_independent_propensity);
  gen.finish();

  ObjectReader crf = top.child("crf");
  crf.get("lr", c.crf.lr);
  crf.get("l2", c.crf.l2);
  crf.get("epochs", c.crf.epochs);
  crf.get("batch_size", c.crf.batch_size);
  crf.get("soft_labels", c.crf.soft_labels);
  crf.finish();

  ObjectReader ev = top.child("eval");
  std::string mode = "exact";
  ev.get("rule_match_mode", mode);
  if (mode == "exact") {
    c.rule_match_mode = MatchMode::kExact;
  } else if (mode == "overlap") {
    c.rule_match_mode = MatchMode::kOverlap;
  } else {
    throw UsageError("config: eval.rule_match_mode must be \"exact\" or \"overlap\"");
  }
  ev.finish();

  top.get("seed", c.seed);
  top.get("output_dir", c.output_dir);
  top.finish();
  c.validate();
  return c;
}

void PipelineConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) throw UsageError("config: " + what);
  };
  check(corpus_format == "auto" || corpus_format == "jsonl" || corpus_format == "conll",
        "corpus.format must be auto, jsonl or conll");
  check(fallback_dim >= 1, "embeddings.fallback_dim must be >= 1");
  check(pattern_top_k >= 0, "extraction.pattern_top_k must be >= 0");
  check(k >= 1, "graph.k must be >= 1");
  check(learning_rate >= 0.0, "propagation.lr must be >= 0");
  check(loss_weights.reg >= 0.0 && loss_weights.dist >= 0.0, "loss weights must be >= 0");
  for (RuleKind kind : kAllRuleKinds) {
    const auto& s = this->kind(kind);
    const std::string name(kind_name(kind));
    check(s.max_rules >= 1 && s.max_rules <= 10000, "rule_kinds." + name + ".M must be within 1..10000");
    check(s.epochs >= 1, "rule_kinds." + name + ".epochs must be >= 1");
  }
  for (const auto& l : labels) check(!l.empty() && l != "O", "labels must be non-empty and not \"O\"");
  try {
    extraction.validate();
    gat.validate();
    generative.validate();
    crf.validate();
  } catch (const DataError& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
}

ordered_json PipelineConfig::to_json() const {
  ordered_json kinds_json = ordered_json::object();
  for (RuleKind kind : kAllRuleKinds) {
    const auto& s = this->kind(kind);
    kinds_json[std::string(kind_name(kind))] = {{"enabled", s.enabled}, {"M", s.max_rules}, {"epochs", s.epochs}};
  }
  return {
      {"corpus", {{"train", train_path}, {"dev", dev_path}, {"test", test_path}, {"format", corpus_format}}},
      {"embeddings",
       {{"path", embeddings_path},
        {"fallback_dim", fallback_dim},
        {"fallback_seed", fallback_seed},
        {"pooling", pooling == Pooling::kMean ? "mean" : "first"}}},
      {"seed_rules", seed_rules_path},
      {"link_votes", link_votes_path},
      {"labels", labels},
      {"extraction",
       {{"pattern_top_k", pattern_top_k},
        {"affix_min", extraction.affix_min},
        {"affix_max", extraction.affix_max},
        {"ngram_min", extraction.ngram_min},
        {"ngram_max", extraction.ngram_max},
        {"min_support", extraction.min_support}}},
      {"graph", {{"k", k}}},
      {"propagation",
       {{"heads", gat.heads},
        {"hidden", gat.hidden},
        {"dropout", gat.dropout},
        {"leaky_slope", gat.leaky_slope},
        {"unweighted_neighbors", gat.unweighted_neighbors},
        {"average_all_layers", gat.average_all_layers},
        {"lr", learning_rate},
        {"lambda_reg", loss_weights.reg},
        {"lambda_dist", loss_weights.dist},
        {"exclude_seeds", exclude_seeds}}},
      {"rule_kinds", kinds_json},
      {"generative",
       {{"init_acc", generative.init_acc},
        {"acc_prior", generative.acc_prior},
        {"balance_prior", generative.balance_prior},
        {"em_epochs", generative.epochs},
        {"tag_independent_propensity", generative.tag_independent_propensity}}},
      {"crf",
       {{"lr", crf.lr},
        {"l2", crf.l2},
        {"epochs", crf.epochs},
        {"batch_size", crf.batch_size},
        {"soft_labels", crf.soft_labels}}},
      {"eval", {{"rule_match_mode", rule_match_mode == MatchMode::kExact ? "exact" : "overlap"}}},
      {"seed", seed},
  };
}

std::string PipelineConfig::resolve(const std::string& path) const {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base_dir) / path).lexically_normal().string();
}

std::string PipelineConfig::output_path(const std::string& name) const {
  return (fs::path(resolve(output_dir)) / name).string();
}

PipelineConfig load_pipeline_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw UsageError("config " + path + " is not valid JSON: " + e.what());
  }
  fs::path base = fs::path(path).parent_path();
  return PipelineConfig::from_json(j, base.empty() ? "." : base.string());
}

std::string config_hash(const PipelineConfig& cfg) { return hex64(fnv1a(cfg.to_json().dump())); }

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::kExtract: return "extract";
    case Stage::kGraph: return "graph";
    case Stage::kPropagate: return "propagate";
    case Stage::kSelect: return "select";
    case Stage::kApply: return "apply";
    case Stage::kFitLabelModel: return "fit-label-model";
    case Stage::kTrainTagger: return "train-tagger";
    case Stage::kEval: return "eval";
    case Stage::kAll: return "all";
  }
  return "?";
}

Stage parse_stage(std::string_view name) {
  for (Stage s : kPipelineStages)
    if (stage_name(s) == name) return s;
  if (name == "all") return Stage::kAll;
  throw UsageError("unknown stage: " + std::string(name));
}

namespace {

// ---------------------------------------------------------------------------
// Stamps: which stages have run, under which config hash and seed.

class Stamps {
 public:
  explicit Stamps(const PipelineConfig& cfg) : cfg_(cfg), path_(cfg.output_path("stamps.json")) {
    hash_ = config_hash(cfg);
    if (fs::exists(path_)) {
      try {
        doc_ = ordered_json::parse(read_text_file(path_));
      } catch (const ordered_json::exception&) {
        doc_ = ordered_json::object();
      }
    }
    if (!doc_.is_object()) doc_ = ordered_json::object();
  }

  void require(Stage s) const {
    const std::string name(stage_name(s));
    bool ok = doc_.contains("stages") && doc_["stages"].contains(name);
    if (ok) {
      const auto& entry = doc_["stages"][name];
      ok = entry.value("config_hash", "") == hash_;
      for (const auto& a : entry.value("artifacts", std::vector<std::string>{}))
        ok = ok && fs::exists(cfg_.output_path(a));
    }
    if (!ok) throw UsageError("requires stage: " + name);
  }

  void record(Stage s, const std::vector<std::string>& artifacts) {
    doc_["config_hash"] = hash_;
    doc_["seed"] = cfg_.seed;
    if (!doc_.contains("stages")) doc_["stages"] = ordered_json::object();
    doc_["stages"][std::string(stage_name(s))] = {
        {"config_hash", hash_}, {"seed", cfg_.seed}, {"artifacts", artifacts}};
    write_text_file(path_, doc_.dump(2) + "\n");
  }

 private:
  const PipelineConfig& cfg_;
  std::string path_;
  std::string hash_;
  ordered_json doc_;
};

// ---------------------------------------------------------------------------
// Shared loading helpers.

Corpus load_split(const PipelineConfig& cfg, const std::string& path) {
  const std::string p = cfg.resolve(path);
  CorpusFormat f = cfg.corpus_format == "auto"    ? guess_corpus_format(p)
                   : cfg.corpus_format == "jsonl" ? CorpusFormat::kJsonl
                                                  : CorpusFormat::kConllTsv;
  return load_corpus(p, f);
}

RuleSet load_seeds(const PipelineConfig& cfg) { return load_seed_rules(cfg.resolve(cfg.seed_rules_path)); }

std::vector<std::string> entity_labels(const PipelineConfig& cfg, const RuleSet& seeds) {
  if (!cfg.labels.empty()) return cfg.labels;
  std::vector<std::string> out;
  for (const auto& r : seeds.rules())
    if (std::find(out.begin(), out.end(), r.label) == out.end()) out.push_back(r.label);
  if (out.empty()) throw DataError("no entity labels: the seed file is empty and config.labels is unset");
  return out;
}

std::string format_patterns(const std::vector<PosPattern>& patterns) {
  std::string out;
  for (const auto& p : patterns) out += p.to_string() + "\n";
  return out;
}

std::vector<PosPattern> parse_patterns(const std::string& text) {
  std::vector<PosPattern> out;
  for (const auto& line : split(text, '\n'))
    if (!line.empty()) out.push_back(PosPattern::parse(line));
  return out;
}

std::string format_candidates(const std::vector<CandidateMention>& ms) {
  std::string out;
  for (const auto& m : ms) {
    out += std::to_string(m.doc) + "\t" + std::to_string(m.sent) + "\t" + std::to_string(m.start) + "\t" +
           std::to_string(m.end) + "\t" + m.pattern_id + "\n";
  }
  return out;
}

std::vector<CandidateMention> parse_candidates(const std::string& text, const Corpus& corpus) {
  std::vector<CandidateMention> out;
  int line_no = 0;
  for (const auto& line : split(text, '\n')) {
    ++line_no;
    if (line.empty()) continue;
    auto f = split(line, '\t');
    CandidateMention m;
    try {
      if (f.size() != 5) throw std::invalid_argument("fields");
      m = {std::stoi(f[0]), std::stoi(f[1]), std::stoi(f[2]), std::stoi(f[3]), f[4]};
    } catch (const std::exception&) {
      throw DataError("candidates.tsv line " + std::to_string(line_no) + ": malformed row");
    }
    const bool ok = m.doc >= 0 && static_cast<std::size_t>(m.doc) < corpus.num_documents() && m.sent >= 0 &&
                    static_cast<std::size_t>(m.sent) < corpus.document(m.doc).sentences.size() && m.start >= 0 &&
                    m.start < m.end && m.end <= corpus.sentence(m.doc, m.sent).size();
    if (!ok) throw DataError("candidates.tsv line " + std::to_string(line_no) + ": span out of bounds");
    out.push_back(m);
  }
  return out;
}

std::string graph_name(RuleKind kind, const std::string& label) {
  return std::string(kind_name(kind)) + "__" + label;
}

std::uint64_t graph_seed(const PipelineConfig& cfg, const std::string& name) {
  return fnv1a(name, 0xcbf29ce484222325ULL ^ (cfg.seed * 0x9e3779b97f4a7c15ULL));
}

ordered_json rule_json(const Rule& r) {
  return {{"kind", kind_name(r.kind)},
          {"key", r.key},
          {"label", r.label},
          {"polarity", r.polarity == Polarity::kPositive ? "pos" : "neg"}};
}

Rule rule_from_json(const json& j) {
  return Rule{parse_kind(j.at("kind").get<std::string>()), j.at("key").get<std::string>(),
              j.at("label").get<std::string>(),
              j.at("polarity").get<std::string>() == "pos" ? Polarity::kPositive : Polarity::kNegative};
}

void save_graph(const RuleGraph& g, const std::string& path) {
  ordered_json nodes = ordered_json::array();
  for (const auto& r : g.nodes) nodes.push_back(rule_json(r));
  ordered_json features = ordered_json::array();
  for (int i = 0; i < g.num_nodes(); ++i) {
    std::vector<double> row(g.dim());
    for (int d = 0; d < g.dim(); ++d) row[d] = g.features(i, d);
    features.push_back(row);
  }
  ordered_json j = {{"k", g.k},         {"dim", g.dim()},           {"nodes", nodes},
                    {"features", features}, {"neighbors", g.neighbors}, {"seed_pos", g.seed_pos},
                    {"seed_neg", g.seed_neg}};
  write_text_file(path, j.dump() + "\n");
}

RuleGraph load_graph(const std::string& path) {
  try {
    json j = json::parse(read_text_file(path));
    RuleGraph g;
    g.k = j.at("k").get<int>();
    const int dim = j.at("dim").get<int>();
    for (const auto& n : j.at("nodes")) g.nodes.push_back(rule_from_json(n));
    g.features.resize(g.num_nodes(), dim);
    const auto& feats = j.at("features");
    if (static_cast<int>(feats.size()) != g.num_nodes()) throw DataError("feature rows do not match nodes");
    for (int i = 0; i < g.num_nodes(); ++i) {
      if (static_cast<int>(feats[i].size()) != dim) throw DataError("feature row of wrong width");
      for (int d = 0; d < dim; ++d) g.features(i, d) = feats[i][d].get<double>();
    }
    g.neighbors = j.at("neighbors").get<std::vector<std::vector<int>>>();
    g.seed_pos = j.at("seed_pos").get<std::vector<int>>();
    g.seed_neg = j.at("seed_neg").get<std::vector<int>>();
    return g;
  } catch (const json::exception& e) {
    throw DataError("malformed graph file " + path + ": " + e.what());
  }
}

struct GraphEntry {
  std::string name;
  bool ok = false;
  int nodes = 0;
  std::string detail;
};

std::vector<GraphEntry> load_graph_index(const PipelineConfig& cfg) {
  std::vector<GraphEntry> out;
  for (const auto& line : split(read_text_file(cfg.output_path("graphs/index.tsv")), '\n')) {
    if (line.empty() || line[0] == '#') continue;
    auto f = split(line, '\t');
    if (f.size() != 4) throw DataError("malformed graphs/index.tsv row: " + line);
    out.push_back({f[0], f[1] == "ok", std::stoi(f[2]), f[3]});
  }
  return out;
}

RuleKind kind_of_graph(const std::string& name) { return parse_kind(name.substr(0, name.find("__"))); }

std::string format_trace(const std::vector<double>& objective) {
  std::string out = "epoch,objective\n";
  for (std::size_t i = 0; i < objective.size(); ++i)
    out += std::to_string(i) + "," + format_fixed(objective[i], 6) + "\n";
  return out;
}

// IO tag names per sentence -> BIO, splitting runs where link votes say so.
std::vector<std::vector<std::string>> decode_bio(const GenerativeModel& model, const CompiledData& data,
                                                 const LinkTable* links, int threads) {
  auto paths = corpus_viterbi(model, data, threads);
  std::vector<std::vector<std::string>> out;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    std::vector<std::string> io;
    for (int k : paths[i]) io.push_back(model.tags.tag(k));
    const auto& s = data.sentences[i];
    out.push_back(links ? io_to_bio(io, link_splits(*links, s.offset, s.length)) : io_to_bio(io));
  }
  return out;
}

std::optional<LinkTable> load_links(const PipelineConfig& cfg, const Corpus& train) {
  if (cfg.link_votes_path.empty()) return std::nullopt;
  return load_link_votes(cfg.resolve(cfg.link_votes_path), train);
}

// ---------------------------------------------------------------------------
// Stages.

void stage_extract(const PipelineConfig& cfg, Stamps& stamps, std::ostream& log) {
  Corpus train = load_split(cfg, cfg.train_path);
  Corpus dev = load_split(cfg, cfg.dev_path);
  RuleSet seeds = load_seeds(cfg);
  auto labels = entity_labels(cfg, seeds);
  auto patterns = mine_pos_patterns(dev, cfg.pattern_top_k);
  auto mentions = extract_candidates(train, patterns);
  write_text_file(cfg.output_path("patterns.txt"), format_patterns(patterns));
  write_text_file(cfg.output_path("candidates.tsv"), format_candidates(mentions));
  std::string rules_text;
  std::size_t total = 0;
  for (const auto& label : labels) {
    RuleSet cands = extract_candidate_rules(train, mentions, cfg.extraction, label);
    total += cands.size();
    for (std::size_t i = 0; i < cands.size(); ++i) {
      const Rule& r = cands.rule(i);
      rules_text += std::string(kind_name(r.kind)) + "\t" + r.key + "\t" + r.label + "\t" +
                    std::to_string(cands.matches(i).size()) + "\n";
    }
  }
  write_text_file(cfg.output_path("candidate_rules.tsv"), rules_text);
  log << "extract: " << patterns.size() << " POS patterns, " << mentions.size() << " candidate mentions, "
      << total << " candidate rules\n";
  stamps.record(Stage::kExtract, {"patterns.txt", "candidates.tsv", "candidate_rules.tsv"});
}

void stage_graph(const PipelineConfig& cfg, Stamps& stamps, std::ostream& log) {
  stamps.require(Stage::kExtract);
  Corpus train = load_split(cfg, cfg.train_path);
  RuleSet seeds = load_seeds(cfg);
  auto labels = entity_labels(cfg, seeds);
  auto mentions = parse_candidates(read_text_file(cfg.output_path("candidates.tsv")), train);
  EmbeddingTable table = cfg.embeddings_path.empty()
                             ? hash_fallback_embed(train, cfg.fallback_dim, cfg.fallback_seed)
                             : load_embedding_table(cfg.resolve(cfg.embeddings_path), train);
  fs::create_directories(cfg.output_path("graphs"));
  std::string index = "# name\tstatus\tnodes\tdetail\n";
  std::vector<std::string> artifacts = {"graphs/index.tsv"};
  for (const auto& label : labels) {
    RuleSet all = extract_candidate_rules(train, mentions, cfg.extraction, label);
    for (RuleKind kind : kAllRuleKinds) {
      if (!cfg.kind(kind).enabled) continue;
      const std::string name = graph_name(kind, label);
      RuleSet cands = all.filter(kind, label);
      std::vector<RuleNode> cand_nodes, seed_nodes;
      for (std::size_t i = 0; i < cands.size(); ++i)
        cand_nodes.push_back({cands.rule(i), rule_embedding(train, mentions, cands.matches(i), table, cfg.pooling)});
      std::size_t appended = 0, unmatched = 0, pos = 0, neg = 0;
      const RuleSet kind_seeds = seeds.filter(kind, label);
      for (const Rule& s : kind_seeds.rules()) {
        auto matches = match_rule(s, train, mentions);
        if (matches.empty()) {
          ++unmatched;
          continue;
        }
        seed_nodes.push_back({s, rule_embedding(train, mentions, matches, table, cfg.pooling)});
        (s.polarity == Polarity::kPositive ? pos : neg) += 1;
        if (!cands.find(kind, s.key, label)) ++appended;
      }
      const int n = static_cast<int>(cand_nodes.size() + appended);
      std::string skip;
      if (pos == 0 || neg == 0) {
        skip = "needs matched positive and negative seeds";
      } else if (n < 3) {
        skip = "fewer than 3 nodes";
      }
      if (!skip.empty()) {
        index += name + "\tskipped\t" + std::to_string(n) + "\t" + skip + "\n";
        continue;
      }
      const int k = std::min(cfg.k, n - 1);
      RuleGraph g = build_rule_graph(cand_nodes, seed_nodes, k);
      save_graph(g, cfg.output_path("graphs/" + name + ".json"));
      artifacts.push_back("graphs/" + name + ".json");
      std::string detail = "k=" + std::to_string(k) + " seeds=" + std::to_string(pos) + "+" + std::to_string(neg);
      if (unmatched > 0) detail += " unmatched_seeds=" + std::to_string(unmatched);
      index += name + "\tok\t" + std::to_string(g.num_nodes()) + "\t" + detail + "\n";
      log << "graph: " << name << " with " << g.num_nodes() << " nodes (" << detail << ")\n";
    }
  }
  write_text_file(cfg.output_path("graphs/index.tsv"), index);
  stamps.record(Stage::kGraph, artifacts);
}

void stage_propagate(const PipelineConfig& cfg, Stamps& stamps, std::ostream& log) {
  stamps.require(Stage::kGraph);
  std::vector<GraphEntry> todo;
  for (auto& e : load_graph_index(cfg))
    if (e.ok) todo.push_back(e);
  fs::create_directories(cfg.output_path("models"));
  fs::create_directories(cfg.output_path("logs"));
  std::vector<std::string> summaries(todo.size());
  parallel_for(todo.size(), thread_count(), [&](std::size_t i) {
    const std::string& name = todo[i].name;
    RuleGraph g = load_graph(cfg.output_path("graphs/" + name + ".json"));
    const std::uint64_t seed = graph_seed(cfg, name);
    PropagationModel init = PropagationModel::init(g.dim(), cfg.gat, seed);
    TrainConfig tc;
    tc.epochs = cfg.kind(kind_of_graph(name)).epochs;
    tc.learning_rate = cfg.learning_rate;
    tc.weights = cfg.loss_weights;
    TrainResult r;
    try {
      r = train_propagation(std::move(init), g, tc, seed + 1);
    } catch (const NumericError& e) {
      throw NumericError(name + ": " + e.what());
    }
    save_propagation_model(r.model, cfg.output_path("models/" + name + ".glpm"));
    write_text_file(cfg.output_path("logs/" + name + ".csv"), format_training_log(r.log));
    summaries[i] = "propagate: " + name + " final loss " + format_fixed(r.log.back().total, 6) + "\n";
  });
  std::vector<std::string> artifacts;
  for (std::size_t i = 0; i < todo.size(); ++i) {
    log << summaries[i];
    artifacts.push_back("models/" + todo[i].name + ".glpm");
    artifacts.push_back("logs/" + todo[i].name + ".csv");
  }
  stamps.record(Stage::kPropagate, artifacts);
}

void stage_select(const PipelineConfig& cfg, Stamps& stamps, std::ostream& log) {
  stamps.require(Stage::kPropagate);
  RuleSet selected;
  std::string scores = "graph\trank\tkind\tkey\tlabel\tscore\n";
  for (const auto& e : load_graph_index(cfg)) {
    if (!e.ok) continue;
    RuleGraph g = load_graph(cfg.output_path("graphs/" + e.name + ".json"));
    PropagationModel model = load_propagation_model(cfg.output_path("models/" + e.name + ".glpm"));
    SelectionConfig sc;
    sc.max_rules = cfg.kind(kind_of_graph(e.name)).max_rules;
    sc.exclude_seeds = cfg.exclude_seeds;
    SelectionResult r = select_new_rules(model, g, sc);
    if (r.truncated) {
      log << "select: warning: " << e.name << " has only " << r.selected.size() << " eligible rules (M = "
          << sc.max_rules << ")\n";
    }
    int rank = 0;
    int added = 0;
    for (const auto& s : r.selected) {
      Rule rule = g.nodes[s.node];
      scores += e.name + "\t" + std::to_string(++rank) + "\t" + std::string(kind_name(rule.kind)) + "\t" + rule.key +
                "\t" + rule.label + "\t" + format_fixed(s.score, 6) + "\n";
      if (g.is_seed(s.node)) continue;
      rule.polarity = Polarity::kPositive;
      selected.add(rule);
      ++added;
    }
    log << "select: " << e.name << " added " << added << " rules\n";
  }
  save_seed_rules(selected, cfg.output_path("selected_rules.tsv"));
  write_text_file(cfg.output_path("selection_scores.tsv"), scores);
  stamps.record(Stage::kSelect, {"selected_rules.tsv", "selection_scores.tsv"});
}

RuleSet final_rules(const PipelineConfig& cfg) {
  RuleSet rules = load_seeds(cfg);
  RuleSet selected = load_seed_rules(cfg.output_path("selected_rules.tsv"));
  for (const Rule& r : selected.rules())
    if (!rules.find(r.kind, r.key, r.label)) rules.add(r);
  return rules;
}

void stage_apply(const PipelineConfig& cfg, Stamps& stamps, std::ostream& log) {
  stamps.require(Stage::kExtract);
  stamps.require(Stage::kSelect);
  Corpus train = load_split(cfg, cfg.train_path);
  Corpus test = load_split(cfg, cfg.test_path);
  RuleSet rules = final_rules(cfg);
  auto patterns = parse_patterns(read_text_file(cfg.output_path("patterns.txt")));
  auto train_mentions = parse_candidates(read_text_file(cfg.output_path("candidates.tsv")), train);
  auto test_mentions = extract_candidates(test, patterns);
  LabelMatrix mtrain = apply_rules(rules, train, train_mentions);
  LabelMatrix mtest = apply_rules(rules, test, test_mentions);
  save_seed_rules(rules, cfg.output_path("rules_applied.tsv"));
  save_label_matrix(mtrain, train, cfg.output_path("label_matrix_train.tsv"));
  save_label_matrix(mtest, test, cfg.output_path("label_matrix_test.tsv"));
  log << "apply: " << rules.size() << " rules, " << mtrain.num_votes() << " train votes, " << mtest.num_votes()
      << " test votes\n";
  stamps.record(Stage::kApply, {"rules_applied.tsv", "label_matrix_train.tsv", "label_matrix_test.tsv"});
}

void stage_fit(const PipelineConfig& cfg, Stamps& stamps, std::ostream& log) {
  stamps.require(Stage::kApply);
  Corpus train = load_split(cfg, cfg.train_path);
  RuleSet rules = load_seed_rules(cfg.output_path("rules_applied.tsv"));
  TagSet tags(entity_labels(cfg, load_seeds(cfg)));
  LabelMatrix m = load_label_matrix(cfg.output_path("label_matrix_train.tsv"), train, rules.size());
  auto links = load_links(cfg, train);
  CompiledData data = compile_votes(train, m, links ? &*links : nullptr, tags);
  GenerativeModel init = init_generative(m, links ? links->num_sources() : 0, tags, cfg.generative);
  FitResult r = fit_em(init, data, cfg.generative.epochs, thread_count());
  save_generative_model(r.model, cfg.output_path("label_model.glgm"));
  write_text_file(cfg.output_path("em_trace.csv"), format_trace(r.objective));
  write_text_file(cfg.output_path("marginals_train.tsv"),
                  format_marginals(train, tags, corpus_marginals(r.model, data, thread_count())));
  log << "fit-label-model: objective " << format_fixed(r.objective.front(), 4) << " -> "
      << format_fixed(r.objective.back(), 4) << "\n";
  stamps.record(Stage::kFitLabelModel, {"label_model.glgm", "em_trace.csv", "marginals_train.tsv"});
}

void stage_train_tagger(const PipelineConfig& cfg, Stamps& stamps, std::ostream& log) {
  stamps.require(Stage::kFitLabelModel);
  Corpus train = load_split(cfg, cfg.train_path);
  RuleSet rules = load_seed_rules(cfg.output_path("rules_applied.tsv"));
  GenerativeModel gm = load_generative_model(cfg.output_path("label_model.glgm"));
  LabelMatrix m = load_label_matrix(cfg.output_path("label_matrix_train.tsv"), train, rules.size());
  auto links = load_links(cfg, train);
  CompiledData data = compile_votes(train, m, links ? &*links : nullptr, gm.tags);
  BioTags bio(std::vector<std::string>(gm.tags.tags().begin() + 1, gm.tags.tags().end()));
  const int threads = thread_count();
  FeatureVocab vocab = build_vocab(train);
  auto feats = featurize_corpus(train, vocab, threads);
  std::vector<CrfExample> examples(feats.size());
  if (cfg.crf.soft_labels) {
    auto marg = corpus_marginals(gm, data, threads);
    for (std::size_t i = 0; i < feats.size(); ++i) {
      const auto& s = data.sentences[i];
      std::vector<std::vector<double>> slice(marg.begin() + s.offset, marg.begin() + s.offset + s.length);
      examples[i] = {std::move(feats[i]), soft_targets(slice, gm.tags, bio)};
    }
  } else {
    auto labels = decode_bio(gm, data, links ? &*links : nullptr, threads);
    for (std::size_t i = 0; i < feats.size(); ++i) examples[i] = {std::move(feats[i]), hard_targets(labels[i], bio)};
  }
  CrfTrainResult r = train_crf(examples, bio, vocab, cfg.crf, cfg.seed ^ 0x5bd1e995ULL);
  save_crf_model(r.model, cfg.output_path("tagger.glcm"));
  write_text_file(cfg.output_path("crf_log.csv"), format_crf_log(r.objective));
  log << "train-tagger: " << vocab.size() << " features, objective " << format_fixed(r.objective.back(), 4) << "\n";
  stamps.record(Stage::kTrainTagger, {"tagger.glcm", "crf_log.csv"});
}

std::vector<ScoreRow> stage_eval(const PipelineConfig& cfg, Stamps& stamps, std::ostream& log) {
  stamps.require(Stage::kApply);
  stamps.require(Stage::kFitLabelModel);
  stamps.require(Stage::kTrainTagger);
  const int threads = thread_count();
  Corpus train = load_split(cfg, cfg.train_path);
  Corpus dev = load_split(cfg, cfg.dev_path);
  Corpus test = load_split(cfg, cfg.test_path);
  RuleSet seeds = load_seeds(cfg);
  RuleSet rules = load_seed_rules(cfg.output_path("rules_applied.tsv"));
  GenerativeModel gm = load_generative_model(cfg.output_path("label_model.glgm"));
  CrfModel crf = load_crf_model(cfg.output_path("tagger.glcm"));
  auto patterns = parse_patterns(read_text_file(cfg.output_path("patterns.txt")));
  auto train_mentions = parse_candidates(read_text_file(cfg.output_path("candidates.tsv")), train);
  auto test_mentions = extract_candidates(test, patterns);
  auto links = load_links(cfg, train);

  std::vector<ScoreRow> rows;
  // Seed rules alone through the same label model.
  {
    LabelMatrix mtrain = apply_rules(seeds, train, train_mentions);
    GenerativeModel init = init_generative(mtrain, links ? links->num_sources() : 0, gm.tags, cfg.generative);
    FitResult fit = fit_em(init, compile_votes(train, mtrain, links ? &*links : nullptr, gm.tags),
                           cfg.generative.epochs, threads);
    LabelMatrix mtest = apply_rules(seeds, test, test_mentions);
    auto pred = decode_bio(fit.model, compile_votes(test, mtest, nullptr, gm.tags), nullptr, threads);
    rows.push_back({"seed_baseline", "test", span_f1(pred, test)});
  }
  LabelMatrix mtest = load_label_matrix(cfg.output_path("label_matrix_test.tsv"), test, rules.size());
  auto gen_pred = decode_bio(gm, compile_votes(test, mtest, nullptr, gm.tags), nullptr, threads);
  rows.push_back({"generative", "test", span_f1(gen_pred, test)});
  auto crf_pred = predict_corpus(crf, test, threads);
  rows.push_back({"discriminative", "test", span_f1(crf_pred, test)});

  write_text_file(cfg.output_path("scores.csv"), format_scores_csv(rows));
  write_text_file(cfg.output_path("predictions.conll"), format_predictions(test, crf_pred));
  auto dev_mentions = extract_candidates(dev, patterns);
  write_text_file(cfg.output_path("rule_report.tsv"),
                  format_rule_report(rule_accuracy_report(rules, dev, dev_mentions, cfg.rule_match_mode)));
  for (const auto& r : rows) {
    log << "eval: " << r.model << " test P=" << format_fixed(r.score.precision, 4)
        << " R=" << format_fixed(r.score.recall, 4) << " F1=" << format_fixed(r.score.f1, 4) << "\n";
  }
  stamps.record(Stage::kEval, {"scores.csv", "predictions.conll", "rule_report.tsv"});
  return rows;
}

std::vector<ScoreRow> run_one(const PipelineConfig& cfg, Stage stage, std::ostream& log) {
  Stamps stamps(cfg);
  std::vector<ScoreRow> rows;
  try {
    switch (stage) {
      case Stage::kExtract: stage_extract(cfg, stamps, log); break;
      case Stage::kGraph: stage_graph(cfg, stamps, log); break;
      case Stage::kPropagate: stage_propagate(cfg, stamps, log); break;
      case Stage::kSelect: stage_select(cfg, stamps, log); break;
      case Stage::kApply: stage_apply(cfg, stamps, log); break;
      case Stage::kFitLabelModel: stage_fit(cfg, stamps, log); break;
      case Stage::kTrainTagger: stage_train_tagger(cfg, stamps, log); break;
      case Stage::kEval: rows = stage_eval(cfg, stamps, log); break;
      case Stage::kAll: break;
    }
  } catch (const UsageError& e) {
    throw UsageError("stage " + std::string(stage_name(stage)) + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError("stage " + std::string(stage_name(stage)) + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError("stage " + std::string(stage_name(stage)) + ": " + e.what());
  }
  return rows;
}

std::vector<ScoreRow> run_all(const PipelineConfig& cfg, std::ostream& log) {
  std::vector<ScoreRow> rows;
  for (Stage s : kPipelineStages) rows = run_one(cfg, s, log);
  return rows;
}

}  // namespace

void run_stage(const PipelineConfig& cfg, Stage stage, std::ostream& log) {
  cfg.validate();
  fs::create_directories(cfg.resolve(cfg.output_dir));
  if (stage == Stage::kAll) {
    run_all(cfg, log);
  } else {
    run_one(cfg, stage, log);
  }
}

std::vector<AblationRow> run_ablation(const PipelineConfig& cfg, const std::vector<RuleKind>& plan,
                                      std::ostream& log) {
  cfg.validate();
  std::vector<AblationRow> rows;
  std::string kinds_label = "seeds";
  for (std::size_t step = 0; step <= plan.size(); ++step) {
    PipelineConfig c = cfg;
    for (auto& s : c.kinds) s.enabled = false;
    for (std::size_t i = 0; i < step; ++i) {
      c.kind(plan[i]).enabled = true;
      kinds_label = (i == 0 ? std::string() : kinds_label + "+") + std::string(kind_name(plan[i]));
    }
    c.output_dir = (fs::path(cfg.resolve(cfg.output_dir)) / "ablation" / ("step_" + std::to_string(step))).string();
    fs::create_directories(c.output_dir);
    log << "ablate: step " << step << " (" << kinds_label << ")\n";
    for (const auto& r : run_all(c, log)) {
      if (r.model == "seed_baseline" && step > 0) continue;
      rows.push_back({static_cast<int>(step), kinds_label, r});
    }
  }
  write_text_file(cfg.output_path("ablation.csv"), format_ablation_csv(rows));
  return rows;
}

std::string format_ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "step,kinds,model,split,precision,recall,f1,tp,fp,fn\n";
  for (const auto& a : rows) {
    const auto& s = a.row.score;
    out += std::to_string(a.step) + "," + a.kinds + "," + a.row.model + "," + a.row.split + "," +
           format_fixed(s.precision, 6) + "," + format_fixed(s.recall, 6) + "," + format_fixed(s.f1, 6) + "," +
           std::to_string(s.tp) + "," + std::to_string(s.fp) + "," + std::to_string(s.fn) + "\n";
  }
  return out;
}

}  // namespace rulegraph
