#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>

#include "rulegraph/common.h"
#include "rulegraph/corpus.h"
#include "rulegraph/discriminative.h"
#include "rulegraph/eval.h"
#include "rulegraph/generative.h"
#include "rulegraph/pipeline.h"
#include "rulegraph/rules.h"
#include "rulegraph/synthetic.h"

namespace py = pybind11;
using namespace rulegraph;

namespace {

PipelineConfig config_with(const std::string& path, std::optional<std::string> out,
                           std::optional<std::uint64_t> seed) {
  PipelineConfig cfg = load_pipeline_config(path);
  if (out) cfg.output_dir = *out;
  if (seed) cfg.seed = *seed;
  return cfg;
}

std::string run(const std::string& config, const std::string& stage, std::optional<std::string> out,
                std::optional<std::uint64_t> seed) {
  PipelineConfig cfg = config_with(config, out, seed);
  std::ostringstream log;
  {
    py::gil_scoped_release release;
    run_stage(cfg, parse_stage(stage), log);
  }
  return log.str();
}

py::list ablate(const std::string& config, const std::vector<std::string>& plan, std::optional<std::string> out,
                std::optional<std::uint64_t> seed) {
  PipelineConfig cfg = config_with(config, out, seed);
  std::vector<RuleKind> kinds;
  for (const auto& k : plan) kinds.push_back(parse_kind(k));
  std::ostringstream log;
  std::vector<AblationRow> rows;
  {
    py::gil_scoped_release release;
    rows = run_ablation(cfg, kinds, log);
  }
  py::list out_rows;
  for (const auto& r : rows) {
    out_rows.append(py::dict(py::arg("step") = r.step, py::arg("kinds") = r.kinds, py::arg("model") = r.row.model,
                             py::arg("f1") = r.row.score.f1, py::arg("precision") = r.row.score.precision,
                             py::arg("recall") = r.row.score.recall));
  }
  return out_rows;
}

Sentence make_sentence(const std::vector<std::string>& words, const std::vector<std::string>& pos) {
  if (!pos.empty() && pos.size() != words.size()) throw UsageError("pos must be empty or as long as words");
  Sentence s;
  for (std::size_t i = 0; i < words.size(); ++i)
    s.tokens.push_back({words[i], pos.empty() ? "NN" : pos[i], std::nullopt, std::nullopt});
  return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Rule propagation pipeline for weakly supervised entity tagging";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_RuntimeError);

  py::class_<Span>(m, "Span")
      .def_readonly("start", &Span::start)
      .def_readonly("end", &Span::end)
      .def_readonly("label", &Span::label)
      .def("__repr__", [](const Span& s) {
        return "Span(" + std::to_string(s.start) + ", " + std::to_string(s.end) + ", '" + s.label + "')";
      });

  py::class_<Corpus>(m, "Corpus")
      .def_property_readonly("num_documents", &Corpus::num_documents)
      .def_property_readonly("num_sentences", &Corpus::num_sentences)
      .def_property_readonly("token_count", &Corpus::token_count)
      .def("sentence_words",
           [](const Corpus& c, int doc, int sent) {
             std::vector<std::string> words;
             for (const auto& t : c.sentence(doc, sent).tokens) words.push_back(t.text);
             return words;
           })
      .def("to_jsonl", &to_jsonl)
      .def("to_conll", &to_conll)
      .def(py::self == py::self);

  m.def(
      "load_corpus",
      [](const std::string& path, const std::string& format) {
        return load_corpus(path, format == "auto" ? guess_corpus_format(path) : parse_corpus_format(format));
      },
      py::arg("path"), py::arg("format") = "auto");
  m.def("parse_jsonl", [](const std::string& text) { return parse_jsonl(text); });
  m.def("parse_conll", [](const std::string& text) { return parse_conll(text); });
  m.def("spans_from_bio", &spans_from_bio);

  m.def("span_f1", [](const std::vector<std::vector<std::string>>& pred, const Corpus& gold) {
    SpanScore s = span_f1(pred, gold);
    return py::dict(py::arg("precision") = s.precision, py::arg("recall") = s.recall, py::arg("f1") = s.f1,
                    py::arg("tp") = s.tp, py::arg("fp") = s.fp, py::arg("fn") = s.fn);
  });

  m.def("load_seed_rules", [](const std::string& path) {
    const RuleSet rules = load_seed_rules(path);
    py::list out;
    for (const Rule& r : rules.rules()) {
      out.append(py::make_tuple(std::string(kind_name(r.kind)), r.key, r.label,
                                r.polarity == Polarity::kPositive ? "pos" : "neg"));
    }
    return out;
  });

  m.def("load_config", [](const std::string& path) {
    PipelineConfig cfg = load_pipeline_config(path);
    return py::module_::import("json").attr("loads")(cfg.to_json().dump());
  });
  m.def("config_hash", [](const std::string& path) { return config_hash(load_pipeline_config(path)); });
  m.def("stages", [] {
    std::vector<std::string> out;
    for (Stage s : kPipelineStages) out.emplace_back(stage_name(s));
    return out;
  });
  m.def("run_stage", &run, py::arg("config"), py::arg("stage") = "all", py::arg("out") = py::none(),
        py::arg("seed") = py::none(), "Run one pipeline stage (or 'all'); returns the progress log.");
  m.def("run_ablation", &ablate, py::arg("config"), py::arg("plan"), py::arg("out") = py::none(),
        py::arg("seed") = py::none());

  m.def(
      "write_synthetic",
      [](const std::string& out, std::uint64_t seed, int train, int dev, int test) {
        SynthConfig sc;
        sc.train_sentences = train;
        sc.dev_sentences = dev;
        sc.test_sentences = test;
        write_synthetic(generate_synthetic(sc, seed), out, seed);
      },
      py::arg("out"), py::arg("seed") = 13, py::arg("train") = 2000, py::arg("dev") = 200, py::arg("test") = 500);

  m.def("label_model_summary", [](const std::string& path) {
    GenerativeModel g = load_generative_model(path);
    return py::dict(py::arg("tags") = g.tags.tags(), py::arg("start") = g.start,
                    py::arg("transition") = g.transition, py::arg("accuracy") = g.accuracy,
                    py::arg("propensity") = g.propensity, py::arg("link_accuracy") = g.link_accuracy);
  });

  py::class_<CrfModel>(m, "Tagger")
      .def(py::init(&load_crf_model), py::arg("path"))
      .def_property_readonly("labels", [](const CrfModel& c) { return c.tags.labels(); })
      .def_property_readonly("num_features", [](const CrfModel& c) { return c.vocab.size(); })
      .def(
          "tag",
          [](const CrfModel& c, const std::vector<std::string>& words, const std::vector<std::string>& pos) {
            return predict_crf(c, make_sentence(words, pos));
          },
          py::arg("words"), py::arg("pos") = std::vector<std::string>{});
}
