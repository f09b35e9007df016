#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include "relhal/calibrate.hpp"
#include "relhal/cli.hpp"
#include "relhal/error.hpp"
#include "relhal/lens.hpp"
#include "relhal/metrics.hpp"
#include "relhal/questions.hpp"
#include "relhal/scene_graph.hpp"
#include "relhal/trace.hpp"

namespace py = pybind11;
using namespace relhal;

namespace {

EntropyBase base_of(const std::string& name) {
  auto b = parse_entropy_base(name);
  if (!b) throw ValidationError("entropy base must be 2 or e, got " + name);
  return *b;
}

template <typename T, typename F>
T read_path(const std::string& path, F&& f) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  return f(in);
}

DecodeConfig make_config(double gamma, double alpha, std::size_t lambda, const std::string& mode,
                         const std::string& base, std::optional<std::size_t> mid_layer) {
  DecodeConfig c;
  c.gamma = gamma;
  c.alpha = alpha;
  c.lambda = lambda;
  c.entropy_base = base_of(base);
  auto m = parse_decode_mode(mode);
  if (!m) throw ValidationError("unknown mode " + mode);
  c.mode = *m;
  c.mid_layer = mid_layer;
  c.validate();
  return c;
}

py::dict outcome_dict(const DecodeOutcome& o) {
  py::dict d;
  d["sample_id"] = o.sample_id;
  d["step"] = o.step;
  d["mode"] = std::string(to_string(o.mode));
  d["candidates"] = o.candidates;
  d["chosen_token"] = o.chosen_token;
  d["chosen_index"] = o.chosen_index;
  d["detected"] = o.detected;
  d["calibrated"] = o.calibrated;
  d["entropy"] = o.entropy.value;
  d["final_layer"] = o.final_layer;
  d["mid_layer"] = o.mid_layer;
  d["final_dist"] = o.final_dist;
  d["mid_dist"] = o.mid_dist;
  d["scores"] = o.scores;
  return d;
}

// Corpus -> questions.jsonl text and manifest JSON, same pipeline as `relhal build`.
std::pair<std::string, std::string> build_dataset(const std::string& corpus, const std::string& rules,
                                                  const std::string& lexicon, const std::string& synonyms,
                                                  std::uint64_t seed) {
  FilterRuleSet rule_set;
  if (!rules.empty()) rule_set = read_path<FilterRuleSet>(rules, [](std::istream& in) { return parse_filter_rules(in); });
  CategoryLexicon lex;
  if (!lexicon.empty()) lex = read_path<CategoryLexicon>(lexicon, [](std::istream& in) { return CategoryLexicon::parse(in); });
  CompileConfig config;
  if (!synonyms.empty())
    config.synonyms = read_path<SynonymGroups>(synonyms, [](std::istream& in) { return SynonymGroups::parse(in); });
  auto parsed = read_path<CorpusParseResult>(corpus, [](std::istream& in) { return parse_scene_graphs(in); });
  std::vector<SemanticTriplet> triplets;
  for (const auto& g : parsed.graphs) {
    auto t = extract_triplets(g);
    triplets.insert(triplets.end(), t.begin(), t.end());
  }
  triplets = filter_triplets(triplets, rule_set, seed);
  categorize_triplets(triplets, lex);
  const auto ds = compile_dataset(triplets, config, seed);
  std::ostringstream items;
  write_question_set(items, ds.items);
  return {items.str(), manifest_to_json(ds.manifest)};
}

std::string evaluate(const std::string& questions, const std::string& responses, const std::string& synonyms) {
  auto items = read_path<std::vector<QuestionItem>>(questions, [](std::istream& in) { return read_question_set(in); });
  auto resp = read_path<std::vector<ResponseRecord>>(responses, [](std::istream& in) { return read_responses(in); });
  SynonymGroups syn;
  if (!synonyms.empty()) syn = read_path<SynonymGroups>(synonyms, [](std::istream& in) { return SynonymGroups::parse(in); });
  const auto scored = score_responses(items, resp, nullptr, syn);
  return report_to_json(build_report(scored, default_bucket_edges()));
}

}  // namespace

PYBIND11_MODULE(_relhal, m) {
  m.doc() = "Entropy-gated intermediate-layer calibration toolkit";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<TransportError>(m, "TransportError", PyExc_RuntimeError);

  m.def("entropy", [](const std::vector<double>& dist, const std::string& base) {
        return entropy(dist, base_of(base)).value;
      },
      py::arg("dist"), py::arg("base") = "2");
  m.def("max_entropy", [](std::size_t n, const std::string& base) { return max_entropy(n, base_of(base)); },
        py::arg("n"), py::arg("base") = "2");
  m.def("detect", [](double value, double gamma) { return detect(EntropyReading{value, 0, EntropyBase::Two}, gamma); },
        py::arg("entropy"), py::arg("gamma"));
  m.def("calibrate_scores",
        [](const std::vector<double>& f, const std::vector<double>& mid, double alpha, double floor) {
          return calibrate_scores(f, mid, alpha, floor);
        },
        py::arg("final_dist"), py::arg("mid_dist"), py::arg("alpha") = 0.1, py::arg("floor") = kDefaultProbabilityFloor);
  m.def("softmax", [](const std::vector<double>& logits) { return softmax(logits); });

  m.def("decode_step",
        [](const std::vector<std::vector<double>>& layer_logits, const std::vector<std::string>& candidates,
           double gamma, double alpha, std::size_t lambda, const std::string& mode, const std::string& base,
           std::optional<std::size_t> mid_layer) {
          if (layer_logits.empty()) throw ValidationError("need logits for layers 0..n");
          TraceMeta meta;
          meta.n_layers = layer_logits.size() - 1;
          meta.candidates = CandidateSet(candidates);
          std::vector<LayerTrace> recs;
          for (std::size_t l = 0; l < layer_logits.size(); ++l) recs.push_back({"s", 0, l, layer_logits[l]});
          return outcome_dict(decode_step(recs, meta, make_config(gamma, alpha, lambda, mode, base, mid_layer)));
        },
        py::arg("layer_logits"), py::arg("candidates"), py::arg("gamma") = 0.9, py::arg("alpha") = 0.1,
        py::arg("lam") = 2, py::arg("mode") = "detect_calibrate", py::arg("base") = "2",
        py::arg("mid_layer") = py::none());

  m.def("decode_trace",
        [](const std::string& path, double gamma, double alpha, std::size_t lambda, const std::string& mode,
           const std::string& base, std::optional<std::size_t> mid_layer, std::size_t jobs) {
          auto trace = read_path<TraceFile>(path, [](std::istream& in) { return read_trace(in); });
          const auto outs = decode_sequence(trace.records, trace.meta,
                                            make_config(gamma, alpha, lambda, mode, base, mid_layer), jobs);
          py::list result;
          for (const auto& o : outs) result.append(outcome_dict(o));
          return result;
        },
        py::arg("path"), py::arg("gamma") = 0.9, py::arg("alpha") = 0.1, py::arg("lam") = 2,
        py::arg("mode") = "detect_calibrate", py::arg("base") = "2", py::arg("mid_layer") = py::none(),
        py::arg("jobs") = 1);

  m.def("build_dataset", &build_dataset, py::arg("corpus"), py::arg("rules") = "", py::arg("lexicon") = "",
        py::arg("synonyms") = "", py::arg("seed") = 0);
  m.def("evaluate", &evaluate, py::arg("questions"), py::arg("responses"), py::arg("synonyms") = "");
  m.def("halr", [](const std::vector<bool>& correct) {
    std::vector<MatchVerdict> v(correct.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i].correct = correct[i];
    return halr(v);
  });
  m.def("r_score", [](double yn, double mcq, double vqa) { return r_score({yn, mcq, vqa}); });

  py::class_<ToyModel>(m, "ToyModel")
      .def(py::init([](const std::string& path) { return ToyModel(cli::load_toy_model_config(path)); }),
           py::arg("config_path"))
      .def_property_readonly("n_layers", [](const ToyModel& t) { return t.config().n_layers; })
      .def("encode", [](const ToyModel& t, const std::string& text) { return t.encode(text); })
      .def("layer_distributions",
           [](const ToyModel& t, const std::string& text, const std::vector<std::string>& candidates) {
             const auto ids = t.encode(text);
             const auto taps = t.forward_with_taps(ids);
             const CandidateSet c(candidates);
             std::vector<Vector> out;
             for (std::size_t l = 0; l <= t.config().n_layers; ++l)
               out.push_back(lens_distribution(t, taps.last_position(l), c));
             return out;
           },
           py::arg("text"), py::arg("candidates"))
      .def("next_token_distribution",
           [](const ToyModel& t, const std::string& text, const std::vector<std::string>& candidates) {
             return next_token_distribution(t, t.encode(text), CandidateSet(candidates));
           },
           py::arg("text"), py::arg("candidates"));

  m.def("run_cli",
        [](const std::vector<std::string>& args) {
          std::ostringstream out, err;
          int code;
          {
            py::gil_scoped_release release;
            code = cli::run(args, out, err);
          }
          return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"));
}
