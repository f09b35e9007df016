#include "relhal/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "relhal/calibrate.hpp"
#include "relhal/categorize.hpp"
#include "relhal/clients.hpp"
#include "relhal/error.hpp"
#include "relhal/metrics.hpp"
#include "relhal/questions.hpp"
#include "relhal/scene_graph.hpp"
#include "relhal/synthetic.hpp"
#include "relhal/text.hpp"
#include "relhal/trace.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace relhal::cli {

namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  return in;
}

// Thrown for errors that should carry a file name in front of the message.
class FileError : public std::runtime_error {
 public:
  FileError(const std::string& path, const std::exception& e, int code)
      : std::runtime_error(path + ": " + e.what()), code_(code) {}
  int code() const noexcept { return code_; }

 private:
  int code_;
};

template <typename F>
auto with_file(const std::string& path, F&& read) {
  std::ifstream in = open_in(path);
  try {
    return read(in);
  } catch (const ParseError& e) {
    throw FileError(path, e, kValidation);
  } catch (const ValidationError& e) {
    throw FileError(path, e, kValidation);
  }
}

class OutFile {
 public:
  explicit OutFile(const fs::path& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
  }
  std::ostream& stream() { return out_; }
  void close() {
    out_.close();
    if (!out_) throw std::runtime_error("failed writing " + path_.string());
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

template <typename F>
void write_file(const fs::path& path, F&& write) {
  OutFile f(path);
  write(f.stream());
  f.close();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir + ": " + ec.message());
}

std::string join_ids(const std::vector<std::string>& ids, std::size_t limit = 20) {
  std::string s;
  for (std::size_t i = 0; i < ids.size() && i < limit; ++i) s += (i ? ", " : "") + ids[i];
  if (ids.size() > limit) s += ", ... (" + std::to_string(ids.size() - limit) + " more)";
  return s;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

SynonymGroups load_synonyms(const std::string& path) {
  if (path.empty()) return {};
  return with_file(path, [](std::istream& in) { return SynonymGroups::parse(in); });
}

// ---- shared option groups -------------------------------------------------

struct DecodeFlags {
  double gamma = 0.9;
  double alpha = 0.1;
  std::size_t lambda = 2;
  std::string entropy_base = "2";
  std::string mode = "detect_calibrate";
  std::string score = "logratio";
  std::string restrict = "subset";
  std::optional<std::size_t> mid_layer;

  void add_to(CLI::App& app) {
    app.add_option("--gamma", gamma, "Entropy threshold; the gate fires at entropy >= gamma")
        ->envname("RELHAL_GAMMA")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    app.add_option("--alpha", alpha, "Calibration strength (> 0)")
        ->envname("RELHAL_ALPHA")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--lambda", lambda, "Contrast layer offset: layer n - lambda")
        ->envname("RELHAL_LAMBDA")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--entropy-base", entropy_base, "Entropy logarithm base")
        ->envname("RELHAL_ENTROPY_BASE")
        ->check(CLI::IsMember({"2", "e"}))
        ->capture_default_str();
    app.add_option("--mode", mode, "Decoding mode")
        ->envname("RELHAL_MODE")
        ->check(CLI::IsMember({"baseline", "detect_calibrate", "always_calibrate"}))
        ->capture_default_str();
    app.add_option("--score", score, "Calibration score; weighted_logratio is an extension")
        ->envname("RELHAL_SCORE")
        ->check(CLI::IsMember({"logratio", "weighted_logratio"}))
        ->capture_default_str();
    app.add_option("--restrict", restrict, "Candidate restriction for toy-model traces")
        ->envname("RELHAL_RESTRICT")
        ->check(CLI::IsMember({"subset", "renormalize"}))
        ->capture_default_str();
    app.add_option("--mid-layer", mid_layer, "Use this contrast layer instead of n - lambda")
        ->envname("RELHAL_MID_LAYER");
  }

  DecodeConfig config() const {
    DecodeConfig c;
    c.gamma = gamma;
    c.alpha = alpha;
    c.lambda = lambda;
    c.entropy_base = *parse_entropy_base(entropy_base);
    c.mode = *parse_decode_mode(mode);
    c.score = *parse_calibration_score(score);
    c.mid_layer = mid_layer;
    c.validate();
    return c;
  }

  RestrictMode restrict_mode() const { return *parse_restrict_mode(restrict); }
};

void add_jobs(CLI::App& app, std::size_t& jobs) {
  app.add_option("--jobs", jobs, "Worker threads")
      ->envname("RELHAL_JOBS")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

void add_seed(CLI::App& app, std::uint64_t& seed) {
  app.add_option("--seed", seed, "Random seed")->envname("RELHAL_SEED")->capture_default_str();
}

std::vector<double> parse_edges(const std::string& spec) {
  if (spec.empty()) return default_bucket_edges();
  std::vector<double> edges;
  for (const std::string& part : text::split(spec, ',')) {
    try {
      std::size_t used = 0;
      const std::string t(text::trim(part));
      edges.push_back(std::stod(t, &used));
      if (used != t.size()) throw std::invalid_argument(t);
    } catch (const std::exception&) {
      throw ValidationError("bad bucket edge '" + part + "'");
    }
  }
  return edges;
}

// ---- build ------------------------------------------------------------------

struct BuildArgs {
  std::string corpus, rules, lexicon, synonyms, templates, out_dir = ".";
  std::uint64_t seed = 0;
  bool no_yn = false, no_mcq = false, no_vqa = false;
};

void print_manifest(std::ostream& out, const DatasetManifest& m) {
  out << std::left << std::setw(12) << "category" << std::right << std::setw(8) << "Y/N" << std::setw(8)
      << "MCQ" << std::setw(8) << "VQA" << std::setw(10) << "relations" << '\n';
  for (RelationCategory c : {RelationCategory::Perceptive, RelationCategory::Cognitive}) {
    auto count = [&](TaskType t) {
      auto it = m.counts.find({c, t});
      return it == m.counts.end() ? std::size_t{0} : it->second;
    };
    auto types = m.relation_types.find(c);
    out << std::left << std::setw(12) << to_string(c) << std::right << std::setw(8) << count(TaskType::YN)
        << std::setw(8) << count(TaskType::MCQ) << std::setw(8) << count(TaskType::VQA) << std::setw(10)
        << (types == m.relation_types.end() ? 0 : types->second) << '\n';
  }
  out << "images " << m.image_count << ", questions " << m.total << ", Y/N positive:negative " << m.yn_ratio()
      << '\n';
  for (const auto& [reason, n] : m.skip_reasons) out << "skipped " << n << ": " << reason << '\n';
}

int cmd_build(const BuildArgs& a, std::ostream& out, std::ostream& err) {
  FilterRuleSet rules;
  if (!a.rules.empty()) rules = with_file(a.rules, [](std::istream& in) { return parse_filter_rules(in); });
  CategoryLexicon lexicon;
  if (!a.lexicon.empty()) lexicon = with_file(a.lexicon, [](std::istream& in) { return CategoryLexicon::parse(in); });
  CompileConfig config;
  config.synonyms = load_synonyms(a.synonyms);
  if (!a.templates.empty()) {
    config.templates = with_file(a.templates, [](std::istream& in) { return PromptTemplates::parse(in); });
  }
  config.emit_yn = !a.no_yn;
  config.emit_mcq = !a.no_mcq;
  config.emit_vqa = !a.no_vqa;

  const CorpusParseResult corpus = with_file(a.corpus, [](std::istream& in) { return parse_scene_graphs(in); });
  if (corpus.graphs.empty()) err << "warning: " << a.corpus << " has no image records\n";
  if (corpus.dangling_relationships) {
    err << "warning: dropped " << corpus.dangling_relationships << " relationship(s) with unknown object ids\n";
  }

  std::vector<SemanticTriplet> triplets;
  for (const SceneGraph& g : corpus.graphs) {
    auto t = extract_triplets(g);
    triplets.insert(triplets.end(), t.begin(), t.end());
  }
  const std::size_t extracted = triplets.size();
  triplets = filter_triplets(triplets, rules, a.seed);
  categorize_triplets(triplets, lexicon);

  std::size_t fallback = 0;
  std::set<std::string> seen;
  for (const SemanticTriplet& t : triplets) {
    if (seen.insert(t.relation).second && !lexicon.find(t.relation)) ++fallback;
  }

  const CompiledDataset dataset = compile_dataset(triplets, config, a.seed);
  ensure_dir(a.out_dir);
  write_file(fs::path(a.out_dir) / "questions.jsonl",
             [&](std::ostream& os) { write_question_set(os, dataset.items); });
  write_file(fs::path(a.out_dir) / "manifest.json",
             [&](std::ostream& os) { os << manifest_to_json(dataset.manifest) << '\n'; });

  out << "triplets: " << extracted << " extracted, " << triplets.size() << " after filtering";
  if (fallback) out << ", " << fallback << " relation type(s) categorized by fallback";
  out << '\n';
  print_manifest(out, dataset.manifest);
  return kOk;
}

// ---- decode -----------------------------------------------------------------

struct DecodeArgs {
  std::string questions, trace, model, out = "outcomes.jsonl", trace_out, task = "yn";
  DecodeFlags flags;
  std::size_t jobs = 1;
};

int cmd_decode(const DecodeArgs& a, std::ostream& out, std::ostream& err) {
  const DecodeConfig config = a.flags.config();
  const auto questions = with_file(a.questions, [](std::istream& in) { return read_question_set(in); });

  TraceFile trace;
  if (!a.trace.empty()) {
    trace = with_file(a.trace, [](std::istream& in) { return read_trace(in); });
    if (trace.truncated) err << "warning: trace was truncated: " << trace.truncation_reason << '\n';
    std::set<std::string> known;
    for (const QuestionItem& q : questions) known.insert(q.question_id);
    std::vector<std::string> orphans;
    std::set<std::string> traced;
    for (const LayerTrace& r : trace.records) {
      if (traced.insert(r.sample_id).second && !known.count(r.sample_id)) orphans.push_back(r.sample_id);
    }
    if (!orphans.empty()) {
      err << "error: " << orphans.size() << " trace sample(s) without a question: " << join_ids(orphans) << '\n';
      return kValidation;
    }
    const std::size_t untraced = known.size() - traced.size();
    if (untraced) err << "note: " << untraced << " question(s) have no trace records\n";
  } else {
    const ToyModel model(load_toy_model_config(a.model));
    const TaskType task = *parse_task(a.task);
    if (task == TaskType::VQA) throw ValidationError("toy-model decoding supports yn and mcq only");
    trace.meta.model = "toy:" + a.model;
    trace.meta.n_layers = model.config().n_layers;
    trace.meta.candidates = task == TaskType::YN ? CandidateSet({"yes", "no"})
                                                 : CandidateSet({"A", "B", "C", "D"});
    std::size_t skipped = 0;
    for (const QuestionItem& q : questions) {
      if (q.task != task) {
        ++skipped;
        continue;
      }
      auto ids = model.encode(q.prompt);
      auto records = trace_from_model(model, ids, trace.meta.candidates, q.question_id, 0, a.flags.restrict_mode());
      trace.records.insert(trace.records.end(), records.begin(), records.end());
    }
    if (skipped) err << "note: skipped " << skipped << " question(s) of other tasks\n";
    if (!a.trace_out.empty()) {
      write_file(a.trace_out, [&](std::ostream& os) { write_trace(os, trace.meta, trace.records); });
    }
  }

  const auto outcomes = decode_sequence(trace.records, trace.meta, config, a.jobs);
  write_file(a.out, [&](std::ostream& os) { write_outcomes(os, outcomes); });

  std::set<std::string> samples;
  std::size_t detected = 0, calibrated = 0, changed = 0;
  for (const DecodeOutcome& o : outcomes) {
    samples.insert(o.sample_id);
    detected += o.detected;
    calibrated += o.calibrated;
    if (o.chosen_index != argmax_index(o.final_dist)) ++changed;
  }
  out << "mode " << to_string(config.mode) << ": " << samples.size() << " sample(s), " << outcomes.size()
      << " step(s), detected " << detected << ", calibrated " << calibrated << ", changed " << changed
      << " (contrast layer " << config.contrast_layer(trace.meta.n_layers) << " of " << trace.meta.n_layers
      << ")\n";
  return kOk;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string questions, responses, outcomes, synonyms, nli_endpoint, out_dir = ".", edges;
  bool no_vqa_fallback = false;
  std::size_t jobs = 4;
};

std::vector<ResponseRecord> responses_from_outcomes(const std::vector<DecodeOutcome>& outcomes) {
  std::vector<ResponseRecord> responses;
  for (const DecodeOutcome& o : outcomes) {
    if (o.step != 0) continue;
    responses.push_back({o.sample_id, o.chosen_token, o.final_dist, o.entropy.value});
  }
  return responses;
}

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const auto edges = parse_edges(a.edges);
  const auto questions = with_file(a.questions, [](std::istream& in) { return read_question_set(in); });
  std::vector<ResponseRecord> responses;
  if (!a.responses.empty()) {
    responses = with_file(a.responses, [](std::istream& in) { return read_responses(in); });
  } else {
    responses = responses_from_outcomes(with_file(a.outcomes, [](std::istream& in) { return read_outcomes(in); }));
  }
  const SynonymGroups synonyms = load_synonyms(a.synonyms);

  std::unique_ptr<EntailmentClient> nli;
  if (!a.nli_endpoint.empty()) nli = std::make_unique<HttpEntailmentClient>(a.nli_endpoint);

  std::vector<EvaluatedItem> evaluated;
  try {
    evaluated = score_responses(questions, responses, nli.get(), synonyms, a.jobs);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  }
  if (!nli && a.no_vqa_fallback) {
    for (EvaluatedItem& e : evaluated) {
      if (e.item->task == TaskType::VQA) e.verdict.scored = false;
    }
  }

  const EvalReport report = build_report(evaluated, edges);
  ensure_dir(a.out_dir);
  const fs::path dir(a.out_dir);
  write_file(dir / "report.json", [&](std::ostream& os) { os << report_to_json(report) << '\n'; });
  write_file(dir / "rates.csv", [&](std::ostream& os) { write_rates_csv(os, report); });
  for (const ConfusionMatrix& m : report.confusion) {
    const std::string name = "confusion_" + text::to_lower(to_string(m.task)) + ".csv";
    write_file(dir / name, [&](std::ostream& os) { write_confusion_csv(os, m); });
  }
  if (!report.histogram.empty()) {
    write_file(dir / "histogram.csv", [&](std::ostream& os) { write_histogram_csv(os, report.histogram); });
  }

  out << "scored " << report.scored << " of " << evaluated.size() << " response(s)\n";
  for (const auto& [key, cell] : report.cells) {
    out << "  Halr " << to_string(key.first) << '/' << to_string(key.second) << ": " << fixed(cell.halr) << " ("
        << cell.wrong << '/' << cell.total << ")\n";
  }
  for (const auto& [task, cell] : report.tasks) {
    out << "  Halr " << to_string(task) << " pooled (sample-weighted): " << fixed(cell.halr) << '\n';
  }
  if (report.r_score) {
    out << "  R_score: " << fixed(*report.r_score) << '\n';
  } else {
    out << "  R_score: n/a (needs scored Y/N, MCQ and VQA items)\n";
  }
  if (!report.unscored_ids.empty()) {
    err << "partial report: " << report.unscored_ids.size()
        << " item(s) unscored: " << join_ids(report.unscored_ids) << '\n';
    return kPartial;
  }
  return kOk;
}

// ---- analyze ----------------------------------------------------------------

struct AnalyzeArgs {
  std::string questions, outcomes, trace, synonyms, out_dir = ".", edges;
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out, std::ostream& err) {
  const auto edges = parse_edges(a.edges);
  const auto questions = with_file(a.questions, [](std::istream& in) { return read_question_set(in); });
  auto outcomes = with_file(a.outcomes, [](std::istream& in) { return read_outcomes(in); });
  const TraceFile trace = with_file(a.trace, [](std::istream& in) { return read_trace(in); });
  const SynonymGroups synonyms = load_synonyms(a.synonyms);

  std::map<std::string, const QuestionItem*> by_id;
  for (const QuestionItem& q : questions) by_id[q.question_id] = &q;

  std::erase_if(outcomes, [](const DecodeOutcome& o) { return o.step != 0; });
  std::vector<std::string> missing;
  std::map<std::string, bool> hallucinated;
  std::vector<EntropySample> entropies;
  std::vector<ProbabilitySample> probabilities;
  for (const DecodeOutcome& o : outcomes) {
    auto q = by_id.find(o.sample_id);
    if (q == by_id.end()) {
      missing.push_back(o.sample_id);
      continue;
    }
    const MatchVerdict v = match_answer(*q->second, o.chosen_token, nullptr, synonyms);
    hallucinated[o.sample_id] = !v.correct;
    entropies.push_back({o.entropy.value, !v.correct});
    probabilities.push_back({o.final_dist, !v.correct});
  }
  if (!missing.empty()) {
    err << "error: " << missing.size() << " outcome(s) without a question: " << join_ids(missing) << '\n';
    return kValidation;
  }

  const auto buckets = entropy_ratio_histogram(entropies, edges);
  const LayerCurves curves = layer_curves(layer_samples_from_trace(trace, outcomes, hallucinated));

  ensure_dir(a.out_dir);
  const fs::path dir(a.out_dir);
  write_file(dir / "histogram.csv", [&](std::ostream& os) { write_histogram_csv(os, buckets); });
  write_file(dir / "layer_curves.csv", [&](std::ostream& os) { write_layer_curves_csv(os, curves); });

  out << "samples " << outcomes.size() << ": hallucinated " << curves.hallucinated_count << ", correct "
      << curves.correct_count << '\n';
  try {
    const double mean = mean_hallucination_probability(probabilities);
    write_file(dir / "mean_probability.csv", [&](std::ostream& os) {
      os << "hallucinated,mean_max_probability\n" << curves.hallucinated_count << ',' << json(mean).dump() << '\n';
    });
    out << "mean final probability over hallucinated samples: " << fixed(mean) << '\n';
  } catch (const ValidationError& e) {
    err << "note: " << e.what() << "; mean_probability.csv not written\n";
  }
  return kOk;
}

// ---- categorize -------------------------------------------------------------

struct CategorizeArgs {
  std::string relations, prompt, lexicon, endpoint, llm_model = "default", out;
  bool offline = false;
};

int cmd_categorize(const CategorizeArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<std::string> relations;
  with_file(a.relations, [&](std::istream& in) {
    for (const auto& line : text::read_config_lines(in)) relations.push_back(text::normalize(line.content));
    return 0;
  });
  CategoryLexicon lexicon;
  if (!a.lexicon.empty()) lexicon = with_file(a.lexicon, [](std::istream& in) { return CategoryLexicon::parse(in); });
  const CategorizePrompt prompt = with_file(a.prompt, [](std::istream& in) { return CategorizePrompt::load(in); });

  std::unique_ptr<CompletionClient> client;
  if (!a.offline) {
    if (a.endpoint.empty()) throw ValidationError("--endpoint is required unless --offline is given");
    client = std::make_unique<HttpCompletionClient>(a.endpoint, a.llm_model);
  } else {
    err << "note: offline mode, categories come from the lexicon and the fallback rule\n";
  }
  const auto assignments = categorize_relations(relations, client.get(), prompt, lexicon);

  auto emit = [&](std::ostream& os) {
    os << "relation\tcategory\tsource\tnote\n";
    for (const CategoryAssignment& c : assignments) {
      os << c.relation << '\t' << (c.category ? std::string(to_string(*c.category)) : "unresolved") << '\t'
         << to_string(c.source) << '\t' << c.note << '\n';
    }
  };
  if (a.out.empty()) {
    emit(out);
  } else {
    write_file(a.out, emit);
  }
  std::vector<std::string> unresolved;
  for (const CategoryAssignment& c : assignments) {
    if (!c.category) unresolved.push_back(c.relation);
  }
  if (!unresolved.empty()) {
    err << unresolved.size() << " relation(s) unresolved: " << join_ids(unresolved) << '\n';
    return kPartial;
  }
  return kOk;
}

// ---- synth ------------------------------------------------------------------

struct SynthArgs {
  std::string kind = "planted", signal = "truth_gains_late", out_dir = ".";
  std::size_t planted = 100, confident = 900, n_layers = 40, lambda = 2, per_group = 50;
  std::uint64_t seed = 1;
};

int cmd_synth(const SynthArgs& a, std::ostream& out, std::ostream&) {
  ensure_dir(a.out_dir);
  const fs::path dir(a.out_dir);
  if (a.kind == "planted") {
    synthetic::PlantedSuiteConfig c;
    c.planted = a.planted;
    c.confident = a.confident;
    c.n_layers = a.n_layers;
    c.lambda = a.lambda;
    c.seed = a.seed;
    c.signal = a.signal == "favors_truth" ? synthetic::MidSignal::FavorsTruth : synthetic::MidSignal::TruthGainsLate;
    const auto suite = synthetic::make_planted_suite(c);
    write_file(dir / "trace.jsonl", [&](std::ostream& os) { write_trace(os, suite.meta, suite.records); });
    write_file(dir / "questions.jsonl", [&](std::ostream& os) { write_question_set(os, suite.questions); });
    write_file(dir / "planted.txt", [&](std::ostream& os) {
      for (std::size_t i = 0; i < suite.sample_ids.size(); ++i) {
        if (suite.planted[i]) os << suite.sample_ids[i] << '\n';
      }
    });
    out << "planted suite (" << a.signal << "): " << suite.planted_count() << " planted, "
        << suite.sample_ids.size() - suite.planted_count() << " confident, " << a.n_layers << " layers\n";
  } else {
    synthetic::LayerRampConfig c;
    c.per_group = a.per_group;
    c.n_layers = a.n_layers;
    c.seed = a.seed;
    const auto suite = synthetic::make_layer_ramp_suite(c);
    std::vector<QuestionItem> questions;
    for (const DecodeOutcome& o : suite.outcomes) {
      QuestionItem q;
      q.question_id = o.sample_id;
      q.image_id = "synthetic";
      q.source_triplet = {"cup", "on", "table", "synthetic", RelationCategory::Perceptive};
      q.asked_relation = "on";
      q.prompt = "Is the cup on the table in the photo?";
      // Every sample answers "yes"; hallucinated ones are labelled "no".
      q.label = suite.hallucinated.at(o.sample_id) ? "no" : "yes";
      if (q.label == "no") {
        q.polarity = Polarity::Negative;
        q.asked_relation = "under";
        q.prompt = "Is the cup under the table in the photo?";
      }
      questions.push_back(std::move(q));
    }
    write_file(dir / "trace.jsonl", [&](std::ostream& os) { write_trace(os, suite.meta, suite.records); });
    write_file(dir / "questions.jsonl", [&](std::ostream& os) { write_question_set(os, questions); });
    out << "layer-ramp suite: " << suite.outcomes.size() << " samples, " << a.n_layers << " layers\n";
  }
  return kOk;
}

}  // namespace

ToyModelConfig load_toy_model_config(const std::string& path) {
  return with_file(path, [&](std::istream& in) {
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ParseError(e.what(), 1, e.byte);
    }
    ToyModelConfig c;
    try {
      c.vocab = j.at("vocab").get<std::vector<std::string>>();
      c.d_model = j.value("d_model", c.d_model);
      c.n_layers = j.value("n_layers", c.n_layers);
      c.n_heads = j.value("n_heads", c.n_heads);
      c.max_seq = j.value("max_seq", c.max_seq);
      c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
      throw ValidationError(std::string("toy model config: ") + e.what());
    }
    c.validate();
    return c;
  });
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Relation-hallucination toolkit: question sets, metrics and entropy-gated calibration", "relhal"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "relhal 0.1.0");

  BuildArgs build;
  auto* b = app.add_subcommand("build", "Compile a question set and manifest from a scene-graph corpus");
  b->add_option("--corpus", build.corpus, "Line-delimited scene-graph corpus")->required()->check(CLI::ExistingFile);
  b->add_option("--rules", build.rules, "Filter rules")->check(CLI::ExistingFile);
  b->add_option("--lexicon", build.lexicon, "Relation category lexicon")->check(CLI::ExistingFile);
  b->add_option("--synonyms", build.synonyms, "Synonym groups, one comma-separated group per line")
      ->check(CLI::ExistingFile);
  b->add_option("--templates", build.templates, "Prompt template overrides")->check(CLI::ExistingFile);
  b->add_option("--out-dir", build.out_dir, "Output directory")->capture_default_str();
  b->add_flag("--no-yn", build.no_yn, "Skip Y/N items");
  b->add_flag("--no-mcq", build.no_mcq, "Skip MCQ items");
  b->add_flag("--no-vqa", build.no_vqa, "Skip VQA items");
  add_seed(*b, build.seed);

  DecodeArgs decode;
  auto* d = app.add_subcommand("decode", "Decode per-layer traces with baseline or entropy-gated calibration");
  d->add_option("--questions", decode.questions, "Question set")->required()->check(CLI::ExistingFile);
  auto* trace_opt = d->add_option("--trace", decode.trace, "Trace file")->check(CLI::ExistingFile);
  auto* model_opt = d->add_option("--model", decode.model, "Toy model config (JSON)")->check(CLI::ExistingFile);
  trace_opt->excludes(model_opt);
  d->add_option("--task", decode.task, "Task to decode with the toy model")
      ->check(CLI::IsMember({"yn", "mcq"}))
      ->capture_default_str();
  d->add_option("--trace-out", decode.trace_out, "Also write the toy-model trace here");
  d->add_option("--out", decode.out, "Outcomes file")->capture_default_str();
  decode.flags.add_to(*d);
  add_jobs(*d, decode.jobs);

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Score responses or decode outcomes and write the report");
  e->add_option("--questions", eval.questions, "Question set")->required()->check(CLI::ExistingFile);
  auto* resp_opt = e->add_option("--responses", eval.responses, "Responses file")->check(CLI::ExistingFile);
  auto* out_opt = e->add_option("--outcomes", eval.outcomes, "Outcomes file from decode")->check(CLI::ExistingFile);
  resp_opt->excludes(out_opt);
  e->add_option("--synonyms", eval.synonyms, "Synonym groups")->check(CLI::ExistingFile);
  e->add_option("--nli-endpoint", eval.nli_endpoint, "Entailment service URL")->envname("RELHAL_NLI_ENDPOINT");
  e->add_flag("--no-vqa-fallback", eval.no_vqa_fallback, "Leave VQA unscored when no entailment service is set");
  e->add_option("--bucket-edges", eval.edges, "Comma-separated entropy bucket edges")->envname("RELHAL_BUCKET_EDGES");
  e->add_option("--out-dir", eval.out_dir, "Output directory")->capture_default_str();
  add_jobs(*e, eval.jobs);

  AnalyzeArgs analyze;
  auto* an = app.add_subcommand("analyze", "Entropy histogram, layer curves and mean hallucination probability");
  an->add_option("--questions", analyze.questions, "Question set")->required()->check(CLI::ExistingFile);
  an->add_option("--outcomes", analyze.outcomes, "Outcomes file")->required()->check(CLI::ExistingFile);
  an->add_option("--trace", analyze.trace, "Trace file the outcomes came from")->required()->check(CLI::ExistingFile);
  an->add_option("--synonyms", analyze.synonyms, "Synonym groups")->check(CLI::ExistingFile);
  an->add_option("--bucket-edges", analyze.edges, "Comma-separated entropy bucket edges")
      ->envname("RELHAL_BUCKET_EDGES");
  an->add_option("--out-dir", analyze.out_dir, "Output directory")->capture_default_str();

  CategorizeArgs categorize;
  auto* c = app.add_subcommand("categorize", "Assign perception/cognition categories with an LLM endpoint");
  c->add_option("--relations", categorize.relations, "One relation per line")->required()->check(CLI::ExistingFile);
  c->add_option("--prompt", categorize.prompt, "Prompt template")->required()->check(CLI::ExistingFile);
  c->add_option("--lexicon", categorize.lexicon, "Lexicon for in-context examples and offline mode")
      ->check(CLI::ExistingFile);
  c->add_option("--endpoint", categorize.endpoint, "Chat-completions URL")->envname("RELHAL_LLM_ENDPOINT");
  c->add_option("--llm-model", categorize.llm_model, "Model name sent to the endpoint")
      ->envname("RELHAL_LLM_MODEL")
      ->capture_default_str();
  c->add_flag("--offline", categorize.offline, "Use the lexicon and fallback rule only");
  c->add_option("--out", categorize.out, "Output TSV (default stdout)");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic trace suite with known ground truth");
  s->add_option("kind", synth.kind, "planted or ramp")->check(CLI::IsMember({"planted", "ramp"}))->capture_default_str();
  s->add_option("--signal", synth.signal, "Contrast-layer behaviour of planted cases")
      ->check(CLI::IsMember({"favors_truth", "truth_gains_late"}))
      ->capture_default_str();
  s->add_option("--planted", synth.planted)->capture_default_str();
  s->add_option("--confident", synth.confident)->capture_default_str();
  s->add_option("--n-layers", synth.n_layers)->check(CLI::PositiveNumber)->capture_default_str();
  s->add_option("--lambda", synth.lambda)->check(CLI::PositiveNumber)->capture_default_str();
  s->add_option("--per-group", synth.per_group, "Samples per group for the ramp suite")->capture_default_str();
  s->add_option("--out-dir", synth.out_dir, "Output directory")->capture_default_str();
  add_seed(*s, synth.seed);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*b) return cmd_build(build, out, err);
    if (*d) {
      if (decode.trace.empty() == decode.model.empty()) throw ValidationError("give exactly one of --trace or --model");
      return cmd_decode(decode, out, err);
    }
    if (*e) {
      if (eval.responses.empty() == eval.outcomes.empty()) {
        throw ValidationError("give exactly one of --responses or --outcomes");
      }
      return cmd_eval(eval, out, err);
    }
    if (*an) return cmd_analyze(analyze, out, err);
    if (*c) return cmd_categorize(categorize, out, err);
    if (*s) return cmd_synth(synth, out, err);
  } catch (const FileError& fe) {
    err << "error: " << fe.what() << '\n';
    return fe.code();
  } catch (const ParseError& pe) {
    err << "error: " << pe.what() << '\n';
    return kValidation;
  } catch (const std::invalid_argument& ve) {
    err << "error: " << ve.what() << '\n';
    return kValidation;
  } catch (const TransportError& te) {
    err << "error: " << te.what() << '\n';
    return kRuntime;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kRuntime;
  }
  return kOk;
}

}  // namespace relhal::cli
