#include "relhal/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <regex>
#include <set>

#include <nlohmann/json.hpp>

#include "relhal/error.hpp"
#include "relhal/parallel.hpp"
#include "relhal/text.hpp"

namespace relhal {

using nlohmann::json;

std::vector<ResponseRecord> read_responses(std::istream& in) {
  std::vector<ResponseRecord> out;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (text::trim(raw).empty()) continue;
    try {
      const json j = json::parse(raw);
      ResponseRecord r;
      r.question_id = j.at("question_id").get<std::string>();
      r.response = j.at("response").get<std::string>();
      if (auto it = j.find("final_dist"); it != j.end() && !it->is_null()) r.final_dist = it->get<Vector>();
      if (auto it = j.find("entropy"); it != j.end() && !it->is_null()) r.entropy = it->get<double>();
      out.push_back(std::move(r));
    } catch (const json::parse_error& e) {
      throw ParseError(e.what(), line, e.byte);
    } catch (const json::exception& e) {
      throw ParseError(e.what(), line);
    }
  }
  return out;
}

void write_responses(std::ostream& out, std::span<const ResponseRecord> responses) {
  for (const ResponseRecord& r : responses) {
    json j = {{"question_id", r.question_id}, {"response", r.response}};
    if (r.final_dist) j["final_dist"] = *r.final_dist;
    if (r.entropy) j["entropy"] = *r.entropy;
    out << j.dump() << '\n';
  }
}

std::string_view to_string(MatchMethod method) noexcept {
  switch (method) {
    case MatchMethod::NormalizedExact: return "normalized_exact";
    case MatchMethod::OptionLetter: return "option_letter";
    case MatchMethod::Entailment: return "entailment";
    case MatchMethod::SynonymFallback: return "synonym_fallback";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Answer parsing

std::string parse_yes_no(std::string_view response) {
  const auto words = text::split_words(text::normalize_loose(response));
  if (!words.empty() && (words.front() == "yes" || words.front() == "no")) return words.front();
  return std::string(kOtherAnswer);
}

std::optional<char> parse_option_letter(std::string_view response, std::span<const std::string> options) {
  const std::string raw(text::trim(response));
  static const std::regex leading_upper(R"(^\(?([A-D])\)?(?:[.:)\s]|$))");
  static const std::regex leading_lower(R"(^\(?([a-d])\)?(?:[.:)]|$))");
  static const std::regex answer_is(R"(answer(?:\s+is)?\s*:?\s*\(?([A-Da-d])\b)", std::regex::icase);
  std::smatch m;
  if (std::regex_search(raw, m, leading_upper) || std::regex_search(raw, m, leading_lower) ||
      std::regex_search(raw, m, answer_is)) {
    return static_cast<char>(std::toupper(static_cast<unsigned char>(m[1].str()[0])));
  }
  const std::string loose = text::normalize_loose(raw);
  for (std::size_t i = 0; i < options.size() && i < kOptionLetters.size(); ++i) {
    if (!loose.empty() && loose == text::normalize_loose(options[i])) return kOptionLetters[i];
  }
  return std::nullopt;
}

namespace {

MatchVerdict match_vqa_fallback(const QuestionItem& item, std::string_view response,
                                const SynonymGroups& synonyms) {
  MatchVerdict v;
  v.predicted = text::normalize_loose(response);
  const std::string label = text::normalize_loose(item.label);
  if (v.predicted == label) {
    v.correct = true;
    v.method = MatchMethod::NormalizedExact;
    return v;
  }
  v.method = MatchMethod::SynonymFallback;
  const SemanticTriplet& t = item.source_triplet;
  const std::string prefix = text::normalize_loose(t.subject) + " is ";
  const std::string suffix = " " + text::normalize_loose(t.object);
  const std::string& r = v.predicted;
  if (r.size() > prefix.size() + suffix.size() && r.starts_with(prefix) && r.ends_with(suffix)) {
    const std::string relation = r.substr(prefix.size(), r.size() - prefix.size() - suffix.size());
    v.correct = synonyms.equivalent(relation, t.relation) ||
                synonyms.equivalent(relation, text::normalize_loose(t.relation));
  }
  return v;
}

}  // namespace

MatchVerdict match_answer(const QuestionItem& item, std::string_view response, EntailmentClient* nli,
                          const SynonymGroups& synonyms) {
  MatchVerdict v;
  switch (item.task) {
    case TaskType::YN:
      v.method = MatchMethod::NormalizedExact;
      v.predicted = parse_yes_no(response);
      v.correct = v.predicted == item.label;
      return v;
    case TaskType::MCQ: {
      v.method = MatchMethod::OptionLetter;
      const auto letter = parse_option_letter(response, item.options);
      v.predicted = letter ? std::string(1, *letter) : std::string(kOtherAnswer);
      v.correct = v.predicted == item.label;
      return v;
    }
    case TaskType::VQA:
      break;
  }
  if (nli == nullptr) return match_vqa_fallback(item, response, synonyms);

  v.method = MatchMethod::Entailment;
  v.predicted = text::normalize(response);
  try {
    const std::string resp(response);
    const int forward = nli->classify(item.label, resp);
    const int backward = nli->classify(resp, item.label);
    v.correct = forward == kEntailmentClass && backward == kEntailmentClass;
  } catch (const TransportError&) {
    v.scored = false;
    v.correct = false;
  }
  return v;
}

// ---------------------------------------------------------------------------
// Rates

double halr(std::span<const MatchVerdict> verdicts) {
  if (verdicts.empty()) throw ValidationError("hallucination rate of an empty verdict list is undefined");
  std::size_t wrong = 0;
  for (const MatchVerdict& v : verdicts) {
    if (!v.scored) throw ValidationError("hallucination rate over unscored verdicts");
    if (!v.correct) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(verdicts.size());
}

double accuracy(std::span<const MatchVerdict> verdicts) { return 1.0 - halr(verdicts); }

double r_score(const std::array<double, 3>& halr_per_task) {
  double sum = 0.0;
  for (double h : halr_per_task) {
    if (!std::isfinite(h) || h < 0.0 || h > 1.0) {
      throw ValidationError("hallucination rate " + std::to_string(h) + " outside [0, 1]");
    }
    sum += 1.0 - h;
  }
  return sum / 3.0;
}

// ---------------------------------------------------------------------------
// Confusion matrix

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (std::size_t r = 0; r < counts.size(); ++r) n += row_sum(r);
  return n;
}

std::size_t ConfusionMatrix::row_sum(std::size_t row) const {
  std::size_t n = 0;
  for (std::size_t c : counts.at(row)) n += c;
  return n;
}

ConfusionMatrix confusion_matrix(TaskType task, std::span<const QuestionItem> items,
                                 std::span<const MatchVerdict> verdicts) {
  if (task == TaskType::VQA) throw ValidationError("confusion matrix is undefined for open-ended VQA");
  if (items.size() != verdicts.size()) throw ValidationError("items and verdicts are not aligned");
  ConfusionMatrix m;
  m.task = task;
  m.labels = task == TaskType::YN ? std::vector<std::string>{"yes", "no"}
                                  : std::vector<std::string>{"A", "B", "C", "D"};
  m.columns = m.labels;
  m.columns.emplace_back(kOtherAnswer);
  m.counts.assign(m.labels.size(), std::vector<std::size_t>(m.columns.size(), 0));
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].task != task || !verdicts[i].scored) continue;
    auto row = std::find(m.labels.begin(), m.labels.end(), items[i].label);
    if (row == m.labels.end()) {
      throw ValidationError("question " + items[i].question_id + " has label '" + items[i].label +
                            "' outside the " + std::string(to_string(task)) + " label set");
    }
    auto col = std::find(m.columns.begin(), m.columns.end(), verdicts[i].predicted);
    if (col == m.columns.end()) col = m.columns.end() - 1;
    ++m.counts[row - m.labels.begin()][col - m.columns.begin()];
  }
  return m;
}

// ---------------------------------------------------------------------------
// Entropy histogram

std::vector<double> default_bucket_edges() {
  std::vector<double> edges;
  for (int i = 0; i <= 10; ++i) edges.push_back(i / 5.0);
  return edges;
}

std::vector<HistogramBucket> entropy_ratio_histogram(std::span<const EntropySample> samples,
                                                     std::span<const double> edges) {
  if (edges.size() < 2) throw ValidationError("histogram needs at least two bucket edges");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (!std::isfinite(edges[i])) throw ValidationError("bucket edges must be finite");
    if (i > 0 && !(edges[i] > edges[i - 1])) throw ValidationError("bucket edges must be strictly increasing");
  }
  std::vector<HistogramBucket> buckets(edges.size() - 1);
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    buckets[i].lower = edges[i];
    buckets[i].upper = edges[i + 1];
  }
  buckets.back().upper = std::numeric_limits<double>::infinity();
  for (const EntropySample& s : samples) {
    const auto above = std::upper_bound(edges.begin(), edges.end(), s.entropy) - edges.begin();
    const std::size_t index =
        std::clamp<std::ptrdiff_t>(above - 1, 0, static_cast<std::ptrdiff_t>(buckets.size()) - 1);
    ++(s.hallucinated ? buckets[index].hallucinated : buckets[index].correct);
  }
  for (HistogramBucket& b : buckets) {
    if (b.correct > 0) {
      b.ratio = static_cast<double>(b.hallucinated) / static_cast<double>(b.correct);
    } else if (b.hallucinated > 0) {
      b.infinite = true;
      b.ratio = std::numeric_limits<double>::infinity();
    }
  }
  return buckets;
}

// ---------------------------------------------------------------------------
// Layer curves

LayerCurves layer_curves(std::span<const LayerSample> samples) {
  LayerCurves curves;
  if (samples.empty()) return curves;
  const std::size_t layers = samples.front().layer_dists.size();
  if (layers == 0) throw ValidationError("sample " + samples.front().sample_id + " has no layers");
  curves.n_layers = layers - 1;
  std::vector<double> sum_h(layers, 0.0), sum_c(layers, 0.0);
  for (const LayerSample& s : samples) {
    if (s.layer_dists.size() != layers) {
      throw ValidationError("sample " + s.sample_id + " covers " + std::to_string(s.layer_dists.size()) +
                            " layers, expected " + std::to_string(layers));
    }
    auto& sums = s.hallucinated ? sum_h : sum_c;
    for (std::size_t j = 0; j < layers; ++j) {
      if (s.chosen_index >= s.layer_dists[j].size()) {
        throw ValidationError("sample " + s.sample_id + ": chosen index outside distribution");
      }
      sums[j] += s.layer_dists[j][s.chosen_index];
    }
    ++(s.hallucinated ? curves.hallucinated_count : curves.correct_count);
  }
  auto mean = [layers](const std::vector<double>& sums, std::size_t n) {
    std::vector<double> out;
    if (n == 0) return out;
    for (std::size_t j = 0; j < layers; ++j) out.push_back(sums[j] / static_cast<double>(n));
    return out;
  };
  curves.hallucinated = mean(sum_h, curves.hallucinated_count);
  curves.correct = mean(sum_c, curves.correct_count);
  return curves;
}

std::vector<LayerSample> layer_samples_from_trace(const TraceFile& trace,
                                                  std::span<const DecodeOutcome> outcomes,
                                                  const std::map<std::string, bool>& hallucinated) {
  std::map<std::pair<std::string, std::size_t>, std::vector<const LayerTrace*>> by_step;
  for (const LayerTrace& r : trace.records) by_step[{r.sample_id, r.step}].push_back(&r);

  std::vector<LayerSample> samples;
  std::vector<std::string> missing;
  for (const DecodeOutcome& o : outcomes) {
    auto flag = hallucinated.find(o.sample_id);
    auto records = by_step.find({o.sample_id, o.step});
    if (flag == hallucinated.end() || records == by_step.end()) {
      missing.push_back(o.sample_id);
      continue;
    }
    LayerSample s;
    s.sample_id = o.sample_id;
    s.chosen_index = o.chosen_index;
    s.hallucinated = flag->second;
    s.layer_dists.resize(trace.meta.n_layers + 1);
    std::vector<bool> covered(trace.meta.n_layers + 1, false);
    for (const LayerTrace* r : records->second) {
      s.layer_dists[r->layer] = softmax(r->logits);
      covered[r->layer] = true;
    }
    if (std::find(covered.begin(), covered.end(), false) != covered.end()) {
      throw ValidationError("sample " + o.sample_id + " does not cover layers 0.." +
                            std::to_string(trace.meta.n_layers));
    }
    samples.push_back(std::move(s));
  }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size() && i < 10; ++i) list += (i ? ", " : "") + missing[i];
    throw ValidationError(std::to_string(missing.size()) + " outcome(s) without trace or verdict: " + list);
  }
  return samples;
}

double mean_hallucination_probability(std::span<const ProbabilitySample> samples) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const ProbabilitySample& s : samples) {
    if (!s.hallucinated) continue;
    if (s.final_dist.empty()) throw ValidationError("hallucinated sample without a final distribution");
    sum += *std::max_element(s.final_dist.begin(), s.final_dist.end());
    ++n;
  }
  if (n == 0) throw ValidationError("no hallucinated samples to average");
  return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Report

EvalReport build_report(std::span<const EvaluatedItem> evaluated, std::span<const double> bucket_edges) {
  EvalReport report;
  std::vector<EntropySample> entropies;
  std::map<TaskType, std::pair<std::vector<QuestionItem>, std::vector<MatchVerdict>>> by_task;
  for (const EvaluatedItem& e : evaluated) {
    if (!e.verdict.scored) {
      report.unscored_ids.push_back(e.item->question_id);
      continue;
    }
    ++report.scored;
    const RelationCategory category =
        e.item->source_triplet.category.value_or(fallback_category(e.item->source_triplet.relation));
    for (RateCell* cell : {&report.cells[{e.item->task, category}], &report.tasks[e.item->task]}) {
      ++cell->total;
      if (!e.verdict.correct) ++cell->wrong;
    }
    if (e.item->task != TaskType::VQA) {
      by_task[e.item->task].first.push_back(*e.item);
      by_task[e.item->task].second.push_back(e.verdict);
    }
    if (e.entropy) entropies.push_back({*e.entropy, !e.verdict.correct});
  }
  auto rate = [](RateCell& c) { c.halr = static_cast<double>(c.wrong) / static_cast<double>(c.total); };
  for (auto& [key, cell] : report.cells) rate(cell);
  for (auto& [task, cell] : report.tasks) rate(cell);
  if (report.tasks.size() == 3) {
    report.r_score = r_score({report.tasks[TaskType::YN].halr, report.tasks[TaskType::MCQ].halr,
                              report.tasks[TaskType::VQA].halr});
  }
  for (auto& [task, pair] : by_task) report.confusion.push_back(confusion_matrix(task, pair.first, pair.second));
  if (!entropies.empty()) report.histogram = entropy_ratio_histogram(entropies, bucket_edges);
  return report;
}

namespace {

json bucket_json(const HistogramBucket& b) {
  return {{"lower", b.lower},
          {"upper", std::isinf(b.upper) ? json("inf") : json(b.upper)},
          {"hallucinated", b.hallucinated},
          {"correct", b.correct},
          {"ratio", b.infinite ? json("infinite") : json(b.ratio)}};
}

std::string csv_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  json j = v;
  return j.dump();
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  json cells = json::array();
  for (const auto& [key, cell] : report.cells) {
    cells.push_back({{"task", to_string(key.first)},
                     {"category", to_string(key.second)},
                     {"total", cell.total},
                     {"wrong", cell.wrong},
                     {"halr", cell.halr}});
  }
  json tasks = json::object();
  for (const auto& [task, cell] : report.tasks) {
    tasks[std::string(to_string(task))] = {{"total", cell.total}, {"wrong", cell.wrong}, {"halr", cell.halr}};
  }
  json confusion = json::array();
  for (const ConfusionMatrix& m : report.confusion) {
    confusion.push_back({{"task", to_string(m.task)}, {"labels", m.labels}, {"columns", m.columns}, {"counts", m.counts}});
  }
  json histogram = json::array();
  for (const HistogramBucket& b : report.histogram) histogram.push_back(bucket_json(b));
  json j = {{"format_version", 1},
            {"halr", cells},
            {"task_halr", tasks},
            {"task_pooling", "sample-weighted over categories"},
            {"r_score", report.r_score ? json(*report.r_score) : json(nullptr)},
            {"confusion", confusion},
            {"entropy_histogram", histogram},
            {"scored", report.scored},
            {"unscored", report.unscored_ids}};
  if (!report.r_score) j["r_score_note"] = "requires scored samples for all of yn, mcq and vqa";
  return j.dump(2);
}

void write_rates_csv(std::ostream& out, const EvalReport& report) {
  out << "task,category,total,wrong,halr\n";
  for (const auto& [key, cell] : report.cells) {
    out << to_string(key.first) << ',' << to_string(key.second) << ',' << cell.total << ',' << cell.wrong << ','
        << csv_number(cell.halr) << '\n';
  }
  for (const auto& [task, cell] : report.tasks) {
    out << to_string(task) << ",all," << cell.total << ',' << cell.wrong << ',' << csv_number(cell.halr) << '\n';
  }
}

void write_confusion_csv(std::ostream& out, const ConfusionMatrix& matrix) {
  out << "label";
  for (const std::string& c : matrix.columns) out << ',' << c;
  out << '\n';
  for (std::size_t r = 0; r < matrix.labels.size(); ++r) {
    out << matrix.labels[r];
    for (std::size_t c : matrix.counts[r]) out << ',' << c;
    out << '\n';
  }
}

void write_histogram_csv(std::ostream& out, std::span<const HistogramBucket> buckets) {
  out << "lower,upper,hallucinated,correct,ratio\n";
  for (const HistogramBucket& b : buckets) {
    out << csv_number(b.lower) << ',' << csv_number(b.upper) << ',' << b.hallucinated << ',' << b.correct << ','
        << (b.infinite ? std::string("infinite") : csv_number(b.ratio)) << '\n';
  }
}

void write_layer_curves_csv(std::ostream& out, const LayerCurves& curves) {
  out << "layer,hallucinated_mean,correct_mean\n";
  const std::size_t layers = std::max(curves.hallucinated.size(), curves.correct.size());
  for (std::size_t j = 0; j < layers; ++j) {
    out << j << ',' << (curves.hallucinated.empty() ? "" : csv_number(curves.hallucinated[j])) << ','
        << (curves.correct.empty() ? "" : csv_number(curves.correct[j])) << '\n';
  }
}

std::vector<EvaluatedItem> score_responses(std::span<const QuestionItem> items,
                                           std::span<const ResponseRecord> responses, EntailmentClient* nli,
                                           const SynonymGroups& synonyms, std::size_t jobs) {
  std::map<std::string, const QuestionItem*> by_id;
  for (const QuestionItem& q : items) by_id[q.question_id] = &q;

  std::vector<std::string> orphans;
  for (const ResponseRecord& r : responses) {
    if (!by_id.count(r.question_id)) orphans.push_back(r.question_id);
  }
  if (!orphans.empty()) {
    std::string list;
    for (std::size_t i = 0; i < orphans.size() && i < 10; ++i) list += (i ? ", " : "") + orphans[i];
    throw ValidationError(std::to_string(orphans.size()) + " response(s) with unknown question id: " + list);
  }

  std::vector<EvaluatedItem> out(responses.size());
  parallel_for(responses.size(), jobs, [&](std::size_t i) {
    const ResponseRecord& r = responses[i];
    out[i].item = by_id.at(r.question_id);
    out[i].verdict = match_answer(*out[i].item, r.response, nli, synonyms);
    out[i].entropy = r.entropy;
  });
  return out;
}

}  // namespace relhal
