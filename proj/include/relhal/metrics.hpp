#pragma once

#include <array>
#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "relhal/calibrate.hpp"
#include "relhal/lens.hpp"
#include "relhal/questions.hpp"

namespace relhal {

/// Three-way NLI classifier behind a wire contract: class index 2 means the
/// premise entails the hypothesis. Implementations throw TransportError when
/// the service cannot answer.
class EntailmentClient {
 public:
  virtual ~EntailmentClient() = default;
  virtual int classify(const std::string& premise, const std::string& hypothesis) = 0;
};

inline constexpr int kEntailmentClass = 2;

struct ResponseRecord {
  std::string question_id;
  std::string response;
  std::optional<Vector> final_dist;
  std::optional<double> entropy;
};

// Line-delimited {"question_id", "response"} with optional "final_dist" and "entropy".
std::vector<ResponseRecord> read_responses(std::istream& in);
void write_responses(std::ostream& out, std::span<const ResponseRecord> responses);

enum class MatchMethod { NormalizedExact, OptionLetter, Entailment, SynonymFallback };

std::string_view to_string(MatchMethod method) noexcept;

struct MatchVerdict {
  // False when the entailment service failed; `correct` is then meaningless.
  bool scored = true;
  bool correct = false;
  MatchMethod method = MatchMethod::NormalizedExact;
  // Parsed answer: "yes"/"no" or an option letter, "other" when unparseable;
  // the normalized response for VQA.
  std::string predicted;
};

inline constexpr std::string_view kOtherAnswer = "other";

// "yes", "no" or "other" from the leading word after case-folding and
// stripping punctuation.
std::string parse_yes_no(std::string_view response);

// Option letter from forms like "B", "(B)", "B. under", "Answer: B" or the
// exact text of one option; nullopt when nothing matches.
std::optional<char> parse_option_letter(std::string_view response, std::span<const std::string> options);

/// Y/N and MCQ answers are parsed and compared with the label. VQA uses
/// bidirectional entailment when a client is given (correct iff both
/// directions return the entailment class) and otherwise the canonical
/// "subject is relation object" phrase, where the response's relation may be
/// any member of the label relation's synonym group.
MatchVerdict match_answer(const QuestionItem& item, std::string_view response, EntailmentClient* nli,
                          const SynonymGroups& synonyms);

// Fraction incorrect. Throws on an empty list or unscored verdicts.
double halr(std::span<const MatchVerdict> verdicts);
double accuracy(std::span<const MatchVerdict> verdicts);

// Mean over the three tasks of (1 - Halr). Inputs must lie in [0, 1].
double r_score(const std::array<double, 3>& halr_per_task);

struct ConfusionMatrix {
  TaskType task = TaskType::YN;
  std::vector<std::string> labels;   // rows
  std::vector<std::string> columns;  // labels followed by "other"
  std::vector<std::vector<std::size_t>> counts;

  std::size_t total() const;
  std::size_t row_sum(std::size_t row) const;
};

// Rows are labels, columns the parsed predictions. Unscored verdicts are
// skipped. Throws for VQA.
ConfusionMatrix confusion_matrix(TaskType task, std::span<const QuestionItem> items,
                                 std::span<const MatchVerdict> verdicts);

struct EntropySample {
  double entropy = 0.0;
  bool hallucinated = false;
};

struct HistogramBucket {
  double lower = 0.0;
  double upper = 0.0;  // +inf for the last bucket
  std::size_t hallucinated = 0;
  std::size_t correct = 0;
  double ratio = 0.0;  // hallucinated / correct; 0 for an empty bucket
  bool infinite = false;
};

// Edges 0, 0.2, ..., 2.0.
std::vector<double> default_bucket_edges();

/// Edges e_0 < e_1 < ... < e_k give buckets [e_i, e_{i+1}); the first bucket
/// also takes values below e_0 and the last one, [e_{k-1}, inf), everything
/// from e_{k-1} up. Needs at least two strictly increasing edges.
std::vector<HistogramBucket> entropy_ratio_histogram(std::span<const EntropySample> samples,
                                                     std::span<const double> edges);

struct LayerSample {
  std::string sample_id;
  std::vector<Vector> layer_dists;  // index = layer, 0..n
  std::size_t chosen_index = 0;
  bool hallucinated = false;
};

struct LayerCurves {
  std::size_t n_layers = 0;
  std::vector<double> hallucinated;  // empty when the group is empty
  std::vector<double> correct;
  std::size_t hallucinated_count = 0;
  std::size_t correct_count = 0;
};

// Per layer, the mean probability of each sample's chosen token, per group.
LayerCurves layer_curves(std::span<const LayerSample> samples);

// Joins trace records (step 0 of each sample) with decode outcomes and
// hallucination flags keyed by sample id.
std::vector<LayerSample> layer_samples_from_trace(const TraceFile& trace,
                                                  std::span<const DecodeOutcome> outcomes,
                                                  const std::map<std::string, bool>& hallucinated);

struct ProbabilitySample {
  Vector final_dist;
  bool hallucinated = false;
};

// Mean of the largest final-distribution probability over hallucinated samples.
double mean_hallucination_probability(std::span<const ProbabilitySample> samples);

struct RateCell {
  std::size_t total = 0;
  std::size_t wrong = 0;
  double halr = 0.0;
};

struct EvalReport {
  std::map<std::pair<TaskType, RelationCategory>, RateCell> cells;
  // Categories pooled per task, weighted by sample count.
  std::map<TaskType, RateCell> tasks;
  // Present only when all three tasks have scored samples.
  std::optional<double> r_score;
  std::vector<ConfusionMatrix> confusion;
  std::vector<HistogramBucket> histogram;
  std::size_t scored = 0;
  std::vector<std::string> unscored_ids;
};

struct EvaluatedItem {
  const QuestionItem* item = nullptr;
  MatchVerdict verdict;
  std::optional<double> entropy;
};

EvalReport build_report(std::span<const EvaluatedItem> evaluated, std::span<const double> bucket_edges);

std::string report_to_json(const EvalReport& report);
void write_rates_csv(std::ostream& out, const EvalReport& report);
void write_confusion_csv(std::ostream& out, const ConfusionMatrix& matrix);
void write_histogram_csv(std::ostream& out, std::span<const HistogramBucket> buckets);
void write_layer_curves_csv(std::ostream& out, const LayerCurves& curves);

/// Scores every response against its question with at most `jobs` matches
/// (and therefore entailment requests) in flight. Output is aligned with
/// `responses`. Throws ValidationError naming unknown question ids.
std::vector<EvaluatedItem> score_responses(std::span<const QuestionItem> items,
                                           std::span<const ResponseRecord> responses, EntailmentClient* nli,
                                           const SynonymGroups& synonyms, std::size_t jobs = 1);

}  // namespace relhal
