#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "relhal/scene_graph.hpp"

namespace relhal {

enum class TaskType { YN, MCQ, VQA };
enum class Polarity { Positive, Negative };

std::string_view to_string(TaskType task) noexcept;
std::string_view to_string(Polarity polarity) noexcept;
std::optional<TaskType> parse_task(std::string_view name);

inline constexpr int kQuestionFormatVersion = 1;
inline constexpr std::string_view kVqaFormatInstruction =
    "Please answer in the following format: Subject is <relation> Object";
inline constexpr std::string_view kOptionLetters = "ABCD";

struct QuestionItem {
  std::string question_id;
  std::string image_id;
  TaskType task = TaskType::YN;
  std::string prompt;
  SemanticTriplet source_triplet;
  // Relation the prompt asks about. Differs from the source relation only
  // for negative Y/N items.
  std::string asked_relation;
  // "yes"/"no" for Y/N, an option letter for MCQ, "subject is relation object" for VQA.
  std::string label;
  std::vector<std::string> options;
  Polarity polarity = Polarity::Positive;

  bool operator==(const QuestionItem&) const = default;
};

/// Groups of interchangeable relation strings. Groups must be disjoint after
/// normalization; a relation outside every group is only equivalent to itself.
class SynonymGroups {
 public:
  SynonymGroups() = default;
  explicit SynonymGroups(const std::vector<std::vector<std::string>>& groups);

  // One comma-separated group per line.
  static SynonymGroups parse(std::istream& in);

  std::optional<std::size_t> group_of(std::string_view relation) const;
  bool equivalent(std::string_view a, std::string_view b) const;
  const std::vector<std::set<std::string>>& groups() const noexcept { return groups_; }

 private:
  std::vector<std::set<std::string>> groups_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// One template per (task, category). Placeholders: {subject}, {relation},
/// {object} and, for MCQ, {options}. VQA prompts always end with the answer
/// format instruction regardless of the template.
class PromptTemplates {
 public:
  PromptTemplates();

  // Lines `yn.perceptive = ...`, `mcq.cognitive = ...` etc. override defaults.
  static PromptTemplates parse(std::istream& in);

  const std::string& get(TaskType task, RelationCategory category) const;
  void set(TaskType task, RelationCategory category, std::string tmpl);

 private:
  std::map<std::pair<TaskType, RelationCategory>, std::string> templates_;
};

struct Skip {
  std::string item_key;
  TaskType task = TaskType::YN;
  std::string reason;
};

template <typename T>
using Compiled = std::variant<T, Skip>;

struct YnPair {
  QuestionItem positive;
  QuestionItem negative;
};

// Relations from `pool` (deduplicated, order kept) outside the synonym group
// of `relation`.
std::vector<std::string> non_synonymous(std::span<const std::string> pool, std::string_view relation,
                                        const SynonymGroups& synonyms);

/// Positive item asks the true relation; the negative item asks a seeded
/// uniform choice from non_synonymous(pool, true relation). Skips with
/// "no valid negative" when that set is empty.
Compiled<YnPair> make_yn_pair(const SemanticTriplet& triplet, std::span<const std::string> pool,
                              const SynonymGroups& synonyms, std::uint64_t seed,
                              const PromptTemplates& templates = {});

/// Three distractors drawn without replacement from a seeded shuffle of the
/// non-synonymous pool, skipping any candidate synonymous with one already
/// drawn; the four options are then shuffled and the label is the letter of
/// the true relation. Skips with "insufficient distractors".
Compiled<QuestionItem> make_mcq(const SemanticTriplet& triplet, std::span<const std::string> pool,
                                const SynonymGroups& synonyms, std::uint64_t seed,
                                const PromptTemplates& templates = {});

QuestionItem make_vqa(const SemanticTriplet& triplet, const PromptTemplates& templates = {});

// Returns the first rule the item breaks, if any.
std::optional<std::string> lint_item(const QuestionItem& item, const SynonymGroups& synonyms);

struct CompileConfig {
  SynonymGroups synonyms;
  PromptTemplates templates;
  bool emit_yn = true;
  bool emit_mcq = true;
  bool emit_vqa = true;
};

struct DatasetManifest {
  std::map<std::pair<RelationCategory, TaskType>, std::size_t> counts;
  std::size_t yn_positive = 0;
  std::size_t yn_negative = 0;
  std::map<RelationCategory, std::size_t> relation_types;
  std::size_t image_count = 0;
  std::size_t total = 0;
  std::map<std::string, std::size_t> skip_reasons;

  // "p:n" reduced by the gcd; "0:0" when there are no Y/N items.
  std::string yn_ratio() const;

  static DatasetManifest tally(std::span<const QuestionItem> items, std::span<const Skip> skips);
};

struct CompiledDataset {
  std::vector<QuestionItem> items;
  DatasetManifest manifest;
  std::vector<Skip> skips;
};

/// Compiles categorized triplets into Y/N pairs, MCQs and VQA items, in
/// triplet order. Distractor and negative pools are the distinct relations of
/// the triplet's own category. Items failing lint_item() are dropped and
/// recorded as skips; a Y/N pair is dropped as a whole.
CompiledDataset compile_dataset(std::span<const SemanticTriplet> triplets, const CompileConfig& config,
                                std::uint64_t seed);

void write_question_set(std::ostream& out, std::span<const QuestionItem> items);
std::vector<QuestionItem> read_question_set(std::istream& in);

std::string manifest_to_json(const DatasetManifest& manifest);

}  // namespace relhal
