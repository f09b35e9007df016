#include "relhal/questions.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

#include <nlohmann/json.hpp>

#include "relhal/error.hpp"
#include "relhal/random.hpp"
#include "relhal/text.hpp"

namespace relhal {

using nlohmann::json;

std::string_view to_string(TaskType task) noexcept {
  switch (task) {
    case TaskType::YN: return "yn";
    case TaskType::MCQ: return "mcq";
    case TaskType::VQA: return "vqa";
  }
  return "unknown";
}

std::string_view to_string(Polarity polarity) noexcept {
  return polarity == Polarity::Positive ? "positive" : "negative";
}

std::optional<TaskType> parse_task(std::string_view name) {
  const std::string n = text::normalize(name);
  if (n == "yn" || n == "y/n") return TaskType::YN;
  if (n == "mcq") return TaskType::MCQ;
  if (n == "vqa") return TaskType::VQA;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// SynonymGroups

SynonymGroups::SynonymGroups(const std::vector<std::vector<std::string>>& groups) {
  for (const auto& group : groups) {
    std::set<std::string> normalized;
    for (const std::string& r : group) {
      std::string n = text::normalize(r);
      if (!n.empty()) normalized.insert(std::move(n));
    }
    if (normalized.empty()) continue;
    const std::size_t id = groups_.size();
    for (const std::string& r : normalized) {
      if (!index_.emplace(r, id).second) {
        throw ValidationError("relation '" + r + "' appears in more than one synonym group");
      }
    }
    groups_.push_back(std::move(normalized));
  }
}

SynonymGroups SynonymGroups::parse(std::istream& in) {
  std::vector<std::vector<std::string>> groups;
  for (const text::ConfigLine& entry : text::read_config_lines(in)) {
    groups.push_back(text::split(entry.content, ','));
  }
  return SynonymGroups(groups);
}

std::optional<std::size_t> SynonymGroups::group_of(std::string_view relation) const {
  auto it = index_.find(relation);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool SynonymGroups::equivalent(std::string_view a, std::string_view b) const {
  if (a == b) return true;
  auto ga = group_of(a);
  return ga && ga == group_of(b);
}

// ---------------------------------------------------------------------------
// PromptTemplates

PromptTemplates::PromptTemplates() {
  using enum TaskType;
  const std::string relation_question =
      "What is the relation between the {subject} and the {object} in the photo?";
  templates_[{YN, RelationCategory::Perceptive}] = "Is the {subject} {relation} the {object} in the photo?";
  templates_[{YN, RelationCategory::Cognitive}] = "Is the {subject} {relation} {object} in the photo?";
  for (RelationCategory c : {RelationCategory::Perceptive, RelationCategory::Cognitive}) {
    templates_[{MCQ, c}] = relation_question + " {options} Answer with the option's letter.";
    templates_[{VQA, c}] = relation_question;
  }
}

PromptTemplates PromptTemplates::parse(std::istream& in) {
  PromptTemplates templates;
  for (const text::ConfigLine& entry : text::read_config_lines(in)) {
    const auto eq = entry.content.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'task.category = template'", entry.line_no);
    const auto key = text::split(entry.content.substr(0, eq), '.');
    if (key.size() != 2) throw ParseError("template key must be 'task.category'", entry.line_no);
    const auto task = parse_task(key[0]);
    const auto category = parse_category(key[1]);
    if (!task || !category) throw ParseError("unknown template key", entry.line_no);
    const std::string body(text::trim(entry.content.substr(eq + 1)));
    if (body.empty()) throw ParseError("empty template", entry.line_no);
    templates.set(*task, *category, body);
  }
  return templates;
}

const std::string& PromptTemplates::get(TaskType task, RelationCategory category) const {
  return templates_.at({task, category});
}

void PromptTemplates::set(TaskType task, RelationCategory category, std::string tmpl) {
  templates_[{task, category}] = std::move(tmpl);
}

// ---------------------------------------------------------------------------
// Item construction

namespace {

RelationCategory category_of(const SemanticTriplet& t) {
  return t.category.value_or(fallback_category(t.relation));
}

std::string fill(std::string_view tmpl, const SemanticTriplet& t, std::string_view relation) {
  std::string s = text::substitute(tmpl, "subject", t.subject);
  s = text::substitute(s, "relation", relation);
  return text::substitute(s, "object", t.object);
}

std::string item_key(const SemanticTriplet& t) {
  return t.image_id + ":" + t.subject + "|" + t.relation + "|" + t.object;
}

QuestionItem base_item(const SemanticTriplet& t, TaskType task) {
  QuestionItem item;
  item.image_id = t.image_id;
  item.task = task;
  item.source_triplet = t;
  item.asked_relation = t.relation;
  return item;
}

}  // namespace

std::vector<std::string> non_synonymous(std::span<const std::string> pool, std::string_view relation,
                                        const SynonymGroups& synonyms) {
  std::vector<std::string> out;
  for (const std::string& candidate : pool) {
    if (synonyms.equivalent(candidate, relation)) continue;
    if (std::find(out.begin(), out.end(), candidate) != out.end()) continue;
    out.push_back(candidate);
  }
  return out;
}

Compiled<YnPair> make_yn_pair(const SemanticTriplet& triplet, std::span<const std::string> pool,
                              const SynonymGroups& synonyms, std::uint64_t seed,
                              const PromptTemplates& templates) {
  const auto candidates = non_synonymous(pool, triplet.relation, synonyms);
  if (candidates.empty()) return Skip{item_key(triplet), TaskType::YN, "no valid negative"};

  Rng rng(seed);
  const std::string& perturbed = candidates[rng.uniform_index(candidates.size())];
  const std::string& tmpl = templates.get(TaskType::YN, category_of(triplet));

  YnPair pair{base_item(triplet, TaskType::YN), base_item(triplet, TaskType::YN)};
  pair.positive.prompt = fill(tmpl, triplet, triplet.relation);
  pair.positive.label = "yes";
  pair.negative.prompt = fill(tmpl, triplet, perturbed);
  pair.negative.asked_relation = perturbed;
  pair.negative.label = "no";
  pair.negative.polarity = Polarity::Negative;
  return pair;
}

Compiled<QuestionItem> make_mcq(const SemanticTriplet& triplet, std::span<const std::string> pool,
                                const SynonymGroups& synonyms, std::uint64_t seed,
                                const PromptTemplates& templates) {
  auto candidates = non_synonymous(pool, triplet.relation, synonyms);
  Rng rng(seed);
  rng.shuffle(candidates);

  std::vector<std::string> options{triplet.relation};
  for (const std::string& c : candidates) {
    if (options.size() == kOptionLetters.size()) break;
    const bool collides = std::any_of(options.begin(), options.end(),
                                      [&](const std::string& o) { return synonyms.equivalent(o, c); });
    if (!collides) options.push_back(c);
  }
  if (options.size() < kOptionLetters.size()) {
    return Skip{item_key(triplet), TaskType::MCQ, "insufficient distractors"};
  }
  rng.shuffle(options);

  QuestionItem item = base_item(triplet, TaskType::MCQ);
  std::string listing;
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (i > 0) listing += ' ';
    listing += kOptionLetters[i];
    listing += ". " + options[i];
    if (options[i] == triplet.relation) item.label = std::string(1, kOptionLetters[i]);
  }
  item.prompt = text::substitute(fill(templates.get(TaskType::MCQ, category_of(triplet)), triplet,
                                      triplet.relation),
                                 "options", listing);
  item.options = std::move(options);
  return item;
}

QuestionItem make_vqa(const SemanticTriplet& triplet, const PromptTemplates& templates) {
  QuestionItem item = base_item(triplet, TaskType::VQA);
  item.prompt = fill(templates.get(TaskType::VQA, category_of(triplet)), triplet, triplet.relation);
  item.prompt += ' ';
  item.prompt += kVqaFormatInstruction;
  item.label = triplet.subject + " is " + triplet.relation + " " + triplet.object;
  return item;
}

std::optional<std::string> lint_item(const QuestionItem& item, const SynonymGroups& synonyms) {
  const SemanticTriplet& t = item.source_triplet;
  const std::string prompt = text::to_lower(item.prompt);
  if (prompt.find(t.subject) == std::string::npos) return "prompt is missing the subject";
  if (prompt.find(t.object) == std::string::npos) return "prompt is missing the object";
  if (item.prompt.find('{') != std::string::npos || item.prompt.find('}') != std::string::npos) {
    return "unfilled template placeholder";
  }
  if (item.prompt.find("  ") != std::string::npos) return "repeated whitespace in prompt";
  if (item.prompt.empty() || !std::isupper(static_cast<unsigned char>(item.prompt.front()))) {
    return "prompt does not start with a capital letter";
  }

  switch (item.task) {
    case TaskType::YN:
      if (item.polarity == Polarity::Negative && synonyms.equivalent(item.asked_relation, t.relation)) {
        return "negative relation is synonymous with the true relation";
      }
      if (item.label != (item.polarity == Polarity::Positive ? "yes" : "no")) return "label/polarity mismatch";
      break;
    case TaskType::MCQ: {
      if (item.options.size() != kOptionLetters.size()) return "MCQ needs exactly 4 options";
      if (std::count(item.options.begin(), item.options.end(), t.relation) != 1) {
        return "MCQ must contain the true relation exactly once";
      }
      for (std::size_t i = 0; i < item.options.size(); ++i) {
        for (std::size_t j = i + 1; j < item.options.size(); ++j) {
          if (synonyms.equivalent(item.options[i], item.options[j])) return "synonym-colliding options";
        }
      }
      const auto pos = kOptionLetters.find(item.label);
      if (item.label.size() != 1 || pos == std::string_view::npos || item.options[pos] != t.relation) {
        return "MCQ label does not point at the true relation";
      }
      break;
    }
    case TaskType::VQA:
      if (!item.prompt.ends_with(kVqaFormatInstruction)) return "VQA prompt lacks the format instruction";
      break;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Dataset compilation

std::string DatasetManifest::yn_ratio() const {
  const std::size_t g = std::gcd(yn_positive, yn_negative);
  if (g == 0) return "0:0";
  return std::to_string(yn_positive / g) + ":" + std::to_string(yn_negative / g);
}

DatasetManifest DatasetManifest::tally(std::span<const QuestionItem> items, std::span<const Skip> skips) {
  DatasetManifest m;
  std::set<std::string> images;
  std::map<RelationCategory, std::set<std::string>> relations;
  for (const QuestionItem& item : items) {
    const RelationCategory c = category_of(item.source_triplet);
    ++m.counts[{c, item.task}];
    if (item.task == TaskType::YN) {
      ++(item.polarity == Polarity::Positive ? m.yn_positive : m.yn_negative);
    }
    images.insert(item.image_id);
    relations[c].insert(item.source_triplet.relation);
  }
  for (const auto& [c, rels] : relations) m.relation_types[c] = rels.size();
  m.image_count = images.size();
  m.total = items.size();
  for (const Skip& s : skips) ++m.skip_reasons[s.reason];
  return m;
}

CompiledDataset compile_dataset(std::span<const SemanticTriplet> triplets, const CompileConfig& config,
                                std::uint64_t seed) {
  std::map<RelationCategory, std::vector<std::string>> pools;
  {
    std::map<RelationCategory, std::set<std::string>> distinct;
    for (const SemanticTriplet& t : triplets) distinct[category_of(t)].insert(t.relation);
    for (auto& [c, rels] : distinct) pools[c].assign(rels.begin(), rels.end());
  }

  CompiledDataset out;
  auto keep = [&](QuestionItem item) {
    if (auto violation = lint_item(item, config.synonyms)) {
      out.skips.push_back({item.question_id, item.task, "lint: " + *violation});
      return;
    }
    out.items.push_back(std::move(item));
  };

  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const SemanticTriplet& t = triplets[i];
    const auto& pool = pools[category_of(t)];
    const std::string prefix = t.image_id + "-" + std::to_string(i) + "-";

    if (config.emit_yn) {
      auto yn = make_yn_pair(t, pool, config.synonyms, mix_seed(seed, 3 * i), config.templates);
      if (auto* pair = std::get_if<YnPair>(&yn)) {
        pair->positive.question_id = prefix + "yn-pos";
        pair->negative.question_id = prefix + "yn-neg";
        auto bad = lint_item(pair->positive, config.synonyms);
        if (!bad) bad = lint_item(pair->negative, config.synonyms);
        if (bad) {
          out.skips.push_back({prefix + "yn", TaskType::YN, "lint: " + *bad});
        } else {
          out.items.push_back(std::move(pair->positive));
          out.items.push_back(std::move(pair->negative));
        }
      } else {
        out.skips.push_back(std::get<Skip>(std::move(yn)));
      }
    }
    if (config.emit_mcq) {
      auto mcq = make_mcq(t, pool, config.synonyms, mix_seed(seed, 3 * i + 1), config.templates);
      if (auto* item = std::get_if<QuestionItem>(&mcq)) {
        item->question_id = prefix + "mcq";
        keep(std::move(*item));
      } else {
        out.skips.push_back(std::get<Skip>(std::move(mcq)));
      }
    }
    if (config.emit_vqa) {
      QuestionItem item = make_vqa(t, config.templates);
      item.question_id = prefix + "vqa";
      keep(std::move(item));
    }
  }
  out.manifest = DatasetManifest::tally(out.items, out.skips);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json triplet_json(const SemanticTriplet& t) {
  json j = {{"subject", t.subject}, {"relation", t.relation}, {"object", t.object}, {"image_id", t.image_id}};
  j["category"] = t.category ? json(std::string(to_string(*t.category))) : json(nullptr);
  return j;
}

template <typename T>
T field(const json& j, const char* name, std::size_t line) {
  auto it = j.find(name);
  if (it == j.end()) throw ParseError(std::string("missing field '") + name + "'", line);
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ParseError(std::string("field '") + name + "' has the wrong type", line);
  }
}

}  // namespace

void write_question_set(std::ostream& out, std::span<const QuestionItem> items) {
  for (const QuestionItem& item : items) {
    json j = {{"format_version", kQuestionFormatVersion},
              {"question_id", item.question_id},
              {"image_id", item.image_id},
              {"task", to_string(item.task)},
              {"prompt", item.prompt},
              {"source_triplet", triplet_json(item.source_triplet)},
              {"asked_relation", item.asked_relation},
              {"label", item.label},
              {"options", item.options},
              {"polarity", to_string(item.polarity)}};
    out << j.dump() << '\n';
  }
}

std::vector<QuestionItem> read_question_set(std::istream& in) {
  std::vector<QuestionItem> items;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (text::trim(raw).empty()) continue;
    json j;
    try {
      j = json::parse(raw);
    } catch (const json::parse_error& e) {
      throw ParseError(e.what(), line, e.byte);
    }
    if (field<int>(j, "format_version", line) != kQuestionFormatVersion) {
      throw ParseError("unsupported question format_version", line);
    }
    QuestionItem item;
    item.question_id = field<std::string>(j, "question_id", line);
    item.image_id = field<std::string>(j, "image_id", line);
    auto task = parse_task(field<std::string>(j, "task", line));
    if (!task) throw ParseError("unknown task", line);
    item.task = *task;
    item.prompt = field<std::string>(j, "prompt", line);
    const json st = field<json>(j, "source_triplet", line);
    item.source_triplet.subject = field<std::string>(st, "subject", line);
    item.source_triplet.relation = field<std::string>(st, "relation", line);
    item.source_triplet.object = field<std::string>(st, "object", line);
    item.source_triplet.image_id = field<std::string>(st, "image_id", line);
    if (auto c = st.find("category"); c != st.end() && c->is_string()) {
      item.source_triplet.category = parse_category(c->get<std::string>());
      if (!item.source_triplet.category) throw ParseError("unknown category", line);
    }
    item.asked_relation = field<std::string>(j, "asked_relation", line);
    item.label = field<std::string>(j, "label", line);
    item.options = field<std::vector<std::string>>(j, "options", line);
    const std::string polarity = field<std::string>(j, "polarity", line);
    if (polarity != "positive" && polarity != "negative") throw ParseError("unknown polarity", line);
    item.polarity = polarity == "positive" ? Polarity::Positive : Polarity::Negative;
    items.push_back(std::move(item));
  }
  return items;
}

std::string manifest_to_json(const DatasetManifest& m) {
  json counts = json::object();
  for (RelationCategory c : {RelationCategory::Perceptive, RelationCategory::Cognitive}) {
    json row = json::object();
    std::size_t total = 0;
    for (TaskType t : {TaskType::YN, TaskType::MCQ, TaskType::VQA}) {
      auto it = m.counts.find({c, t});
      const std::size_t n = it == m.counts.end() ? 0 : it->second;
      row[std::string(to_string(t))] = n;
      total += n;
    }
    row["total"] = total;
    counts[std::string(to_string(c))] = row;
  }
  json relation_types = json::object();
  for (RelationCategory c : {RelationCategory::Perceptive, RelationCategory::Cognitive}) {
    auto it = m.relation_types.find(c);
    relation_types[std::string(to_string(c))] = it == m.relation_types.end() ? 0 : it->second;
  }
  json j = {{"format_version", kQuestionFormatVersion},
            {"counts", counts},
            {"total", m.total},
            {"yn_positive", m.yn_positive},
            {"yn_negative", m.yn_negative},
            {"yn_ratio", m.yn_ratio()},
            {"relation_types", relation_types},
            {"image_count", m.image_count},
            {"skip_reasons", m.skip_reasons}};
  return j.dump(2);
}

}  // namespace relhal
