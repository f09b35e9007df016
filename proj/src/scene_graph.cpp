#include "relhal/scene_graph.hpp"

#include <algorithm>
#include <array>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "relhal/error.hpp"
#include "relhal/random.hpp"
#include "relhal/text.hpp"

namespace relhal {

using nlohmann::json;

std::string_view to_string(RelationCategory category) noexcept {
  return category == RelationCategory::Perceptive ? "perceptive" : "cognitive";
}

std::optional<RelationCategory> parse_category(std::string_view name) {
  const std::string n = text::normalize(name);
  if (n == "perceptive" || n == "perception") return RelationCategory::Perceptive;
  if (n == "cognitive" || n == "cognition") return RelationCategory::Cognitive;
  return std::nullopt;
}

std::string_view to_string(CategorySource source) noexcept {
  switch (source) {
    case CategorySource::Lexicon: return "lexicon";
    case CategorySource::Fallback: return "fallback";
    case CategorySource::Llm: return "llm";
  }
  return "unknown";
}

const SceneObject* SceneGraph::find_object(std::int64_t id) const {
  auto it = std::find_if(objects.begin(), objects.end(),
                         [id](const SceneObject& o) { return o.id == id; });
  return it == objects.end() ? nullptr : &*it;
}

namespace {

const json& require(const json& record, const char* field, std::size_t line) {
  auto it = record.find(field);
  if (it == record.end()) throw ParseError(std::string("missing field '") + field + "'", line);
  return *it;
}

std::int64_t require_int(const json& record, const char* field, std::size_t line) {
  const json& v = require(record, field, line);
  if (!v.is_number_integer()) {
    throw ParseError(std::string("field '") + field + "' must be an integer", line);
  }
  return v.get<std::int64_t>();
}

std::string require_string(const json& record, const char* field, std::size_t line) {
  const json& v = require(record, field, line);
  if (!v.is_string()) throw ParseError(std::string("field '") + field + "' must be a string", line);
  return v.get<std::string>();
}

const json& require_array(const json& record, const char* field, std::size_t line) {
  const json& v = require(record, field, line);
  if (!v.is_array()) throw ParseError(std::string("field '") + field + "' must be an array", line);
  return v;
}

}  // namespace

CorpusParseResult parse_scene_graphs(std::istream& in) {
  CorpusParseResult result;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (text::trim(raw).empty()) continue;
    json record;
    try {
      record = json::parse(raw);
    } catch (const json::parse_error& e) {
      throw ParseError(e.what(), line, e.byte);
    }
    if (!record.is_object()) throw ParseError("record must be a JSON object", line);

    SceneGraph graph;
    graph.image_id = require_string(record, "image_id", line);
    std::unordered_set<std::int64_t> ids;
    for (const json& obj : require_array(record, "objects", line)) {
      SceneObject o;
      o.id = require_int(obj, "id", line);
      o.name = text::normalize(require_string(obj, "name", line));
      if (o.name.empty()) throw ParseError("object " + std::to_string(o.id) + " has an empty name", line);
      if (!ids.insert(o.id).second) {
        throw ParseError("duplicate object id " + std::to_string(o.id), line);
      }
      graph.objects.push_back(std::move(o));
    }
    for (const json& rel : require_array(record, "relationships", line)) {
      SceneRelationship r;
      r.subject_id = require_int(rel, "subject_id", line);
      r.predicate = require_string(rel, "predicate", line);
      r.object_id = require_int(rel, "object_id", line);
      if (!ids.count(r.subject_id) || !ids.count(r.object_id)) {
        ++result.dangling_relationships;
        continue;
      }
      graph.relationships.push_back(std::move(r));
    }
    result.graphs.push_back(std::move(graph));
  }
  return result;
}

bool is_resolvable(const SceneGraph& graph, const SceneRelationship& rel) {
  const SceneObject* subject = graph.find_object(rel.subject_id);
  const SceneObject* object = graph.find_object(rel.object_id);
  if (subject == nullptr || object == nullptr) return false;
  if (text::normalize(rel.predicate).empty()) return false;
  return text::normalize(subject->name) != text::normalize(object->name);
}

std::vector<SemanticTriplet> extract_triplets(const SceneGraph& graph) {
  std::vector<SemanticTriplet> triplets;
  triplets.reserve(graph.relationships.size());
  for (const SceneRelationship& rel : graph.relationships) {
    if (!is_resolvable(graph, rel)) continue;
    triplets.push_back({text::normalize(graph.find_object(rel.subject_id)->name),
                        text::normalize(rel.predicate),
                        text::normalize(graph.find_object(rel.object_id)->name),
                        graph.image_id,
                        std::nullopt});
  }
  return triplets;
}

namespace {

std::string dedup_key(const SemanticTriplet& t) {
  std::string key = t.subject + '\x1f' + t.relation + '\x1f' + t.object + '\x1f' + t.image_id;
  if (t.category) key += to_string(*t.category);
  return key;
}

bool slot_matches(const std::string& pattern, const std::string& value) {
  return pattern == TripletPattern::kWildcard || pattern == value;
}

}  // namespace

bool TripletPattern::matches(const SemanticTriplet& t) const {
  return slot_matches(subject, t.subject) && slot_matches(relation, t.relation) &&
         slot_matches(object, t.object);
}

void FilterRuleSet::validate() const {
  if (per_relation_cap < 1) throw ValidationError("per_relation_cap must be at least 1");
  for (const TripletPattern& p : banned_triplets) {
    for (const std::string* slot : {&p.subject, &p.relation, &p.object}) {
      if (slot->empty() || *slot != text::normalize(*slot)) {
        throw ValidationError("malformed triplet pattern slot '" + *slot + "'");
      }
    }
  }
  for (const std::string& r : banned_relations) {
    if (r.empty() || r != text::normalize(r)) {
      throw ValidationError("malformed banned relation '" + r + "'");
    }
  }
}

FilterRuleSet parse_filter_rules(std::istream& in) {
  FilterRuleSet rules;
  for (const text::ConfigLine& entry : text::read_config_lines(in)) {
    const std::string& content = entry.content;
    const auto space = content.find_first_of(" \t");
    const std::string keyword = text::to_lower(content.substr(0, space));
    const std::string rest =
        space == std::string::npos ? std::string() : std::string(text::trim(content.substr(space)));
    if (keyword == "cap") {
      std::size_t used = 0;
      long long cap = 0;
      try {
        cap = std::stoll(rest, &used);
      } catch (const std::exception&) {
        throw ParseError("cap expects a positive integer", entry.line_no);
      }
      if (used != rest.size() || cap < 1) {
        throw ParseError("cap expects a positive integer", entry.line_no);
      }
      rules.per_relation_cap = static_cast<std::size_t>(cap);
    } else if (keyword == "relation") {
      std::string r = text::normalize(rest);
      if (r.empty()) throw ParseError("relation rule needs a relation", entry.line_no);
      rules.banned_relations.insert(std::move(r));
    } else if (keyword == "triplet") {
      auto slots = text::split(rest, '|');
      if (slots.size() != 3) {
        throw ParseError("triplet rule needs 'subject | relation | object'", entry.line_no);
      }
      TripletPattern p{text::normalize(slots[0]), text::normalize(slots[1]), text::normalize(slots[2])};
      if (p.subject.empty() || p.relation.empty() || p.object.empty()) {
        throw ParseError("triplet rule has an empty slot", entry.line_no);
      }
      rules.banned_triplets.push_back(std::move(p));
    } else {
      throw ParseError("unknown rule '" + keyword + "'", entry.line_no);
    }
  }
  return rules;
}

std::vector<SemanticTriplet> filter_triplets(std::span<const SemanticTriplet> triplets,
                                             const FilterRuleSet& rules, std::uint64_t seed) {
  rules.validate();

  std::vector<SemanticTriplet> kept;
  std::unordered_set<std::string> seen;
  for (const SemanticTriplet& t : triplets) {
    if (rules.banned_relations.count(t.relation)) continue;
    if (std::any_of(rules.banned_triplets.begin(), rules.banned_triplets.end(),
                    [&](const TripletPattern& p) { return p.matches(t); })) {
      continue;
    }
    if (!seen.insert(dedup_key(t)).second) continue;
    kept.push_back(t);
  }

  std::map<std::string, std::vector<std::size_t>> by_relation;
  for (std::size_t i = 0; i < kept.size(); ++i) by_relation[kept[i].relation].push_back(i);

  std::vector<bool> keep(kept.size(), true);
  for (auto& [relation, indices] : by_relation) {
    if (indices.size() <= rules.per_relation_cap) continue;
    Rng rng(mix_seed(seed, stable_hash(relation)));
    rng.shuffle(indices);
    for (std::size_t k = rules.per_relation_cap; k < indices.size(); ++k) keep[indices[k]] = false;
  }

  std::vector<SemanticTriplet> out;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (keep[i]) out.push_back(std::move(kept[i]));
  }
  return out;
}

CategoryLexicon CategoryLexicon::parse(std::istream& in) {
  CategoryLexicon lexicon;
  for (const text::ConfigLine& entry : text::read_config_lines(in)) {
    const auto eq = entry.content.rfind('=');
    if (eq == std::string::npos) throw ParseError("expected 'relation = category'", entry.line_no);
    const std::string relation = text::normalize(entry.content.substr(0, eq));
    const auto category = parse_category(entry.content.substr(eq + 1));
    if (relation.empty()) throw ParseError("empty relation", entry.line_no);
    if (!category) throw ParseError("unknown category", entry.line_no);
    lexicon.insert(relation, *category);
  }
  return lexicon;
}

void CategoryLexicon::insert(std::string_view relation, RelationCategory category) {
  entries_[text::normalize(relation)] = category;
}

std::optional<RelationCategory> CategoryLexicon::find(std::string_view relation) const {
  auto it = entries_.find(std::string(relation));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

namespace {

constexpr std::array<std::string_view, 40> kVerbForms = {
    "has",    "have",   "had",    "holds",  "hold",    "held",   "wears",  "wear",
    "wore",   "eats",   "eat",    "ate",    "rides",   "ride",   "rode",   "carries",
    "carry",  "carried", "watches", "watch", "plays",  "play",   "uses",   "use",
    "sits",   "sit",    "sat",    "stands", "stand",   "stood",  "drives", "drive",
    "throws", "throw",  "pulls",  "pull",   "pushes",  "push",   "covered", "parked"};

// Prepositions and nouns that merely end in "ing".
constexpr std::array<std::string_view, 5> kNotVerbs = {"during", "ceiling", "building", "clothing",
                                                       "railing"};

bool is_verb_like(std::string_view token) {
  if (std::find(kNotVerbs.begin(), kNotVerbs.end(), token) != kNotVerbs.end()) return false;
  if (token.size() > 4 && token.substr(token.size() - 3) == "ing") return true;
  return std::find(kVerbForms.begin(), kVerbForms.end(), token) != kVerbForms.end();
}

}  // namespace

RelationCategory fallback_category(std::string_view relation) {
  for (const std::string& token : text::split_words(relation)) {
    if (is_verb_like(token)) return RelationCategory::Cognitive;
  }
  return RelationCategory::Perceptive;
}

Categorization categorize_relation(std::string_view relation, const CategoryLexicon& lexicon) {
  if (auto hit = lexicon.find(relation)) return {*hit, CategorySource::Lexicon};
  return {fallback_category(relation), CategorySource::Fallback};
}

void categorize_triplets(std::span<SemanticTriplet> triplets, const CategoryLexicon& lexicon) {
  for (SemanticTriplet& t : triplets) t.category = categorize_relation(t.relation, lexicon).category;
}

}  // namespace relhal
