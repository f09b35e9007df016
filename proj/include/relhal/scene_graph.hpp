#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace relhal {

enum class RelationCategory { Perceptive, Cognitive };

std::string_view to_string(RelationCategory category) noexcept;

// Accepts "perceptive"/"perception" and "cognitive"/"cognition", any case.
std::optional<RelationCategory> parse_category(std::string_view name);

struct SceneObject {
  std::int64_t id = 0;
  std::string name;
};

struct SceneRelationship {
  std::int64_t subject_id = 0;
  std::string predicate;
  std::int64_t object_id = 0;
};

struct SceneGraph {
  std::string image_id;
  std::vector<SceneObject> objects;
  std::vector<SceneRelationship> relationships;

  const SceneObject* find_object(std::int64_t id) const;
};

struct SemanticTriplet {
  std::string subject;
  std::string relation;
  std::string object;
  std::string image_id;
  std::optional<RelationCategory> category;

  bool operator==(const SemanticTriplet&) const = default;
};

struct CorpusParseResult {
  std::vector<SceneGraph> graphs;
  // Relationships dropped because an endpoint id did not resolve.
  std::size_t dangling_relationships = 0;
};

/// Reads the line-delimited corpus format, one image record per line:
///
///   {"image_id": "...", "objects": [{"id": 1, "name": "boy"}],
///    "relationships": [{"subject_id": 1, "predicate": "behind", "object_id": 2}]}
///
/// Blank lines are ignored. Object names are normalized on read and must be
/// non-empty; object ids must be unique within a record. Relationships whose
/// endpoints do not resolve are dropped and counted. Throws ParseError with
/// the 1-based line number and, for JSON syntax errors, the byte offset.
CorpusParseResult parse_scene_graphs(std::istream& in);

// A relationship yields a triplet when both endpoints resolve, the
// normalized predicate is non-empty, and subject and object names differ.
bool is_resolvable(const SceneGraph& graph, const SceneRelationship& rel);

// One triplet per resolvable relationship, corpus order, no dedup.
std::vector<SemanticTriplet> extract_triplets(const SceneGraph& graph);

struct TripletPattern {
  static constexpr std::string_view kWildcard = "*";

  std::string subject;
  std::string relation;
  std::string object;

  bool matches(const SemanticTriplet& t) const;
};

struct FilterRuleSet {
  std::vector<TripletPattern> banned_triplets;
  std::set<std::string> banned_relations;
  std::size_t per_relation_cap = std::numeric_limits<std::size_t>::max();

  void validate() const;
};

/// Filter rules, plain text:
///
///   cap 200
///   relation has
///   triplet man | wearing | shirt
///   triplet * | on | face
FilterRuleSet parse_filter_rules(std::istream& in);

/// Drops banned triplets and relations, removes exact duplicates (first
/// occurrence kept), then subsamples every relation above the cap. The kept
/// subset for a relation is a seeded uniform choice and the output keeps
/// input order, so the result depends only on (input, rules, seed).
std::vector<SemanticTriplet> filter_triplets(std::span<const SemanticTriplet> triplets,
                                             const FilterRuleSet& rules, std::uint64_t seed);

class CategoryLexicon {
 public:
  // Lines of the form `relation = perceptive` or `relation = cognitive`.
  static CategoryLexicon parse(std::istream& in);

  void insert(std::string_view relation, RelationCategory category);
  std::optional<RelationCategory> find(std::string_view relation) const;
  std::size_t size() const noexcept { return entries_.size(); }
  const std::map<std::string, RelationCategory>& entries() const noexcept { return entries_; }

 private:
  std::map<std::string, RelationCategory> entries_;
};

enum class CategorySource { Lexicon, Fallback, Llm };

std::string_view to_string(CategorySource source) noexcept;

struct Categorization {
  RelationCategory category;
  CategorySource source;
};

// Cognitive when any token ends in "ing" or is a known verb form,
// Perceptive otherwise.
RelationCategory fallback_category(std::string_view relation);

Categorization categorize_relation(std::string_view relation, const CategoryLexicon& lexicon);

// Fills in the category of every triplet.
void categorize_triplets(std::span<SemanticTriplet> triplets, const CategoryLexicon& lexicon);

}  // namespace relhal
