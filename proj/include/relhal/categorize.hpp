#pragma once

#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "relhal/clients.hpp"
#include "relhal/scene_graph.hpp"

namespace relhal {

inline constexpr std::string_view kExamplesSlot = "In-context examples";
inline constexpr std::string_view kInputSlot = "Input";

// Prompt with `{In-context examples}` and `{Input}` slots.
class CategorizePrompt {
 public:
  explicit CategorizePrompt(std::string tmpl);
  static CategorizePrompt load(std::istream& in);

  std::string render(std::string_view examples, std::string_view relation) const;
  const std::string& text() const noexcept { return template_; }

 private:
  std::string template_;
};

// A few "relation: Perception" lines per category drawn from the lexicon.
std::string in_context_examples(const CategoryLexicon& lexicon, std::size_t per_category = 3);

// Accepts exactly "Perception" or "Cognition" (any case, surrounding
// whitespace and trailing punctuation ignored).
std::optional<RelationCategory> parse_category_reply(std::string_view reply);

struct CategoryAssignment {
  std::string relation;
  std::optional<RelationCategory> category;  // nullopt when unresolved
  CategorySource source = CategorySource::Llm;
  std::string note;
};

/// Asks the completion client for every relation; a non-conforming reply is
/// retried once and then left unresolved, as is a transport failure. With no
/// client (offline) the lexicon-plus-fallback categorization is used and
/// each assignment says so.
std::vector<CategoryAssignment> categorize_relations(std::span<const std::string> relations,
                                                     CompletionClient* client, const CategorizePrompt& prompt,
                                                     const CategoryLexicon& lexicon);

}  // namespace relhal
