#include "relhal/categorize.hpp"

#include <cctype>
#include <sstream>

#include "relhal/error.hpp"
#include "relhal/text.hpp"

namespace relhal {

CategorizePrompt::CategorizePrompt(std::string tmpl) : template_(std::move(tmpl)) {
  for (std::string_view slot : {kExamplesSlot, kInputSlot}) {
    if (template_.find("{" + std::string(slot) + "}") == std::string::npos) {
      throw ValidationError("categorization prompt is missing the {" + std::string(slot) + "} slot");
    }
  }
}

CategorizePrompt CategorizePrompt::load(std::istream& in) {
  std::stringstream buffer;
  buffer << in.rdbuf();
  return CategorizePrompt(buffer.str());
}

std::string CategorizePrompt::render(std::string_view examples, std::string_view relation) const {
  return text::substitute(text::substitute(template_, kExamplesSlot, examples), kInputSlot, relation);
}

std::string in_context_examples(const CategoryLexicon& lexicon, std::size_t per_category) {
  std::string out;
  std::size_t perceptive = 0, cognitive = 0;
  for (const auto& [relation, category] : lexicon.entries()) {
    std::size_t& used = category == RelationCategory::Perceptive ? perceptive : cognitive;
    if (used == per_category) continue;
    ++used;
    out += relation + ": " + (category == RelationCategory::Perceptive ? "Perception" : "Cognition") + "\n";
  }
  return out;
}

std::optional<RelationCategory> parse_category_reply(std::string_view reply) {
  std::string_view r = text::trim(reply);
  while (!r.empty() && std::ispunct(static_cast<unsigned char>(r.back()))) r.remove_suffix(1);
  const std::string lowered = text::to_lower(text::trim(r));
  if (lowered == "perception") return RelationCategory::Perceptive;
  if (lowered == "cognition") return RelationCategory::Cognitive;
  return std::nullopt;
}

std::vector<CategoryAssignment> categorize_relations(std::span<const std::string> relations,
                                                     CompletionClient* client, const CategorizePrompt& prompt,
                                                     const CategoryLexicon& lexicon) {
  std::vector<CategoryAssignment> out;
  const std::string examples = in_context_examples(lexicon);
  for (const std::string& raw : relations) {
    CategoryAssignment a;
    a.relation = text::normalize(raw);
    if (client == nullptr) {
      const Categorization c = categorize_relation(a.relation, lexicon);
      a.category = c.category;
      a.source = c.source;
      a.note = "offline";
      out.push_back(std::move(a));
      continue;
    }
    const std::string rendered = prompt.render(examples, a.relation);
    for (int attempt = 0; attempt < 2 && !a.category; ++attempt) {
      try {
        const std::string reply = client->complete(rendered);
        a.category = parse_category_reply(reply);
        if (!a.category) a.note = "non-conforming reply: " + std::string(text::trim(reply));
      } catch (const TransportError& e) {
        a.note = std::string("transport failure: ") + e.what();
        break;
      }
    }
    if (a.category) a.note.clear();
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace relhal
