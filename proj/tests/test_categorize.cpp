#include <doctest.h>

#include <deque>
#include <fstream>
#include <sstream>

#include "relhal/categorize.hpp"
#include "relhal/error.hpp"
#include "support.hpp"

using namespace relhal;

namespace {

// Replays scripted replies; an empty string means a transport failure.
class ScriptedClient : public CompletionClient {
 public:
  std::deque<std::string> replies;
  std::vector<std::string> prompts;
  std::string complete(const std::string& prompt) override {
    prompts.push_back(prompt);
    if (replies.empty()) throw TransportError("no more replies");
    std::string r = replies.front();
    replies.pop_front();
    if (r.empty()) throw TransportError("connection reset");
    return r;
  }
};

CategorizePrompt shipped_prompt() {
  std::ifstream in(testsupport::source_path("data/categorize_prompt.txt"));
  REQUIRE(in);
  return CategorizePrompt::load(in);
}

CategoryLexicon small_lexicon() {
  std::istringstream in("on = perceptive\nbehind = perceptive\nholding = cognitive\nwatching = cognitive\n");
  return CategoryLexicon::parse(in);
}

}  // namespace

TEST_CASE("shipped prompt keeps the instructions and both slots") {
  auto prompt = shipped_prompt();
  CHECK(prompt.text().find("relation term classification assistant") != std::string::npos);
  auto rendered = prompt.render(in_context_examples(small_lexicon()), "behind");
  CHECK(rendered.find("Input: behind") != std::string::npos);
  CHECK(rendered.find("holding: Cognition") != std::string::npos);
  CHECK(rendered.find("on: Perception") != std::string::npos);
  CHECK(rendered.find('{') == std::string::npos);
  CHECK_THROWS_AS(CategorizePrompt("no slots here"), ValidationError);
  CHECK_THROWS_AS(CategorizePrompt("only {Input}"), ValidationError);
}

TEST_CASE("replies must be a single category word") {
  CHECK(parse_category_reply("Perception") == RelationCategory::Perceptive);
  CHECK(parse_category_reply("  cognition.\n") == RelationCategory::Cognitive);
  CHECK_FALSE(parse_category_reply("perceptual-ish"));
  CHECK_FALSE(parse_category_reply("Perception or Cognition"));
  CHECK_FALSE(parse_category_reply(""));
}

TEST_CASE("conforming replies resolve") {
  ScriptedClient client;
  client.replies = {"Perception", "Cognition"};
  std::vector<std::string> relations{"behind", "eating"};
  auto out = categorize_relations(relations, &client, shipped_prompt(), small_lexicon());
  REQUIRE(out.size() == 2);
  CHECK(out[0].category == RelationCategory::Perceptive);
  CHECK(out[0].source == CategorySource::Llm);
  CHECK(out[1].category == RelationCategory::Cognitive);
  CHECK(client.prompts[0].find("Input: behind") != std::string::npos);
}

TEST_CASE("non-conforming reply is retried once then left unresolved") {
  ScriptedClient client;
  client.replies = {"perceptual-ish", "perceptual-ish", "meh", "Cognition"};
  std::vector<std::string> relations{"behind", "eating"};
  auto out = categorize_relations(relations, &client, shipped_prompt(), small_lexicon());
  CHECK_FALSE(out[0].category);
  CHECK(out[0].note.find("non-conforming") != std::string::npos);
  CHECK(out[1].category == RelationCategory::Cognitive);
  CHECK(client.prompts.size() == 4);
}

TEST_CASE("transport failure leaves the relation unresolved") {
  ScriptedClient client;
  client.replies = {""};
  std::vector<std::string> relations{"behind"};
  auto out = categorize_relations(relations, &client, shipped_prompt(), small_lexicon());
  CHECK_FALSE(out[0].category);
  CHECK(out[0].note.find("transport") != std::string::npos);
}

TEST_CASE("offline mode falls back to the lexicon and says so") {
  std::vector<std::string> relations{"behind", "chasing"};
  auto out = categorize_relations(relations, nullptr, shipped_prompt(), small_lexicon());
  CHECK(out[0].category == RelationCategory::Perceptive);
  CHECK(out[0].source == CategorySource::Lexicon);
  CHECK(out[0].note == "offline");
  CHECK(out[1].category == RelationCategory::Cognitive);
  CHECK(out[1].source == CategorySource::Fallback);
}
