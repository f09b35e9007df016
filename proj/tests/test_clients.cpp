#include <doctest.h>

#include <atomic>

#include <nlohmann/json.hpp>

#include "mock_server.hpp"
#include "relhal/clients.hpp"
#include "relhal/error.hpp"

using namespace relhal;
using nlohmann::json;

namespace {

// Entailment in both directions only between a label and its paraphrase.
void nli_handler(const httplib::Request& req, httplib::Response& res) {
  const json body = json::parse(req.body);
  const std::string p = body.at("premise"), h = body.at("hypothesis");
  if (p == "boom") {
    res.status = 500;
    return;
  }
  if (p == "garbage") {
    res.set_content("not json", "text/plain");
    return;
  }
  int cls = 0;
  if (p == "seven") cls = 7;
  const bool pair = (p == "sunlight is shining on train" && h == "sunlight is illuminating train") ||
                    (h == "sunlight is shining on train" && p == "sunlight is illuminating train");
  if (pair) cls = 2;
  res.set_content(json{{"class_index", cls}}.dump(), "application/json");
}

}  // namespace

TEST_CASE("endpoint URLs parse") {
  auto e = HttpEndpoint::parse("http://localhost:8080/v1/nli");
  CHECK(e.origin == "http://localhost:8080");
  CHECK(e.path == "/v1/nli");
  CHECK(HttpEndpoint::parse("http://host").path == "/");
  CHECK_THROWS_AS(HttpEndpoint::parse("localhost:8080"), ValidationError);
  CHECK_THROWS_AS(HttpEndpoint::parse("ftp://host/x"), ValidationError);
  CHECK_THROWS_AS(HttpEndpoint::parse("http:///x"), ValidationError);
}

TEST_CASE("entailment client speaks the wire contract") {
  testsupport::MockServer server(nli_handler);
  HttpEntailmentClient client(server.url("/nli"));
  CHECK(client.classify("sunlight is shining on train", "sunlight is illuminating train") == 2);
  CHECK(client.classify("bear is reading book", "bear is sitting on book") == 0);
  CHECK_THROWS_AS(client.classify("boom", "x"), TransportError);
  CHECK_THROWS_AS(client.classify("garbage", "x"), TransportError);
  CHECK_THROWS_AS(client.classify("seven", "x"), TransportError);
}

TEST_CASE("bidirectional match through a live service") {
  testsupport::MockServer server(nli_handler);
  HttpEntailmentClient client(server.url());
  QuestionItem q;
  q.task = TaskType::VQA;
  q.source_triplet = {"sunlight", "shining on", "train", "img", RelationCategory::Cognitive};
  q.label = "sunlight is shining on train";
  auto v = match_answer(q, "sunlight is illuminating train", &client, {});
  CHECK(v.scored);
  CHECK(v.correct);
  CHECK(v.method == MatchMethod::Entailment);
}

TEST_CASE("unreachable service leaves items unscored") {
  std::string dead_url;
  {
    testsupport::MockServer server(nli_handler);
    dead_url = server.url();
  }
  HttpEntailmentClient client(dead_url, std::chrono::seconds(2));
  CHECK_THROWS_AS(client.classify("a", "b"), TransportError);
  QuestionItem q;
  q.task = TaskType::VQA;
  q.source_triplet = {"cup", "on", "table", "img", RelationCategory::Perceptive};
  q.label = "cup is on table";
  CHECK_FALSE(match_answer(q, "cup is on table", &client, {}).scored);
}

TEST_CASE("completion client sends a chat request and reads the reply") {
  std::atomic<int> calls{0};
  testsupport::MockServer server([&](const httplib::Request& req, httplib::Response& res) {
    ++calls;
    const json body = json::parse(req.body);
    CHECK(body["model"] == "tiny");
    CHECK(body["temperature"] == 0);
    CHECK(body["messages"][0]["role"] == "user");
    const std::string prompt = body["messages"][0]["content"];
    if (prompt == "broken") {
      res.set_content(R"({"choices": []})", "application/json");
      return;
    }
    res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", "Echo: " + prompt}}}}}}}.dump(),
                    "application/json");
  });
  HttpCompletionClient client(server.url("/v1/chat/completions"), "tiny");
  CHECK(client.complete("hello") == "Echo: hello");
  CHECK_THROWS_AS(client.complete("broken"), TransportError);
  CHECK(calls == 2);
}
