#include <doctest.h>

#include <fstream>
#include <map>
#include <sstream>

#include "relhal/error.hpp"
#include "relhal/metrics.hpp"
#include "relhal/random.hpp"
#include "relhal/trace.hpp"
#include "support.hpp"

using namespace relhal;

namespace {

TraceMeta yn_meta(std::size_t n_layers = 4) { return {"test", n_layers, CandidateSet({"yes", "no"})}; }

TraceFile read_string(const std::string& s) {
  std::istringstream in(s);
  return read_trace(in);
}

const std::string kMeta = R"({"format_version": 1, "model": "m", "n_layers": 2, "candidates": ["yes", "no"]})";

}  // namespace

TEST_CASE("trace round-trip is lossless") {
  Rng rng(17);
  std::vector<LayerTrace> records;
  for (int i = 0; i < 100; ++i) {
    LayerTrace r{"s" + std::to_string(i / 5), 0, static_cast<std::size_t>(i % 5),
                 {}};
    for (int k = 0; k < 2; ++k) r.logits.push_back((rng.uniform01() - 0.5) * std::pow(10.0, rng.uniform_index(20) - 10.0));
    records.push_back(r);
  }
  std::ostringstream out;
  write_trace(out, yn_meta(), records);
  auto back = read_string(out.str());
  CHECK(back.records == records);
  CHECK(back.meta.n_layers == 4);
  CHECK(back.meta.candidates == yn_meta().candidates);
  CHECK_FALSE(back.truncated);
}

TEST_CASE("layer beyond n_layers is rejected with index and field") {
  const std::string s = kMeta + "\n" + R"({"sample_id": "a", "step": 0, "layer": 0, "logits": [0, 1]})" + "\n" +
                        R"({"sample_id": "a", "step": 0, "layer": 3, "logits": [0, 1]})" + "\n";
  try {
    read_string(s);
    FAIL("expected TraceSchemaError");
  } catch (const TraceSchemaError& e) {
    CHECK(e.record_index() == 1);
    CHECK(e.field() == "layer");
    CHECK(e.line() == 3);
  }
}

TEST_CASE("schema violations are reported") {
  auto bad = [](const std::string& record) { return kMeta + "\n" + record + "\n"; };
  CHECK_THROWS_AS(read_string(bad(R"({"sample_id": "a", "step": 0, "layer": 0, "logits": [0]})")), TraceSchemaError);
  CHECK_THROWS_AS(read_string(bad(R"({"sample_id": "a", "step": 0, "layer": 0, "logits": [0, null]})")),
                  TraceSchemaError);
  CHECK_THROWS_AS(read_string(bad(R"({"step": 0, "layer": 0, "logits": [0, 1]})")), TraceSchemaError);
  CHECK_THROWS_AS(read_string(bad(R"({"sample_id": "a", "step": -1, "layer": 0, "logits": [0, 1]})")),
                  TraceSchemaError);
  CHECK_THROWS_AS(read_string(bad(R"({"sample_id": "a", "step": 0, "layer": 0, "logits": [0, 1]})"
                                  "\n"
                                  R"({"sample_id": "a", "step": 0, "layer": 0, "logits": [2, 1]})")),
                  TraceSchemaError);
  CHECK_THROWS_AS(read_string(bad("{not json")), ParseError);
  CHECK_THROWS_AS(read_string(""), ParseError);
  CHECK_THROWS_AS(read_string(R"({"format_version": 2, "model": "m", "n_layers": 2, "candidates": ["a"]})"),
                  ParseError);
  CHECK_THROWS_AS(read_string(R"({"format_version": 1, "model": "m", "n_layers": 2, "candidates": ["a", "a"]})"),
                  ParseError);
}

TEST_CASE("exporter output for a two-layer model validates with three rows per step") {
  std::ifstream in(testsupport::source_path("tests/data/exporter_2layer.jsonl"));
  REQUIRE(in);
  auto trace = read_trace(in);
  CHECK(trace.meta.n_layers == 2);
  std::map<std::pair<std::string, std::size_t>, std::size_t> rows;
  for (const auto& r : trace.records) ++rows[{r.sample_id, r.step}];
  CHECK(rows.size() == 2);
  for (const auto& [key, n] : rows) CHECK(n == trace.meta.n_layers + 1);

  std::ifstream resp(testsupport::source_path("tests/data/exporter_responses.jsonl"));
  auto responses = read_responses(resp);
  REQUIRE(responses.size() == 2);
  CHECK(responses[0].question_id == "q-1");
  CHECK(responses[1].response == "No, it is not.");
}

TEST_CASE("terminator marks a truncated export") {
  std::ifstream in(testsupport::source_path("tests/data/exporter_2layer_truncated.jsonl"));
  REQUIRE(in);
  auto trace = read_trace(in);
  CHECK(trace.truncated);
  CHECK(trace.truncation_reason == "out of memory at q-2");
  CHECK(trace.records.size() == 3);

  std::ostringstream out;
  write_trace(out, yn_meta(), {});
  write_trace_terminator(out, "stopped");
  CHECK(read_string(out.str()).truncated);
  CHECK_THROWS_AS(read_string(out.str() + R"({"sample_id": "a", "step": 0, "layer": 0, "logits": [0, 1]})" + "\n"),
                  ParseError);
}

TEST_CASE("toy-model traces hold the head logits at every layer") {
  ToyModelConfig c;
  c.vocab = {"<unk>", "yes", "no", "boy"};
  c.n_layers = 3;
  ToyModel model(c);
  std::vector<std::size_t> ids{3, 0, 3};
  CandidateSet yn({"yes", "no"});
  auto records = trace_from_model(model, ids, yn, "s", 0);
  REQUIRE(records.size() == 4);
  auto taps = model.forward_with_taps(ids);
  for (const auto& r : records) {
    auto full = model.head(taps.last_position(r.layer));
    CHECK(r.logits == Vector{full[1], full[2]});
  }
  CHECK(softmax(records.back().logits) == next_token_distribution(model, ids, yn));

  auto renorm = trace_from_model(model, ids, yn, "s", 0, RestrictMode::Renormalize);
  for (std::size_t i = 0; i < renorm.size(); ++i) {
    auto a = softmax(renorm[i].logits), b = softmax(records[i].logits);
    CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-12));
  }
}
