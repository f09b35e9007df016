#include "relhal/trace.hpp"

#include <cmath>
#include <set>
#include <tuple>

#include <nlohmann/json.hpp>

#include "relhal/text.hpp"

namespace relhal {

using nlohmann::json;

void write_trace(std::ostream& out, const TraceMeta& meta, std::span<const LayerTrace> records) {
  json header = {{"format_version", kTraceFormatVersion},
                 {"model", meta.model},
                 {"n_layers", meta.n_layers},
                 {"candidates", meta.candidates.tokens()}};
  out << header.dump() << '\n';
  for (const LayerTrace& r : records) {
    json j = {{"sample_id", r.sample_id}, {"step", r.step}, {"layer", r.layer}, {"logits", r.logits}};
    out << j.dump() << '\n';
  }
}

void write_trace_terminator(std::ostream& out, const std::string& reason) {
  out << json{{"terminator", true}, {"reason", reason}}.dump() << '\n';
}

namespace {

const json& need(const json& j, const char* field, std::size_t line, std::size_t index) {
  auto it = j.find(field);
  if (it == j.end()) throw TraceSchemaError("missing", line, index, field);
  return *it;
}

std::size_t need_count(const json& j, const char* field, std::size_t line, std::size_t index) {
  const json& v = need(j, field, line, index);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw TraceSchemaError("must be a non-negative integer", line, index, field);
  }
  return v.get<std::size_t>();
}

TraceMeta parse_meta(const json& j, std::size_t line) {
  auto meta_error = [line](const std::string& what, const char* field) {
    return ParseError("meta record, field '" + std::string(field) + "': " + what, line);
  };
  auto version = j.find("format_version");
  if (version == j.end() || !version->is_number_integer()) throw meta_error("missing", "format_version");
  if (version->get<int>() != kTraceFormatVersion) throw meta_error("unsupported version", "format_version");
  auto model = j.find("model");
  if (model == j.end() || !model->is_string()) throw meta_error("must be a string", "model");
  auto n_layers = j.find("n_layers");
  if (n_layers == j.end() || !n_layers->is_number_integer() || n_layers->get<long long>() < 0) {
    throw meta_error("must be a non-negative integer", "n_layers");
  }
  auto candidates = j.find("candidates");
  if (candidates == j.end() || !candidates->is_array()) throw meta_error("must be an array", "candidates");
  std::vector<std::string> tokens;
  for (const json& c : *candidates) {
    if (!c.is_string()) throw meta_error("entries must be strings", "candidates");
    tokens.push_back(c.get<std::string>());
  }
  try {
    return TraceMeta{model->get<std::string>(), n_layers->get<std::size_t>(), CandidateSet(std::move(tokens))};
  } catch (const ValidationError& e) {
    throw meta_error(e.what(), "candidates");
  }
}

}  // namespace

TraceFile read_trace(std::istream& in) {
  TraceFile file;
  bool have_meta = false;
  std::set<std::tuple<std::string, std::size_t, std::size_t>> seen;
  std::string raw;
  std::size_t line = 0;
  std::size_t index = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (text::trim(raw).empty()) continue;
    if (file.truncated) throw ParseError("content after terminator record", line);
    json j;
    try {
      j = json::parse(raw);
    } catch (const json::parse_error& e) {
      throw ParseError(e.what(), line, e.byte);
    }
    if (!j.is_object()) throw ParseError("trace line must be a JSON object", line);
    if (!have_meta) {
      file.meta = parse_meta(j, line);
      have_meta = true;
      continue;
    }
    if (auto term = j.find("terminator"); term != j.end()) {
      file.truncated = true;
      if (auto reason = j.find("reason"); reason != j.end() && reason->is_string()) {
        file.truncation_reason = reason->get<std::string>();
      }
      continue;
    }

    LayerTrace r;
    const json& sample = need(j, "sample_id", line, index);
    if (!sample.is_string()) throw TraceSchemaError("must be a string", line, index, "sample_id");
    r.sample_id = sample.get<std::string>();
    r.step = need_count(j, "step", line, index);
    r.layer = need_count(j, "layer", line, index);
    if (r.layer > file.meta.n_layers) {
      throw TraceSchemaError("layer " + std::to_string(r.layer) + " exceeds n_layers " +
                                 std::to_string(file.meta.n_layers),
                             line, index, "layer");
    }
    const json& logits = need(j, "logits", line, index);
    if (!logits.is_array() || logits.size() != file.meta.candidates.size()) {
      throw TraceSchemaError("must hold one value per candidate", line, index, "logits");
    }
    for (const json& v : logits) {
      if (!v.is_number() || !std::isfinite(v.get<double>())) {
        throw TraceSchemaError("values must be finite numbers", line, index, "logits");
      }
      r.logits.push_back(v.get<double>());
    }
    if (!seen.emplace(r.sample_id, r.step, r.layer).second) {
      throw TraceSchemaError("duplicate (sample_id, step, layer)", line, index, "layer");
    }
    file.records.push_back(std::move(r));
    ++index;
  }
  if (!have_meta) throw ParseError("trace has no meta record", line);
  return file;
}

std::vector<LayerTrace> trace_from_model(const ToyModel& model, std::span<const std::size_t> token_ids,
                                         const CandidateSet& candidates, const std::string& sample_id,
                                         std::size_t step, RestrictMode mode) {
  const auto indices = candidate_indices(model, candidates);
  const HiddenStates taps = model.forward_with_taps(token_ids);
  std::vector<LayerTrace> records;
  for (std::size_t layer = 0; layer < taps.layers.size(); ++layer) {
    const Vector logits = model.head(taps.last_position(layer));
    LayerTrace r{sample_id, step, layer, {}};
    if (mode == RestrictMode::Subset) {
      for (std::size_t i : indices) r.logits.push_back(logits[i]);
    } else {
      for (double p : restrict_logits(logits, indices, mode)) r.logits.push_back(std::log(p));
    }
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace relhal
