#pragma once

#include <cstddef>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "relhal/error.hpp"
#include "relhal/lens.hpp"

namespace relhal {

inline constexpr int kTraceFormatVersion = 1;

struct TraceMeta {
  std::string model;
  std::size_t n_layers = 0;
  CandidateSet candidates{{"yes", "no"}};
};

// Candidate logits read at one tap point for one generated token.
struct LayerTrace {
  std::string sample_id;
  std::size_t step = 0;
  std::size_t layer = 0;
  Vector logits;

  bool operator==(const LayerTrace&) const = default;
};

struct TraceFile {
  TraceMeta meta;
  std::vector<LayerTrace> records;
  // Set when the writer ended the file with a terminator record.
  bool truncated = false;
  std::string truncation_reason;
};

class TraceSchemaError : public ParseError {
 public:
  TraceSchemaError(const std::string& what, std::size_t line, std::size_t record_index, std::string field)
      : ParseError("record " + std::to_string(record_index) + ", field '" + field + "': " + what, line),
        record_index_(record_index),
        field_(std::move(field)) {}

  std::size_t record_index() const noexcept { return record_index_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::size_t record_index_;
  std::string field_;
};

/// Line-delimited trace format. The first line is the meta record
///
///   {"format_version": 1, "model": "...", "n_layers": 2, "candidates": ["yes", "no"]}
///
/// and every following line is one LayerTrace
///
///   {"sample_id": "...", "step": 0, "layer": 1, "logits": [0.25, -1.5]}
///
/// Logits are written with shortest round-trip formatting, so finite values
/// survive a write/read cycle exactly. A writer that has to stop early ends
/// the file with {"terminator": true, "reason": "..."}.
void write_trace(std::ostream& out, const TraceMeta& meta, std::span<const LayerTrace> records);
void write_trace_terminator(std::ostream& out, const std::string& reason);

/// Validates every record against the meta record: layer within
/// [0, n_layers], one logit per candidate, all logits finite and at most one
/// record per (sample_id, step, layer). Record indices in errors are 0-based
/// and exclude the meta line.
TraceFile read_trace(std::istream& in);

// Records for step `step` of one sample: one per layer of the toy model,
// holding the head's logits restricted to the candidates. In renormalize
// mode the stored values are the log of the renormalized full-vocabulary
// probabilities, so a softmax over them gives that distribution back.
std::vector<LayerTrace> trace_from_model(const ToyModel& model, std::span<const std::size_t> token_ids,
                                         const CandidateSet& candidates, const std::string& sample_id,
                                         std::size_t step = 0, RestrictMode mode = RestrictMode::Subset);

}  // namespace relhal
