#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "relhal/error.hpp"
#include "relhal/lens.hpp"
#include "relhal/trace.hpp"

namespace relhal {

enum class EntropyBase { Two, E };

enum class DecodeMode {
  Baseline,         // argmax of the final layer, never calibrates
  DetectCalibrate,  // calibrates only when the entropy gate fires
  AlwaysCalibrate,  // calibrates every step (ungated contrast, for comparison)
};

enum class CalibrationScore {
  LogRatio,          // log((1+a) f) - log(a m)
  WeightedLogRatio,  // (1+a) log f - a log m; extension, not the gated method's formula
};

std::string_view to_string(EntropyBase base) noexcept;
std::string_view to_string(DecodeMode mode) noexcept;
std::string_view to_string(CalibrationScore score) noexcept;
std::optional<EntropyBase> parse_entropy_base(std::string_view name);
std::optional<DecodeMode> parse_decode_mode(std::string_view name);
std::optional<CalibrationScore> parse_calibration_score(std::string_view name);

inline constexpr double kDistributionTolerance = 1e-9;
inline constexpr double kDefaultProbabilityFloor = 1e-12;

struct DecodeConfig {
  double gamma = 0.9;
  double alpha = 0.1;
  std::size_t lambda = 2;
  EntropyBase entropy_base = EntropyBase::Two;
  DecodeMode mode = DecodeMode::DetectCalibrate;
  CalibrationScore score = CalibrationScore::LogRatio;
  // Overrides n - lambda as the contrast layer.
  std::optional<std::size_t> mid_layer;
  double probability_floor = kDefaultProbabilityFloor;

  void validate() const;
  // Contrast layer for a model with n_layers blocks.
  std::size_t contrast_layer(std::size_t n_layers) const;
};

class InvalidDistribution : public ValidationError {
 public:
  InvalidDistribution(const std::string& what, double sum)
      : ValidationError(what + " (sum " + std::to_string(sum) + ")"), sum_(sum) {}
  double sum() const noexcept { return sum_; }

 private:
  double sum_;
};

// Non-empty, finite, non-negative, sums to 1 within kDistributionTolerance.
void validate_distribution(std::span<const double> dist);

struct EntropyReading {
  double value = 0.0;
  std::size_t candidate_count = 0;
  EntropyBase base = EntropyBase::Two;
};

// -sum p log_base p with 0 log 0 = 0.
EntropyReading entropy(std::span<const double> dist, EntropyBase base);

// log_base(n), the entropy of the uniform distribution over n outcomes.
double max_entropy(std::size_t n, EntropyBase base);

// Inclusive gate: fires when the entropy reaches gamma.
bool detect(const EntropyReading& reading, double gamma) noexcept;

// score_i = log((1 + alpha) * final_i) - log(alpha * max(mid_i, floor)).
Vector calibrate_scores(std::span<const double> final_dist, std::span<const double> mid_dist, double alpha,
                        double floor = kDefaultProbabilityFloor);

// score_i = (1 + alpha) * log(final_i) - alpha * log(max(mid_i, floor)).
Vector weighted_logratio_scores(std::span<const double> final_dist, std::span<const double> mid_dist,
                                double alpha, double floor = kDefaultProbabilityFloor);

struct DecodeOutcome {
  std::string sample_id;
  std::size_t step = 0;
  DecodeMode mode = DecodeMode::DetectCalibrate;
  std::vector<std::string> candidates;
  std::string chosen_token;
  std::size_t chosen_index = 0;
  bool detected = false;
  bool calibrated = false;
  EntropyReading entropy;
  std::size_t final_layer = 0;
  std::size_t mid_layer = 0;
  Vector final_dist;
  Vector mid_dist;
  // Calibration scores; empty unless calibrated. -inf where final_i = 0.
  Vector scores;
};

/// One decoding step of the entropy-gated calibration over the records of a
/// single (sample_id, step). Distributions are the softmax of the stored
/// candidate logits at layer n (final) and at the contrast layer. In
/// baseline mode `detected` stays false; in always_calibrate mode it records
/// what the gate would have said.
DecodeOutcome decode_step(std::span<const LayerTrace> step_records, const TraceMeta& meta,
                          const DecodeConfig& config);

// Groups records by (sample_id, step) and decodes each group independently.
// Samples keep first-appearance order; steps ascend within a sample.
std::vector<DecodeOutcome> decode_sequence(std::span<const LayerTrace> records, const TraceMeta& meta,
                                           const DecodeConfig& config, std::size_t jobs = 1);

void write_outcomes(std::ostream& out, std::span<const DecodeOutcome> outcomes);
std::vector<DecodeOutcome> read_outcomes(std::istream& in);

}  // namespace relhal
