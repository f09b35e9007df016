#include "relhal/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <utility>

#include <nlohmann/json.hpp>

#include "relhal/parallel.hpp"
#include "relhal/text.hpp"

namespace relhal {

using nlohmann::json;

std::string_view to_string(EntropyBase base) noexcept { return base == EntropyBase::Two ? "2" : "e"; }

std::string_view to_string(DecodeMode mode) noexcept {
  switch (mode) {
    case DecodeMode::Baseline: return "baseline";
    case DecodeMode::DetectCalibrate: return "detect_calibrate";
    case DecodeMode::AlwaysCalibrate: return "always_calibrate";
  }
  return "unknown";
}

std::string_view to_string(CalibrationScore score) noexcept {
  return score == CalibrationScore::LogRatio ? "logratio" : "weighted_logratio";
}

std::optional<EntropyBase> parse_entropy_base(std::string_view name) {
  if (name == "2") return EntropyBase::Two;
  if (name == "e") return EntropyBase::E;
  return std::nullopt;
}

std::optional<DecodeMode> parse_decode_mode(std::string_view name) {
  if (name == "baseline") return DecodeMode::Baseline;
  if (name == "detect_calibrate") return DecodeMode::DetectCalibrate;
  if (name == "always_calibrate") return DecodeMode::AlwaysCalibrate;
  return std::nullopt;
}

std::optional<CalibrationScore> parse_calibration_score(std::string_view name) {
  if (name == "logratio") return CalibrationScore::LogRatio;
  if (name == "weighted_logratio") return CalibrationScore::WeightedLogRatio;
  return std::nullopt;
}

void DecodeConfig::validate() const {
  if (!std::isfinite(gamma) || gamma < 0.0) throw ValidationError("gamma must be finite and non-negative");
  if (!std::isfinite(alpha) || alpha <= 0.0) throw ValidationError("alpha must be positive");
  if (lambda < 1) throw ValidationError("lambda must be a positive integer");
  if (!(probability_floor > 0.0)) throw ValidationError("probability floor must be positive");
}

std::size_t DecodeConfig::contrast_layer(std::size_t n_layers) const {
  if (mid_layer) {
    if (*mid_layer > n_layers) {
      throw ValidationError("mid layer " + std::to_string(*mid_layer) + " exceeds n_layers " +
                            std::to_string(n_layers));
    }
    return *mid_layer;
  }
  if (lambda >= n_layers) {
    throw ValidationError("lambda " + std::to_string(lambda) + " must be below n_layers " +
                          std::to_string(n_layers));
  }
  return n_layers - lambda;
}

void validate_distribution(std::span<const double> dist) {
  double sum = 0.0;
  for (double p : dist) sum += p;
  if (dist.empty()) throw InvalidDistribution("empty distribution", sum);
  for (double p : dist) {
    if (!std::isfinite(p) || p < 0.0) throw InvalidDistribution("distribution has an invalid entry", sum);
  }
  if (std::abs(sum - 1.0) > kDistributionTolerance) {
    throw InvalidDistribution("distribution does not sum to 1", sum);
  }
}

namespace {

double log_base(double x, EntropyBase base) {
  return base == EntropyBase::Two ? std::log2(x) : std::log(x);
}

}  // namespace

EntropyReading entropy(std::span<const double> dist, EntropyBase base) {
  validate_distribution(dist);
  double value = 0.0;
  for (double p : dist) {
    if (p > 0.0) value -= p * log_base(p, base);
  }
  // Keep rounding noise inside the analytic bounds.
  value = std::clamp(value, 0.0, max_entropy(dist.size(), base));
  return {value, dist.size(), base};
}

double max_entropy(std::size_t n, EntropyBase base) { return log_base(static_cast<double>(n), base); }

bool detect(const EntropyReading& reading, double gamma) noexcept { return reading.value >= gamma; }

namespace {

void check_aligned(std::span<const double> final_dist, std::span<const double> mid_dist) {
  if (final_dist.size() != mid_dist.size()) {
    throw ValidationError("final and mid distributions differ in size (" + std::to_string(final_dist.size()) +
                          " vs " + std::to_string(mid_dist.size()) + ")");
  }
}

}  // namespace

Vector calibrate_scores(std::span<const double> final_dist, std::span<const double> mid_dist, double alpha,
                        double floor) {
  check_aligned(final_dist, mid_dist);
  if (!(alpha > 0) || !std::isfinite(alpha)) throw ValidationError("alpha must be positive and finite");
  Vector scores(final_dist.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i] = std::log((1.0 + alpha) * final_dist[i]) - std::log(alpha * std::max(mid_dist[i], floor));
  }
  return scores;
}

Vector weighted_logratio_scores(std::span<const double> final_dist, std::span<const double> mid_dist,
                                double alpha, double floor) {
  check_aligned(final_dist, mid_dist);
  if (!(alpha > 0) || !std::isfinite(alpha)) throw ValidationError("alpha must be positive and finite");
  Vector scores(final_dist.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i] = (1.0 + alpha) * std::log(final_dist[i]) - alpha * std::log(std::max(mid_dist[i], floor));
  }
  return scores;
}

DecodeOutcome decode_step(std::span<const LayerTrace> step_records, const TraceMeta& meta,
                          const DecodeConfig& config) {
  config.validate();
  if (step_records.empty()) throw ValidationError("no trace records for decode step");

  DecodeOutcome out;
  out.sample_id = step_records.front().sample_id;
  out.step = step_records.front().step;
  out.mode = config.mode;
  out.candidates = meta.candidates.tokens();
  out.final_layer = meta.n_layers;
  out.mid_layer = config.contrast_layer(meta.n_layers);

  auto layer_dist = [&](std::size_t layer) -> Vector {
    for (const LayerTrace& r : step_records) {
      if (r.layer == layer) {
        if (r.logits.size() != meta.candidates.size()) {
          throw ValidationError("sample " + out.sample_id + ": logits/candidate size mismatch at layer " +
                                std::to_string(layer));
        }
        return softmax(r.logits);
      }
    }
    throw ValidationError("sample " + out.sample_id + " step " + std::to_string(out.step) +
                          ": missing layer " + std::to_string(layer));
  };

  out.final_dist = layer_dist(out.final_layer);
  out.mid_dist = layer_dist(out.mid_layer);
  out.entropy = entropy(out.final_dist, config.entropy_base);

  const bool gate = detect(out.entropy, config.gamma);
  switch (config.mode) {
    case DecodeMode::Baseline:
      out.detected = false;
      out.calibrated = false;
      break;
    case DecodeMode::DetectCalibrate:
      out.detected = gate;
      out.calibrated = gate;
      break;
    case DecodeMode::AlwaysCalibrate:
      out.detected = gate;
      out.calibrated = true;
      break;
  }

  if (out.calibrated) {
    out.scores = config.score == CalibrationScore::LogRatio
                     ? calibrate_scores(out.final_dist, out.mid_dist, config.alpha, config.probability_floor)
                     : weighted_logratio_scores(out.final_dist, out.mid_dist, config.alpha,
                                                config.probability_floor);
    out.chosen_index = argmax_index(out.scores);
  } else {
    out.chosen_index = argmax_index(out.final_dist);
  }
  out.chosen_token = out.candidates[out.chosen_index];
  return out;
}

std::vector<DecodeOutcome> decode_sequence(std::span<const LayerTrace> records, const TraceMeta& meta,
                                           const DecodeConfig& config, std::size_t jobs) {
  config.validate();
  std::vector<std::string> sample_order;
  std::map<std::string, std::map<std::size_t, std::vector<LayerTrace>>> groups;
  for (const LayerTrace& r : records) {
    auto [it, inserted] = groups.try_emplace(r.sample_id);
    if (inserted) sample_order.push_back(r.sample_id);
    it->second[r.step].push_back(r);
  }

  std::vector<const std::vector<LayerTrace>*> work;
  for (const std::string& id : sample_order) {
    for (const auto& [step, step_records] : groups[id]) work.push_back(&step_records);
  }

  std::vector<DecodeOutcome> outcomes(work.size());
  parallel_for(work.size(), jobs, [&](std::size_t i) { outcomes[i] = decode_step(*work[i], meta, config); });
  return outcomes;
}

// ---------------------------------------------------------------------------

namespace {

json scores_json(const Vector& scores) {
  json arr = json::array();
  for (double s : scores) arr.push_back(std::isfinite(s) ? json(s) : json(nullptr));
  return arr;
}

}  // namespace

void write_outcomes(std::ostream& out, std::span<const DecodeOutcome> outcomes) {
  for (const DecodeOutcome& o : outcomes) {
    json j = {{"format_version", 1},
              {"sample_id", o.sample_id},
              {"step", o.step},
              {"mode", to_string(o.mode)},
              {"candidates", o.candidates},
              {"chosen_token", o.chosen_token},
              {"chosen_index", o.chosen_index},
              {"detected", o.detected},
              {"calibrated", o.calibrated},
              {"entropy", {{"value", o.entropy.value},
                           {"base", to_string(o.entropy.base)},
                           {"candidate_count", o.entropy.candidate_count}}},
              {"final_layer", o.final_layer},
              {"mid_layer", o.mid_layer},
              {"final_dist", o.final_dist},
              {"mid_dist", o.mid_dist},
              {"scores", scores_json(o.scores)}};
    out << j.dump() << '\n';
  }
}

std::vector<DecodeOutcome> read_outcomes(std::istream& in) {
  std::vector<DecodeOutcome> outcomes;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (text::trim(raw).empty()) continue;
    try {
      const json j = json::parse(raw);
      DecodeOutcome o;
      o.sample_id = j.at("sample_id").get<std::string>();
      o.step = j.at("step").get<std::size_t>();
      auto mode = parse_decode_mode(j.at("mode").get<std::string>());
      if (!mode) throw ParseError("unknown mode", line);
      o.mode = *mode;
      o.candidates = j.at("candidates").get<std::vector<std::string>>();
      o.chosen_token = j.at("chosen_token").get<std::string>();
      o.chosen_index = j.at("chosen_index").get<std::size_t>();
      o.detected = j.at("detected").get<bool>();
      o.calibrated = j.at("calibrated").get<bool>();
      const json& e = j.at("entropy");
      o.entropy.value = e.at("value").get<double>();
      auto base = parse_entropy_base(e.at("base").get<std::string>());
      if (!base) throw ParseError("unknown entropy base", line);
      o.entropy.base = *base;
      o.entropy.candidate_count = e.at("candidate_count").get<std::size_t>();
      o.final_layer = j.at("final_layer").get<std::size_t>();
      o.mid_layer = j.at("mid_layer").get<std::size_t>();
      o.final_dist = j.at("final_dist").get<Vector>();
      o.mid_dist = j.at("mid_dist").get<Vector>();
      for (const json& s : j.at("scores")) {
        o.scores.push_back(s.is_null() ? -std::numeric_limits<double>::infinity() : s.get<double>());
      }
      if (o.chosen_index >= o.candidates.size() || o.candidates[o.chosen_index] != o.chosen_token) {
        throw ParseError("chosen_token does not match chosen_index", line);
      }
      outcomes.push_back(std::move(o));
    } catch (const json::parse_error& e) {
      throw ParseError(e.what(), line, e.byte);
    } catch (const json::exception& e) {
      throw ParseError(e.what(), line);
    }
  }
  return outcomes;
}

}  // namespace relhal
