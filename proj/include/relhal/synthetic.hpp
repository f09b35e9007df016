#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "relhal/calibrate.hpp"
#include "relhal/questions.hpp"
#include "relhal/trace.hpp"

namespace relhal::synthetic {

// Binary yes/no logits (log p, log(1 - p)) putting probability p on `index`.
Vector binary_logits(double p, std::size_t index);

// Probability p >= 0.5 whose binary entropy (base 2) equals `target` in [0, 1].
double binary_probability_for_entropy(double target);

// What the layer n - lambda says in a planted case.
enum class MidSignal {
  // The contrast layer puts most mass on the true answer.
  FavorsTruth,
  // The contrast layer is even more sure of the wrong answer than the final
  // layer, so the true answer is the one that gained mass late.
  TruthGainsLate,
};

struct PlantedSuiteConfig {
  std::size_t planted = 100;
  std::size_t confident = 900;
  std::size_t n_layers = 40;
  std::size_t lambda = 2;
  MidSignal signal = MidSignal::FavorsTruth;
  std::uint64_t seed = 1;
};

/// Yes/no decode traces mixing confident-correct samples (final-layer truth
/// probability in [0.9, 0.99]) with planted hallucinations whose final layer
/// puts [0.52, 0.62] on the wrong answer, i.e. binary entropy above 0.95.
/// Samples are shuffled; every sample has one step and layers 0..n.
struct PlantedSuite {
  TraceMeta meta;
  std::vector<LayerTrace> records;
  std::vector<QuestionItem> questions;  // Y/N items labelled with the truth
  std::vector<std::string> sample_ids;
  std::vector<bool> planted;
  std::vector<std::size_t> truth_index;

  std::size_t planted_count() const;
};

PlantedSuite make_planted_suite(const PlantedSuiteConfig& config);

struct LayerRampConfig {
  std::size_t per_group = 50;
  std::size_t n_layers = 40;
  std::size_t flat_until = 20;
  std::uint64_t seed = 7;
};

/// Binary traces where the chosen answer's probability is `start` through
/// layer flat_until and then rises linearly to `peak` at layer n.
/// Hallucinated samples peak in [0.6, 0.75], correct ones in [0.9, 0.99].
struct LayerRampSuite {
  TraceMeta meta;
  std::vector<LayerTrace> records;
  std::vector<DecodeOutcome> outcomes;  // baseline outcomes, chosen = index 0
  std::map<std::string, bool> hallucinated;
  std::vector<double> start;  // per sample, aligned with outcomes
  std::vector<double> peak;
};

// Probability at `layer` for a ramp from `start` to `peak`.
double ramp_probability(double start, double peak, std::size_t layer, std::size_t flat_until, std::size_t n_layers);

LayerRampSuite make_layer_ramp_suite(const LayerRampConfig& config);

/// Binary final distributions placed in entropy bands of width 0.2 on
/// [0, 1], with hallucinated/correct counts per band taken from `plan`
/// (band index -> {hallucinated, correct}).
struct EntropyBandSuite {
  std::vector<Vector> final_dists;
  std::vector<bool> hallucinated;
};

EntropyBandSuite make_entropy_band_suite(const std::vector<std::pair<std::size_t, std::size_t>>& plan,
                                         std::uint64_t seed);

}  // namespace relhal::synthetic
