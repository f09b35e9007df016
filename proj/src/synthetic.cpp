#include "relhal/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "relhal/error.hpp"
#include "relhal/random.hpp"

namespace relhal::synthetic {

namespace {

const CandidateSet& yes_no() {
  static const CandidateSet candidates({"yes", "no"});
  return candidates;
}

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform01(); }

double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

}  // namespace

Vector binary_logits(double p, std::size_t index) {
  Vector logits{std::log(p), std::log(1.0 - p)};
  if (index == 1) std::swap(logits[0], logits[1]);
  return logits;
}

double binary_probability_for_entropy(double target) {
  if (target < 0.0 || target > 1.0) throw ValidationError("binary entropy must lie in [0, 1]");
  // Entropy decreases on [0.5, 1].
  double lo = 0.5, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (binary_entropy(mid) > target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::size_t PlantedSuite::planted_count() const {
  return static_cast<std::size_t>(std::count(planted.begin(), planted.end(), true));
}

PlantedSuite make_planted_suite(const PlantedSuiteConfig& config) {
  if (config.lambda == 0 || config.lambda >= config.n_layers) {
    throw ValidationError("planted suite needs 0 < lambda < n_layers");
  }
  Rng rng(config.seed);
  const std::size_t total = config.planted + config.confident;
  std::vector<bool> kinds(total, false);
  std::fill(kinds.begin(), kinds.begin() + static_cast<std::ptrdiff_t>(config.planted), true);
  rng.shuffle(kinds);

  PlantedSuite suite;
  suite.meta = {"synthetic-planted", config.n_layers, yes_no()};
  const std::size_t n = config.n_layers;
  const std::size_t mid = n - config.lambda;
  const std::size_t flat = n / 2;

  for (std::size_t s = 0; s < total; ++s) {
    const std::string id = "planted-" + std::to_string(s);
    const std::size_t truth = rng.uniform_index(2);
    const std::size_t wrong = 1 - truth;
    const bool planted = kinds[s];

    // Probability of the true answer at each layer.
    std::vector<double> p_truth(n + 1, 0.5);
    if (!planted) {
      const double final_p = uniform(rng, 0.9, 0.99);
      for (std::size_t j = flat + 1; j <= n; ++j) {
        p_truth[j] = 0.5 + (final_p - 0.5) * static_cast<double>(j - flat) / static_cast<double>(n - flat);
      }
    } else {
      const double final_wrong = uniform(rng, 0.52, 0.62);
      const double mid_p = config.signal == MidSignal::FavorsTruth ? uniform(rng, 0.75, 0.9)
                                                                   : 1.0 - uniform(rng, 0.8, 0.9);
      for (std::size_t j = flat + 1; j <= mid; ++j) {
        p_truth[j] = 0.5 + (mid_p - 0.5) * static_cast<double>(j - flat) / static_cast<double>(mid - flat);
      }
      for (std::size_t j = mid + 1; j < n; ++j) p_truth[j] = mid_p;
      p_truth[n] = 1.0 - final_wrong;
    }
    for (std::size_t j = 0; j <= n; ++j) {
      suite.records.push_back({id, 0, j, binary_logits(p_truth[j], truth)});
    }

    QuestionItem q;
    q.question_id = id;
    q.image_id = "synthetic";
    q.task = TaskType::YN;
    q.source_triplet = {"boy", "eating", "pizza", "synthetic", RelationCategory::Cognitive};
    q.asked_relation = "eating";
    q.prompt = "Is the boy eating pizza in the photo?";
    q.label = yes_no()[truth];
    q.polarity = truth == 0 ? Polarity::Positive : Polarity::Negative;
    if (q.polarity == Polarity::Negative) q.asked_relation = "throwing";
    suite.questions.push_back(std::move(q));
    suite.sample_ids.push_back(id);
    suite.planted.push_back(planted);
    suite.truth_index.push_back(truth);
    (void)wrong;
  }
  return suite;
}

double ramp_probability(double start, double peak, std::size_t layer, std::size_t flat_until,
                        std::size_t n_layers) {
  if (layer <= flat_until) return start;
  return start + (peak - start) * static_cast<double>(layer - flat_until) /
                     static_cast<double>(n_layers - flat_until);
}

LayerRampSuite make_layer_ramp_suite(const LayerRampConfig& config) {
  if (config.flat_until >= config.n_layers) throw ValidationError("flat_until must be below n_layers");
  Rng rng(config.seed);
  LayerRampSuite suite;
  suite.meta = {"synthetic-layer-ramp", config.n_layers, yes_no()};
  for (std::size_t s = 0; s < 2 * config.per_group; ++s) {
    const bool hallucinated = s % 2 == 0;
    const std::string id = "ramp-" + std::to_string(s);
    const double start = 0.5;
    const double peak = hallucinated ? uniform(rng, 0.6, 0.75) : uniform(rng, 0.9, 0.99);
    for (std::size_t j = 0; j <= config.n_layers; ++j) {
      const double p = ramp_probability(start, peak, j, config.flat_until, config.n_layers);
      suite.records.push_back({id, 0, j, binary_logits(p, 0)});
    }
    DecodeOutcome o;
    o.sample_id = id;
    o.mode = DecodeMode::Baseline;
    o.candidates = yes_no().tokens();
    o.chosen_index = 0;
    o.chosen_token = o.candidates[0];
    o.final_layer = config.n_layers;
    o.final_dist = {peak, 1.0 - peak};
    o.entropy = entropy(o.final_dist, EntropyBase::Two);
    suite.outcomes.push_back(std::move(o));
    suite.hallucinated[id] = hallucinated;
    suite.start.push_back(start);
    suite.peak.push_back(peak);
  }
  return suite;
}

EntropyBandSuite make_entropy_band_suite(const std::vector<std::pair<std::size_t, std::size_t>>& plan,
                                         std::uint64_t seed) {
  if (plan.size() > 5) throw ValidationError("binary entropy bands cover [0, 1] in five 0.2-wide steps");
  Rng rng(seed);
  EntropyBandSuite suite;
  for (std::size_t band = 0; band < plan.size(); ++band) {
    const auto [hallucinated, correct] = plan[band];
    for (std::size_t k = 0; k < hallucinated + correct; ++k) {
      // Stay clear of the band edges so rounding cannot move a sample.
      const double target = 0.2 * static_cast<double>(band) + uniform(rng, 0.02, 0.18);
      const double p = binary_probability_for_entropy(target);
      suite.final_dists.push_back({p, 1.0 - p});
      suite.hallucinated.push_back(k < hallucinated);
    }
  }
  return suite;
}

}  // namespace relhal::synthetic
