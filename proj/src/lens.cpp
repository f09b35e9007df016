#include "relhal/lens.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "relhal/error.hpp"
#include "relhal/random.hpp"
#include "relhal/text.hpp"

namespace relhal {

namespace {

constexpr double kInitStddev = 0.02;
constexpr double kLayerNormEps = 1e-5;
constexpr std::size_t kMlpExpansion = 4;

Vector gaussian_weights(Rng& rng, std::size_t n) {
  Vector w(n);
  for (double& v : w) v = kInitStddev * rng.gaussian();
  return w;
}

// out = x * W for a row vector x and a rows x cols row-major W.
Vector matvec(std::span<const double> x, const Vector& w, std::size_t cols) {
  Vector out(cols, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    const double* row = w.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) out[j] += xi * row[j];
  }
  return out;
}

Vector layer_norm(std::span<const double> x, const Vector& gain, const Vector& bias) {
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) * inv * gain[i] + bias[i];
  return out;
}

double gelu(double x) {
  const double c = std::sqrt(2.0 / std::numbers::pi);
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

}  // namespace

void ToyModelConfig::validate() const {
  if (vocab.size() < 2) throw ValidationError("toy model vocabulary needs at least 2 tokens");
  if (std::set<std::string>(vocab.begin(), vocab.end()).size() != vocab.size()) {
    throw ValidationError("toy model vocabulary has duplicate tokens");
  }
  if (d_model == 0) throw ValidationError("d_model must be positive");
  if (n_heads == 0 || d_model % n_heads != 0) throw ValidationError("n_heads must divide d_model");
  if (max_seq == 0) throw ValidationError("max_seq must be positive");
}

ToyModel::ToyModel(ToyModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const std::size_t d = config_.d_model;
  const std::size_t ff = kMlpExpansion * d;
  Rng rng(config_.seed);
  token_embedding_ = gaussian_weights(rng, config_.vocab.size() * d);
  position_embedding_ = gaussian_weights(rng, config_.max_seq * d);
  blocks_.resize(config_.n_layers);
  for (Block& b : blocks_) {
    b.ln1_gain.assign(d, 1.0);
    b.ln1_bias.assign(d, 0.0);
    b.wq = gaussian_weights(rng, d * d);
    b.wk = gaussian_weights(rng, d * d);
    b.wv = gaussian_weights(rng, d * d);
    b.wo = gaussian_weights(rng, d * d);
    b.ln2_gain.assign(d, 1.0);
    b.ln2_bias.assign(d, 0.0);
    b.w1 = gaussian_weights(rng, d * ff);
    b.b1.assign(ff, 0.0);
    b.w2 = gaussian_weights(rng, ff * d);
    b.b2.assign(d, 0.0);
  }
  final_gain_.assign(d, 1.0);
  final_bias_.assign(d, 0.0);
}

std::optional<std::size_t> ToyModel::token_id(std::string_view token) const {
  auto it = std::find(config_.vocab.begin(), config_.vocab.end(), token);
  if (it == config_.vocab.end()) return std::nullopt;
  return static_cast<std::size_t>(it - config_.vocab.begin());
}

std::vector<std::size_t> ToyModel::encode(std::string_view input) const {
  const auto unk = token_id("<unk>");
  std::vector<std::size_t> ids;
  for (const std::string& word : text::split_words(text::normalize_loose(input))) {
    if (auto id = token_id(word)) {
      ids.push_back(*id);
    } else if (unk) {
      ids.push_back(*unk);
    } else {
      throw ValidationError("token '" + word + "' is not in the vocabulary");
    }
  }
  return ids;
}

void ToyModel::apply_block(const Block& b, std::vector<Vector>& x) const {
  const std::size_t d = config_.d_model;
  const std::size_t heads = config_.n_heads;
  const std::size_t dh = d / heads;
  const std::size_t seq = x.size();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<Vector> q(seq), k(seq), v(seq);
  for (std::size_t t = 0; t < seq; ++t) {
    const Vector normed = layer_norm(x[t], b.ln1_gain, b.ln1_bias);
    q[t] = matvec(normed, b.wq, d);
    k[t] = matvec(normed, b.wk, d);
    v[t] = matvec(normed, b.wv, d);
  }

  std::vector<Vector> attended(seq, Vector(d, 0.0));
  Vector scores;
  for (std::size_t t = 0; t < seq; ++t) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dh;
      scores.assign(t + 1, 0.0);
      for (std::size_t s = 0; s <= t; ++s) {
        double dot = 0.0;
        for (std::size_t i = 0; i < dh; ++i) dot += q[t][off + i] * k[s][off + i];
        scores[s] = dot * scale;
      }
      const Vector weights = softmax(scores);
      for (std::size_t s = 0; s <= t; ++s) {
        for (std::size_t i = 0; i < dh; ++i) attended[t][off + i] += weights[s] * v[s][off + i];
      }
    }
  }

  const std::size_t ff = kMlpExpansion * d;
  for (std::size_t t = 0; t < seq; ++t) {
    const Vector projected = matvec(attended[t], b.wo, d);
    for (std::size_t i = 0; i < d; ++i) x[t][i] += projected[i];

    Vector hidden = matvec(layer_norm(x[t], b.ln2_gain, b.ln2_bias), b.w1, ff);
    for (std::size_t i = 0; i < ff; ++i) hidden[i] = gelu(hidden[i] + b.b1[i]);
    const Vector out = matvec(hidden, b.w2, d);
    for (std::size_t i = 0; i < d; ++i) x[t][i] += out[i] + b.b2[i];
  }
}

void ToyModel::run(std::span<const std::size_t> token_ids, HiddenStates* taps,
                   std::vector<Vector>& x) const {
  if (token_ids.empty()) throw ValidationError("input sequence is empty");
  if (token_ids.size() > config_.max_seq) {
    throw ValidationError("input length " + std::to_string(token_ids.size()) + " exceeds max_seq " +
                          std::to_string(config_.max_seq));
  }
  const std::size_t d = config_.d_model;
  x.assign(token_ids.size(), Vector(d));
  for (std::size_t t = 0; t < token_ids.size(); ++t) {
    if (token_ids[t] >= vocab_size()) {
      throw ValidationError("token id " + std::to_string(token_ids[t]) + " out of range");
    }
    for (std::size_t i = 0; i < d; ++i) {
      x[t][i] = token_embedding_[token_ids[t] * d + i] + position_embedding_[t * d + i];
    }
  }
  if (taps) taps->layers.push_back(x);
  for (const Block& block : blocks_) {
    apply_block(block, x);
    if (taps) taps->layers.push_back(x);
  }
}

HiddenStates ToyModel::forward_with_taps(std::span<const std::size_t> token_ids) const {
  HiddenStates taps;
  taps.layers.reserve(config_.n_layers + 1);
  std::vector<Vector> x;
  run(token_ids, &taps, x);
  return taps;
}

std::vector<Vector> ToyModel::forward(std::span<const std::size_t> token_ids) const {
  std::vector<Vector> x;
  run(token_ids, nullptr, x);
  return x;
}

Vector ToyModel::next_token_logits(std::span<const std::size_t> token_ids) const {
  return head(forward(token_ids).back());
}

Vector ToyModel::head(std::span<const double> hidden) const {
  const std::size_t d = config_.d_model;
  if (hidden.size() != d) {
    throw ValidationError("hidden dimension " + std::to_string(hidden.size()) + " != d_model " +
                          std::to_string(d));
  }
  const Vector normed = layer_norm(hidden, final_gain_, final_bias_);
  Vector logits(vocab_size(), 0.0);
  for (std::size_t v = 0; v < logits.size(); ++v) {
    double dot = 0.0;
    for (std::size_t i = 0; i < d; ++i) dot += token_embedding_[v * d + i] * normed[i];
    logits[v] = dot;
  }
  return logits;
}

// ---------------------------------------------------------------------------

CandidateSet::CandidateSet(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.empty()) throw ValidationError("candidate set is empty");
  if (std::set<std::string>(tokens_.begin(), tokens_.end()).size() != tokens_.size()) {
    throw ValidationError("candidate set has duplicate tokens");
  }
}

std::optional<std::size_t> CandidateSet::index_of(std::string_view token) const {
  auto it = std::find(tokens_.begin(), tokens_.end(), token);
  if (it == tokens_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - tokens_.begin());
}

std::string_view to_string(RestrictMode mode) noexcept {
  return mode == RestrictMode::Subset ? "subset" : "renormalize";
}

std::optional<RestrictMode> parse_restrict_mode(std::string_view name) {
  if (name == "subset") return RestrictMode::Subset;
  if (name == "renormalize") return RestrictMode::Renormalize;
  return std::nullopt;
}

Vector softmax(std::span<const double> logits) {
  if (logits.empty()) return {};
  const double max = *std::max_element(logits.begin(), logits.end());
  Vector out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - max);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

std::vector<std::size_t> candidate_indices(const ToyModel& model, const CandidateSet& candidates) {
  std::vector<std::size_t> indices;
  indices.reserve(candidates.size());
  for (const std::string& token : candidates.tokens()) {
    auto id = model.token_id(token);
    if (!id) throw ValidationError("candidate token '" + token + "' is not in the vocabulary");
    indices.push_back(*id);
  }
  return indices;
}

Vector restrict_logits(std::span<const double> logits, std::span<const std::size_t> indices,
                       RestrictMode mode) {
  if (mode == RestrictMode::Subset) {
    Vector subset;
    subset.reserve(indices.size());
    for (std::size_t i : indices) subset.push_back(logits[i]);
    return softmax(subset);
  }
  const Vector full = softmax(logits);
  Vector kept;
  kept.reserve(indices.size());
  double mass = 0.0;
  for (std::size_t i : indices) {
    kept.push_back(full[i]);
    mass += full[i];
  }
  for (double& p : kept) p /= mass;
  return kept;
}

Vector lens_distribution(const ToyModel& model, std::span<const double> hidden,
                         const CandidateSet& candidates, RestrictMode mode) {
  const auto indices = candidate_indices(model, candidates);
  return restrict_logits(model.head(hidden), indices, mode);
}

Vector next_token_distribution(const ToyModel& model, std::span<const std::size_t> token_ids,
                               const CandidateSet& candidates, RestrictMode mode) {
  const auto indices = candidate_indices(model, candidates);
  return restrict_logits(model.next_token_logits(token_ids), indices, mode);
}

std::size_t argmax_index(std::span<const double> values) {
  if (values.empty()) throw ValidationError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

const std::string& lens_argmax(std::span<const double> dist, const CandidateSet& candidates) {
  if (dist.size() != candidates.size()) throw ValidationError("distribution/candidate size mismatch");
  return candidates[argmax_index(dist)];
}

}  // namespace relhal
