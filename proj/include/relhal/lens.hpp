#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace relhal {

using Vector = std::vector<double>;

struct ToyModelConfig {
  std::vector<std::string> vocab;
  std::size_t d_model = 8;
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t max_seq = 64;
  std::uint64_t seed = 42;

  void validate() const;
};

/// Hidden states for every position at every tap point. Index 0 holds the
/// embedded input; index k holds the output of decoder block k.
struct HiddenStates {
  std::vector<std::vector<Vector>> layers;

  std::size_t n_layers() const noexcept { return layers.empty() ? 0 : layers.size() - 1; }
  const Vector& last_position(std::size_t layer) const { return layers.at(layer).back(); }
};

/// Small pre-norm decoder-only transformer with learned positional
/// embeddings, causal multi-head attention, a GELU MLP, a final layer norm
/// and a head tied to the token embedding. All weights are drawn from a
/// seeded N(0, 0.02^2); layer norm gains start at one and biases at zero.
/// The model is immutable after construction.
class ToyModel {
 public:
  explicit ToyModel(ToyModelConfig config);

  const ToyModelConfig& config() const noexcept { return config_; }
  std::size_t vocab_size() const noexcept { return config_.vocab.size(); }

  std::optional<std::size_t> token_id(std::string_view token) const;

  // Lowercased whitespace/punctuation tokenization; unknown words map to
  // "<unk>" when the vocabulary has it and are an error otherwise.
  std::vector<std::size_t> encode(std::string_view text) const;

  HiddenStates forward_with_taps(std::span<const std::size_t> token_ids) const;

  // Final-block hidden states per position.
  std::vector<Vector> forward(std::span<const std::size_t> token_ids) const;

  // Full-vocabulary logits for the token after the last position.
  Vector next_token_logits(std::span<const std::size_t> token_ids) const;

  // Final layer norm followed by the tied head.
  Vector head(std::span<const double> hidden) const;

 private:
  struct Block {
    Vector ln1_gain, ln1_bias;
    Vector wq, wk, wv, wo;  // d x d, row-major
    Vector ln2_gain, ln2_bias;
    Vector w1, b1;  // d x 4d, 4d
    Vector w2, b2;  // 4d x d, d
  };

  void run(std::span<const std::size_t> token_ids, HiddenStates* taps, std::vector<Vector>& x) const;
  void apply_block(const Block& block, std::vector<Vector>& x) const;

  ToyModelConfig config_;
  Vector token_embedding_;     // vocab x d
  Vector position_embedding_;  // max_seq x d
  std::vector<Block> blocks_;
  Vector final_gain_, final_bias_;
};

/// Ordered, duplicate-free answer tokens over which distributions are read.
class CandidateSet {
 public:
  explicit CandidateSet(std::vector<std::string> tokens);

  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& operator[](std::size_t i) const { return tokens_[i]; }
  std::optional<std::size_t> index_of(std::string_view token) const;

  bool operator==(const CandidateSet&) const = default;

 private:
  std::vector<std::string> tokens_;
};

// How a candidate distribution is obtained from full-vocabulary logits.
enum class RestrictMode {
  Subset,       // keep the candidate logits, softmax over them
  Renormalize,  // softmax over the full vocabulary, keep and rescale candidate mass
};

std::string_view to_string(RestrictMode mode) noexcept;
std::optional<RestrictMode> parse_restrict_mode(std::string_view name);

// Numerically stable softmax.
Vector softmax(std::span<const double> logits);

// Vocabulary indices of the candidates; throws naming the first unknown token.
std::vector<std::size_t> candidate_indices(const ToyModel& model, const CandidateSet& candidates);

Vector restrict_logits(std::span<const double> logits, std::span<const std::size_t> indices,
                       RestrictMode mode = RestrictMode::Subset);

// Head applied to an intermediate hidden vector, read over the candidates.
Vector lens_distribution(const ToyModel& model, std::span<const double> hidden,
                         const CandidateSet& candidates, RestrictMode mode = RestrictMode::Subset);

// The model's ordinary next-token distribution restricted to the candidates.
Vector next_token_distribution(const ToyModel& model, std::span<const std::size_t> token_ids,
                               const CandidateSet& candidates, RestrictMode mode = RestrictMode::Subset);

// Index of the largest entry; the first one wins ties.
std::size_t argmax_index(std::span<const double> values);

const std::string& lens_argmax(std::span<const double> dist, const CandidateSet& candidates);

}  // namespace relhal
