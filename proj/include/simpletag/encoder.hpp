#pragma once

#include <set>
#include <span>
#include <vector>

#include "simpletag/nn.hpp"

namespace simpletag {

struct EncoderConfig {
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t model_dim = 32;
  std::size_t ff_dim = 64;
  std::size_t max_len = 64;
  std::size_t vocab_size = 2;
  Real dropout = 0.1;

  // Throws ConfigError.
  void validate() const;
  std::size_t head_dim() const { return model_dim / heads; }
  bool operator==(const EncoderConfig&) const = default;
};

struct LayerOutput {
  ag::Var hidden;                  // (n, d)
  std::vector<ag::Var> attention;  // h x (n, n), post-softmax, pre-dropout
};

struct EncoderOutput {
  ag::Var hidden;     // (n, d), final layer
  ag::Var attention;  // (L*h, n, n), layer-major then head order
};

// Post-LN transformer encoder over whole-word ids.
class Encoder {
 public:
  Encoder(const EncoderConfig& config, Rng& rng);

  const EncoderConfig& config() const { return config_; }

  // word_embedding[id_i] + position_embedding[i]
  ag::Var embed(std::span<const int> ids) const;

  // `index` is 0-based.
  LayerOutput layer(const ag::Var& input, std::size_t index, const ForwardContext& ctx) const;

  // `masked_layers` holds 1-based layer numbers whose attention channels are
  // replaced by zeros in the returned stack.
  EncoderOutput encode(std::span<const int> ids, const ForwardContext& ctx,
                       const std::set<int>& masked_layers = {}) const;

  void collect(ParameterSet& set) const;

  const ag::Var& word_embedding() const { return word_embedding_; }
  const ag::Var& position_embedding() const { return position_embedding_; }

 private:
  struct Layer {
    ag::Var wq, bq, wk, bk, wv, bv, wo, bo;
    ag::Var ln1_gamma, ln1_beta;
    ag::Var w1, b1, w2, b2;
    ag::Var ln2_gamma, ln2_beta;
  };

  ag::Var maybe_dropout(const ag::Var& x, const ForwardContext& ctx) const;

  EncoderConfig config_;
  ag::Var word_embedding_;
  ag::Var position_embedding_;
  std::vector<Layer> layers_;
};

}  // namespace simpletag
