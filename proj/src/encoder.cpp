#include "simpletag/encoder.hpp"

#include <cmath>

#include "simpletag/errors.hpp"

namespace simpletag {

namespace {

constexpr Real kInitStd = 0.02;
constexpr Real kLayerNormEps = 1e-12;

ag::Var weight(std::size_t rows, std::size_t cols, Rng& rng) {
  return ag::parameter(truncated_normal({rows, cols}, kInitStd, rng));
}
ag::Var zeros(std::size_t n) { return ag::parameter(Tensor({n})); }
ag::Var ones(std::size_t n) { return ag::parameter(Tensor({n}, 1.0)); }

ag::Var affine(const ag::Var& x, const ag::Var& w, const ag::Var& b) {
  return ag::add_row_bias(ag::matmul(x, w), b);
}

}  // namespace

void EncoderConfig::validate() const {
  if (layers < 1 || heads < 1 || model_dim < 1 || ff_dim < 1 || max_len < 1) {
    throw ConfigError("encoder sizes must all be >= 1");
  }
  if (model_dim % heads != 0) {
    throw ConfigError("model_dim " + std::to_string(model_dim) + " is not divisible by heads " +
                      std::to_string(heads));
  }
  if (vocab_size < 2) throw ConfigError("vocab_size must cover the reserved ids");
  if (!(dropout >= 0 && dropout < 1)) throw ConfigError("dropout must lie in [0, 1)");
}

Encoder::Encoder(const EncoderConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const std::size_t d = config_.model_dim, f = config_.ff_dim;
  word_embedding_ = weight(config_.vocab_size, d, rng);
  position_embedding_ = weight(config_.max_len, d, rng);
  layers_.reserve(config_.layers);
  for (std::size_t i = 0; i < config_.layers; ++i) {
    Layer l;
    l.wq = weight(d, d, rng);
    l.bq = zeros(d);
    l.wk = weight(d, d, rng);
    l.bk = zeros(d);
    l.wv = weight(d, d, rng);
    l.bv = zeros(d);
    l.wo = weight(d, d, rng);
    l.bo = zeros(d);
    l.ln1_gamma = ones(d);
    l.ln1_beta = zeros(d);
    l.w1 = weight(d, f, rng);
    l.b1 = zeros(f);
    l.w2 = weight(f, d, rng);
    l.b2 = zeros(d);
    l.ln2_gamma = ones(d);
    l.ln2_beta = zeros(d);
    layers_.push_back(std::move(l));
  }
}

ag::Var Encoder::maybe_dropout(const ag::Var& x, const ForwardContext& ctx) const {
  if (!ctx.training || config_.dropout == 0) return x;
  if (!ctx.rng) throw ConfigError("training forward pass needs an rng for dropout");
  return ag::dropout(x, config_.dropout, *ctx.rng);
}

ag::Var Encoder::embed(std::span<const int> ids) const {
  if (ids.empty()) throw DataError("cannot encode an empty sentence");
  if (ids.size() > config_.max_len) {
    throw DataError("sentence length " + std::to_string(ids.size()) + " exceeds max_len " +
                    std::to_string(config_.max_len));
  }
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
      throw DataError("token id " + std::to_string(id) + " outside vocabulary of size " +
                      std::to_string(config_.vocab_size));
    }
  }
  return ag::add(ag::gather_rows(word_embedding_, ids),
                 ag::take_rows(position_embedding_, ids.size()));
}

LayerOutput Encoder::layer(const ag::Var& input, std::size_t index,
                           const ForwardContext& ctx) const {
  if (!input->value.all_finite()) {
    throw NumericError("encoder layer " + std::to_string(index + 1) + ": non-finite input");
  }
  const Layer& l = layers_.at(index);
  const std::size_t dh = config_.head_dim();
  const Real inv_sqrt = 1.0 / std::sqrt(static_cast<Real>(dh));

  const auto q = affine(input, l.wq, l.bq);
  const auto k = affine(input, l.wk, l.bk);
  const auto v = affine(input, l.wv, l.bv);

  LayerOutput out;
  std::vector<ag::Var> contexts;
  for (std::size_t h = 0; h < config_.heads; ++h) {
    const auto qh = ag::slice_cols(q, h * dh, dh);
    const auto kh = ag::slice_cols(k, h * dh, dh);
    const auto vh = ag::slice_cols(v, h * dh, dh);
    const auto probs = ag::softmax_rows(ag::scale(ag::matmul_nt(qh, kh), inv_sqrt));
    out.attention.push_back(probs);
    contexts.push_back(ag::matmul(maybe_dropout(probs, ctx), vh));
  }
  const auto attended = maybe_dropout(affine(ag::concat_cols(contexts), l.wo, l.bo), ctx);
  const auto mid = ag::layer_norm_rows(ag::add(input, attended), l.ln1_gamma, l.ln1_beta,
                                       kLayerNormEps);
  const auto ff = maybe_dropout(affine(ag::gelu(affine(mid, l.w1, l.b1)), l.w2, l.b2), ctx);
  out.hidden = ag::layer_norm_rows(ag::add(mid, ff), l.ln2_gamma, l.ln2_beta, kLayerNormEps);
  return out;
}

EncoderOutput Encoder::encode(std::span<const int> ids, const ForwardContext& ctx,
                              const std::set<int>& masked_layers) const {
  for (int m : masked_layers) {
    if (m < 1 || static_cast<std::size_t>(m) > config_.layers) {
      throw ConfigError("masked layer " + std::to_string(m) + " outside 1.." +
                        std::to_string(config_.layers));
    }
  }
  const std::size_t n = ids.size();
  auto hidden = maybe_dropout(embed(ids), ctx);
  std::vector<ag::Var> channels;
  for (std::size_t i = 0; i < config_.layers; ++i) {
    auto layer_out = layer(hidden, i, ctx);
    hidden = layer_out.hidden;
    const bool masked = masked_layers.contains(static_cast<int>(i + 1));
    for (auto& a : layer_out.attention) {
      channels.push_back(masked ? ag::constant(Tensor({1, n, n}))
                                : ag::reshape(a, {1, n, n}));
    }
  }
  return {hidden, ag::concat_leading(channels)};
}

void Encoder::collect(ParameterSet& set) const {
  set.add("encoder.word_embedding", word_embedding_);
  set.add("encoder.position_embedding", position_embedding_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const std::string p = "encoder.layer" + std::to_string(i) + ".";
    set.add(p + "attn.wq", l.wq);
    set.add(p + "attn.bq", l.bq);
    set.add(p + "attn.wk", l.wk);
    set.add(p + "attn.bk", l.bk);
    set.add(p + "attn.wv", l.wv);
    set.add(p + "attn.bv", l.bv);
    set.add(p + "attn.wo", l.wo);
    set.add(p + "attn.bo", l.bo);
    set.add(p + "ln1.gamma", l.ln1_gamma);
    set.add(p + "ln1.beta", l.ln1_beta);
    set.add(p + "ffn.w1", l.w1);
    set.add(p + "ffn.b1", l.b1);
    set.add(p + "ffn.w2", l.w2);
    set.add(p + "ffn.b2", l.b2);
    set.add(p + "ln2.gamma", l.ln2_gamma);
    set.add(p + "ln2.beta", l.ln2_beta);
  }
}

}  // namespace simpletag
