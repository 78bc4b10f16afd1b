#include "simpletag/heads.hpp"

#include <cmath>

#include "simpletag/corpus.hpp"
#include "simpletag/errors.hpp"

namespace simpletag {

namespace {

ag::Var affine(const ag::Var& x, const ag::Var& w, const ag::Var& b) {
  return ag::add_row_bias(ag::matmul(x, w), b);
}

void expect_tokens(const ag::Var& hidden, std::size_t dim) {
  const auto& s = hidden->value.shape();
  if (s.size() != 2 || s[1] != dim) {
    throw NumericError("expected (n," + std::to_string(dim) + ") token features, got " +
                       shape_string(s));
  }
}

std::size_t expect_attention(const ag::Var& refined, std::size_t channels) {
  const auto& s = refined->value.shape();
  if (s.size() != 3 || s[0] != channels || s[1] != s[2]) {
    throw NumericError("expected (" + std::to_string(channels) + ",n,n) attention features, got " +
                       shape_string(s));
  }
  return s[1];
}

}  // namespace

void BranchSwitches::validate() const {
  if (!token1d && !attention1d) throw ConfigError("both 1D branches are disabled");
  if (!token2d && !attention2d) throw ConfigError("both 2D branches are disabled");
}

FusedLogits fuse(const BranchLogits& branches, const BranchSwitches& switches) {
  switches.validate();
  auto sum = [](std::vector<ag::Var> terms, const char* surface) {
    for (const auto& t : terms)
      if (!t) throw ConfigError(std::string("enabled ") + surface + " branch produced no logits");
    return terms.size() == 1 ? terms[0] : ag::add_n(terms);
  };
  std::vector<ag::Var> one, two;
  if (switches.token1d) one.push_back(branches.token1d);
  if (switches.attention1d) one.push_back(branches.attention1d);
  if (switches.token2d) two.push_back(branches.token2d);
  if (switches.attention2d) two.push_back(branches.attention2d);
  return {sum(std::move(one), "1D"), sum(std::move(two), "2D")};
}

std::vector<Real> rotary_frequencies(std::size_t dim, Real base) {
  std::vector<Real> out(dim / 2);
  for (std::size_t m = 0; m < out.size(); ++m)
    out[m] = std::pow(base, -2.0 * static_cast<Real>(m) / static_cast<Real>(dim));
  return out;
}

TaggingHeads::TaggingHeads(std::size_t token_dim, std::size_t attention_channels, Rng& rng)
    : token_dim_(token_dim), attention_channels_(attention_channels) {
  if (token_dim % 2 != 0) {
    throw ConfigError("rotary scoring needs an even token dimension, got " +
                      std::to_string(token_dim));
  }
  freqs_ = rotary_frequencies(token_dim);
  auto weight = [&](std::size_t r, std::size_t c) {
    return ag::parameter(truncated_normal({r, c}, 0.02, rng));
  };
  auto zeros = [](std::size_t n) { return ag::parameter(Tensor({n})); };
  w_token1d_ = weight(token_dim, kNumTags1D);
  b_token1d_ = zeros(kNumTags1D);
  w_attn1d_ = weight(attention_channels, kNumTags1D);
  b_attn1d_ = zeros(kNumTags1D);
  for (auto& s : scorers_) {
    s.wq = weight(token_dim, token_dim);
    s.bq = zeros(token_dim);
    s.wk = weight(token_dim, token_dim);
    s.bk = zeros(token_dim);
  }
  w_attn2d_ = weight(attention_channels, kNumTags2D);
  b_attn2d_ = zeros(kNumTags2D);
}

ag::Var TaggingHeads::tag1d_from_tokens(const ag::Var& hidden) const {
  expect_tokens(hidden, token_dim_);
  return affine(hidden, w_token1d_, b_token1d_);
}

ag::Var TaggingHeads::tag1d_from_attention(const ag::Var& refined) const {
  expect_attention(refined, attention_channels_);
  return affine(ag::diagonal_channels(refined), w_attn1d_, b_attn1d_);
}

ag::Var TaggingHeads::tag2d_from_attention(const ag::Var& refined) const {
  const std::size_t n = expect_attention(refined, attention_channels_);
  const auto cells = ag::transpose(ag::reshape(refined, {attention_channels_, n * n}));
  return ag::reshape(affine(cells, w_attn2d_, b_attn2d_), {n, n, kNumTags2D});
}

ag::Var TaggingHeads::tag2d_from_tokens(const ag::Var& hidden, bool rotary,
                                        std::span<const Real> positions) const {
  expect_tokens(hidden, token_dim_);
  const std::size_t n = hidden->value.dim(0);
  std::vector<Real> pos(positions.begin(), positions.end());
  if (pos.empty()) {
    pos.resize(n);
    for (std::size_t i = 0; i < n; ++i) pos[i] = static_cast<Real>(i);
  }
  if (pos.size() != n) throw NumericError("one position per token required");

  std::vector<ag::Var> per_class;
  for (const auto& s : scorers_) {
    auto q = affine(hidden, s.wq, s.bq);
    auto k = affine(hidden, s.wk, s.bk);
    if (rotary) {
      q = ag::rotate_pairs(q, pos, freqs_);
      k = ag::rotate_pairs(k, pos, freqs_);
    }
    per_class.push_back(ag::reshape(ag::matmul_nt(q, k), {1, n * n}));
  }
  const auto stacked = ag::transpose(ag::concat_leading(per_class));  // (n*n, 4)
  return ag::reshape(stacked, {n, n, kNumTags2D});
}

void TaggingHeads::collect(ParameterSet& set) const {
  set.add("heads.token1d.weight", w_token1d_);
  set.add("heads.token1d.bias", b_token1d_);
  set.add("heads.attention1d.weight", w_attn1d_);
  set.add("heads.attention1d.bias", b_attn1d_);
  for (std::size_t t = 0; t < scorers_.size(); ++t) {
    const std::string p = "heads.token2d.class" + std::to_string(t) + ".";
    set.add(p + "wq", scorers_[t].wq);
    set.add(p + "bq", scorers_[t].bq);
    set.add(p + "wk", scorers_[t].wk);
    set.add(p + "bk", scorers_[t].bk);
  }
  set.add("heads.attention2d.weight", w_attn2d_);
  set.add("heads.attention2d.bias", b_attn2d_);
}

}  // namespace simpletag
