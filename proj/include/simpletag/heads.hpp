#pragma once

#include <array>
#include <span>
#include <vector>

#include "simpletag/nn.hpp"

namespace simpletag {

struct FusedLogits {
  ag::Var logits1d;  // (n, 3)
  ag::Var logits2d;  // (n, n, 4)
};

// Which of the four tagging branches take part in fusion.
struct BranchSwitches {
  bool token1d = true;
  bool attention1d = true;
  bool token2d = true;
  bool attention2d = true;

  // Throws ConfigError when a surface would be left without a branch.
  void validate() const;
  bool operator==(const BranchSwitches&) const = default;
};

// Branch outputs; a branch that was not computed is null.
struct BranchLogits {
  ag::Var token1d;
  ag::Var attention1d;
  ag::Var token2d;
  ag::Var attention2d;
};

FusedLogits fuse(const BranchLogits& branches, const BranchSwitches& switches);

// Rotary inverse frequencies base^(-2m/d) for m in [0, d/2).
std::vector<Real> rotary_frequencies(std::size_t dim, Real base = 10000.0);

class TaggingHeads {
 public:
  static constexpr std::size_t kScoringHeads = 4;  // one per 2D class

  // token_dim must be even (rotary rotates pairs).
  TaggingHeads(std::size_t token_dim, std::size_t attention_channels, Rng& rng);

  std::size_t token_dim() const { return token_dim_; }
  std::size_t attention_channels() const { return attention_channels_; }

  ag::Var tag1d_from_tokens(const ag::Var& hidden) const;      // (n,d) -> (n,3)
  ag::Var tag1d_from_attention(const ag::Var& refined) const;  // (C,n,n) -> (n,3)
  ag::Var tag2d_from_attention(const ag::Var& refined) const;  // (C,n,n) -> (n,n,4)

  // (n,d) -> (n,n,4). Token i sits at positions[i]; empty positions means
  // 0..n-1. With rotary off, scores are plain query/key dot products.
  ag::Var tag2d_from_tokens(const ag::Var& hidden, bool rotary = true,
                            std::span<const Real> positions = {}) const;

  void collect(ParameterSet& set) const;

  struct Projection {
    ag::Var wq, bq, wk, bk;
  };
  const Projection& scorer(std::size_t t) const { return scorers_.at(t); }
  const ag::Var& token1d_weight() const { return w_token1d_; }
  const ag::Var& token1d_bias() const { return b_token1d_; }
  const ag::Var& attention1d_weight() const { return w_attn1d_; }
  const ag::Var& attention1d_bias() const { return b_attn1d_; }
  const ag::Var& attention2d_weight() const { return w_attn2d_; }
  const ag::Var& attention2d_bias() const { return b_attn2d_; }

 private:
  std::size_t token_dim_;
  std::size_t attention_channels_;
  std::vector<Real> freqs_;
  ag::Var w_token1d_, b_token1d_;
  ag::Var w_attn1d_, b_attn1d_;
  std::array<Projection, kScoringHeads> scorers_;
  ag::Var w_attn2d_, b_attn2d_;
};

}  // namespace simpletag
