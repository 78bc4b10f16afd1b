#pragma once

#include <span>
#include <vector>

#include "simpletag/nn.hpp"

namespace simpletag {

struct RefinerConfig {
  std::size_t attention_channels = 4;  // L*h
  std::size_t relpos_dim = 8;
  std::size_t blocks = 2;
  std::size_t max_len = 64;

  std::size_t channels() const { return attention_channels + relpos_dim; }
  void validate() const;
};

struct RefineOptions {
  bool relpos = true;  // false: relative-position channels are zeros
  bool conv = true;    // false: return the raw concatenation
};

// Learnable relative-position channels concatenated onto the attention
// stack, followed by `blocks` x (3x3 conv -> ReLU -> batch norm).
class Refiner {
 public:
  static constexpr Real kBatchNormMomentum = 0.1;
  static constexpr Real kBatchNormEps = 1e-5;

  Refiner(const RefinerConfig& config, Rng& rng);

  const RefinerConfig& config() const { return config_; }

  // Column of the relative-position table used for the pair (i, j).
  std::size_t offset_index(std::size_t i, std::size_t j) const;

  // (d_p, n, n); out[:, i, j] = table[:, offset_index(i, j)].
  ag::Var relpos(std::size_t n) const;

  // Refines every (L*h, n_b, n_b) stack of a batch; batch norm pools
  // statistics over all cells of all sentences. In training mode the
  // running statistics are updated, which requires exclusive access.
  std::vector<ag::Var> refine(std::span<const ag::Var> stacks, const ForwardContext& ctx,
                              const RefineOptions& options = {}) const;

  void collect(ParameterSet& set) const;

  const ag::Var& relpos_table() const { return relpos_table_; }

 private:
  struct Block {
    ag::Var weight, bias, gamma, beta;
    mutable ag::BatchNormState stats;
  };

  RefinerConfig config_;
  ag::Var relpos_table_;  // (d_p, 2*max_len - 1)
  std::vector<Block> blocks_;
};

}  // namespace simpletag
