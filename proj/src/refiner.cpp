#include "simpletag/refiner.hpp"

#include <algorithm>

#include "simpletag/errors.hpp"

namespace simpletag {

void RefinerConfig::validate() const {
  if (attention_channels < 1) throw ConfigError("refiner needs at least one attention channel");
  if (max_len < 1) throw ConfigError("refiner max_len must be >= 1");
}

Refiner::Refiner(const RefinerConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const std::size_t c = config_.channels();
  relpos_table_ = ag::parameter(truncated_normal({config_.relpos_dim, 2 * config_.max_len - 1}, 0.02, rng));
  for (std::size_t b = 0; b < config_.blocks; ++b) {
    Block block;
    block.weight = ag::parameter(truncated_normal({c, c, 3, 3}, 0.02, rng));
    block.bias = ag::parameter(Tensor({c}));
    block.gamma = ag::parameter(Tensor({c}, 1.0));
    block.beta = ag::parameter(Tensor({c}));
    block.stats.running_mean = Tensor({c});
    block.stats.running_var = Tensor({c}, 1.0);
    blocks_.push_back(std::move(block));
  }
}

std::size_t Refiner::offset_index(std::size_t i, std::size_t j) const {
  const auto limit = static_cast<std::ptrdiff_t>(config_.max_len) - 1;
  const auto offset = std::clamp(static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(j),
                                 -limit, limit);
  return static_cast<std::size_t>(offset + limit);
}

ag::Var Refiner::relpos(std::size_t n) const {
  if (n == 0 || n > config_.max_len) {
    throw DataError("relative positions requested for length " + std::to_string(n) +
                    " (max_len " + std::to_string(config_.max_len) + ")");
  }
  std::vector<std::size_t> cols;
  cols.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) cols.push_back(offset_index(i, j));
  return ag::reshape(ag::gather_cols(relpos_table_, cols), {config_.relpos_dim, n, n});
}

std::vector<ag::Var> Refiner::refine(std::span<const ag::Var> stacks, const ForwardContext& ctx,
                                     const RefineOptions& options) const {
  const std::size_t c = config_.channels();
  std::vector<ag::Var> current;
  std::vector<std::size_t> lengths;
  for (const auto& stack : stacks) {
    const auto& s = stack->value.shape();
    if (s.size() != 3 || s[0] != config_.attention_channels || s[1] != s[2]) {
      throw NumericError("refiner expects (" + std::to_string(config_.attention_channels) +
                         ",n,n) input, got " + shape_string(s));
    }
    const std::size_t n = s[1];
    lengths.push_back(n);
    if (config_.relpos_dim == 0) {
      current.push_back(stack);
      continue;
    }
    const auto rel = options.relpos ? relpos(n) : ag::constant(Tensor({config_.relpos_dim, n, n}));
    const ag::Var parts[] = {stack, rel};
    current.push_back(ag::concat_leading(parts));
  }
  if (!options.conv) return current;

  for (const auto& block : blocks_) {
    std::vector<ag::Var> flat;
    for (std::size_t b = 0; b < current.size(); ++b) {
      const std::size_t n = lengths[b];
      flat.push_back(ag::reshape(ag::relu(ag::conv3x3(current[b], block.weight, block.bias)), {c, n * n}));
    }
    const auto normed = ag::batch_norm_rows(ag::concat_cols(flat), block.gamma, block.beta,
                                            block.stats, ctx.training, kBatchNormMomentum,
                                            kBatchNormEps);
    if (!normed->value.all_finite()) throw NumericError("refiner produced non-finite activations");
    std::size_t offset = 0;
    for (std::size_t b = 0; b < current.size(); ++b) {
      const std::size_t n = lengths[b];
      current[b] = ag::reshape(ag::slice_cols(normed, offset, n * n), {c, n, n});
      offset += n * n;
    }
  }
  return current;
}

void Refiner::collect(ParameterSet& set) const {
  set.add("refiner.relpos_table", relpos_table_);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const std::string p = "refiner.block" + std::to_string(b) + ".";
    set.add(p + "conv.weight", blocks_[b].weight);
    set.add(p + "conv.bias", blocks_[b].bias);
    set.add(p + "bn.gamma", blocks_[b].gamma);
    set.add(p + "bn.beta", blocks_[b].beta);
  }
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const std::string p = "refiner.block" + std::to_string(b) + ".";
    set.add_buffer(p + "bn.running_mean", blocks_[b].stats.running_mean);
    set.add_buffer(p + "bn.running_var", blocks_[b].stats.running_var);
  }
}

}  // namespace simpletag
