#include "simpletag/model.hpp"

#include <charconv>

#include "simpletag/errors.hpp"

namespace simpletag {

namespace {

RefinerConfig refiner_config(const ModelConfig& c) {
  return {c.attention_channels(), c.relpos_dim, c.conv_blocks, c.encoder.max_len};
}

int parse_layer_number(std::string_view text, std::string_view spec) {
  int value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ConfigError("invalid layer spec '" + std::string(spec) + "'");
  }
  return value;
}

}  // namespace

void Ablation::validate(std::size_t layers) const {
  branches.validate();
  for (int m : mask_layers) {
    if (m < 1 || static_cast<std::size_t>(m) > layers) {
      throw ConfigError("mask layer " + std::to_string(m) + " outside 1.." + std::to_string(layers));
    }
  }
}

std::string Ablation::describe() const {
  std::string out;
  auto flag = [&](bool disabled, const char* name) {
    if (!disabled) return;
    if (!out.empty()) out += ' ';
    out += name;
  };
  flag(!branches.attention1d, "--no-attn-branch-1d");
  flag(!branches.attention2d, "--no-attn-branch-2d");
  flag(!branches.token1d, "--no-token-branch-1d");
  flag(!branches.token2d, "--no-token-branch-2d");
  flag(!conv, "--no-conv");
  flag(!relpos, "--no-relpos");
  flag(!rotary, "--no-rotary");
  if (!mask_layers.empty()) {
    if (!out.empty()) out += ' ';
    out += "--mask-layers " + format_layer_spec(mask_layers);
  }
  return out.empty() ? "full" : out;
}

std::set<int> parse_layer_spec(std::string_view spec) {
  std::set<int> out;
  if (spec.empty()) return out;
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    const auto comma = spec.find(',', pos);
    const auto item = spec.substr(pos, comma == std::string_view::npos ? spec.size() - pos : comma - pos);
    const auto dash = item.find('-');
    if (dash == std::string_view::npos) {
      out.insert(parse_layer_number(item, spec));
    } else {
      const int lo = parse_layer_number(item.substr(0, dash), spec);
      const int hi = parse_layer_number(item.substr(dash + 1), spec);
      if (lo > hi) throw ConfigError("invalid layer range in '" + std::string(spec) + "'");
      for (int i = lo; i <= hi; ++i) out.insert(i);
    }
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  for (int m : out)
    if (m < 1) throw ConfigError("layer numbers are 1-based in '" + std::string(spec) + "'");
  return out;
}

std::string format_layer_spec(const std::set<int>& layers) {
  std::string out;
  for (int m : layers) {
    if (!out.empty()) out += ',';
    out += std::to_string(m);
  }
  return out;
}

void ModelConfig::validate() const {
  encoder.validate();
  if (encoder.model_dim % 2 != 0) throw ConfigError("model_dim must be even for rotary scoring");
}

Model::Model(const ModelConfig& config, std::uint64_t seed)
    : config_((config.validate(), config)),
      init_rng_(seed),
      encoder_(config_.encoder, init_rng_),
      refiner_(refiner_config(config_), init_rng_),
      heads_(config_.encoder.model_dim, config_.refined_channels(), init_rng_) {}

std::vector<FusedLogits> Model::forward(std::span<const std::vector<int>> batch,
                                        const Ablation& ablation,
                                        const ForwardContext& ctx) const {
  ablation.validate(config_.encoder.layers);
  std::vector<EncoderOutput> encoded;
  encoded.reserve(batch.size());
  for (const auto& ids : batch) encoded.push_back(encoder_.encode(ids, ctx, ablation.mask_layers));

  std::vector<ag::Var> refined;
  if (ablation.uses_attention()) {
    std::vector<ag::Var> stacks;
    for (const auto& e : encoded) stacks.push_back(e.attention);
    refined = refiner_.refine(stacks, ctx, {ablation.relpos, ablation.conv});
  }

  const auto& sw = ablation.branches;
  std::vector<FusedLogits> out;
  out.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    BranchLogits branches;
    if (sw.token1d) branches.token1d = heads_.tag1d_from_tokens(encoded[b].hidden);
    if (sw.attention1d) branches.attention1d = heads_.tag1d_from_attention(refined[b]);
    if (sw.token2d) branches.token2d = heads_.tag2d_from_tokens(encoded[b].hidden, ablation.rotary);
    if (sw.attention2d) branches.attention2d = heads_.tag2d_from_attention(refined[b]);
    out.push_back(fuse(branches, sw));
  }
  return out;
}

ParameterSet Model::parameters() const {
  ParameterSet set;
  encoder_.collect(set);
  refiner_.collect(set);
  heads_.collect(set);
  return set;
}

ModelView::ModelView(const Model& model, Ablation ablation)
    : model_(&model), ablation_(std::move(ablation)) {
  ablation_.validate(model.config().encoder.layers);
}

ModelView apply_ablation(const Model& model, const Ablation& ablation) {
  return ModelView(model, ablation);
}

}  // namespace simpletag
