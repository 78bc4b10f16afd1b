#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "simpletag/encoder.hpp"
#include "simpletag/heads.hpp"
#include "simpletag/refiner.hpp"

namespace simpletag {

// Runtime switches mirroring the ablation variants. None of them changes
// the parameter layout: a disabled part is simply left out of the graph.
struct Ablation {
  BranchSwitches branches;
  bool conv = true;
  bool relpos = true;
  bool rotary = true;
  std::set<int> mask_layers;  // 1-based

  void validate(std::size_t layers) const;
  bool uses_attention() const { return branches.attention1d || branches.attention2d; }
  bool is_identity() const { return *this == Ablation{}; }
  // Command-line form, e.g. "--no-conv --mask-layers 1"; "full" for none.
  std::string describe() const;
  bool operator==(const Ablation&) const = default;
};

// "1-4", "1,3", "1-2,4". Throws ConfigError.
std::set<int> parse_layer_spec(std::string_view spec);
std::string format_layer_spec(const std::set<int>& layers);

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t relpos_dim = 8;
  std::size_t conv_blocks = 2;

  void validate() const;
  std::size_t attention_channels() const { return encoder.layers * encoder.heads; }
  std::size_t refined_channels() const { return attention_channels() + relpos_dim; }
  bool operator==(const ModelConfig&) const = default;
};

class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const Encoder& encoder() const { return encoder_; }
  const Refiner& refiner() const { return refiner_; }
  const TaggingHeads& heads() const { return heads_; }

  // One FusedLogits per sentence. Sentences are processed independently
  // except for the refiner's batch statistics in training mode.
  std::vector<FusedLogits> forward(std::span<const std::vector<int>> batch,
                                   const Ablation& ablation, const ForwardContext& ctx) const;

  ParameterSet parameters() const;

 private:
  ModelConfig config_;
  Rng init_rng_;
  Encoder encoder_;
  Refiner refiner_;
  TaggingHeads heads_;
};

// A model seen through a fixed, validated set of switches.
class ModelView {
 public:
  ModelView(const Model& model, Ablation ablation);

  const Model& model() const { return *model_; }
  const Ablation& ablation() const { return ablation_; }

  std::vector<FusedLogits> forward(std::span<const std::vector<int>> batch,
                                   const ForwardContext& ctx) const {
    return model_->forward(batch, ablation_, ctx);
  }

 private:
  const Model* model_;
  Ablation ablation_;
};

ModelView apply_ablation(const Model& model, const Ablation& ablation);

}  // namespace simpletag
