#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "simpletag/corpus.hpp"
#include "simpletag/decoder.hpp"
#include "simpletag/metrics.hpp"
#include "simpletag/model.hpp"

namespace simpletag {

struct TrainConfig {
  double learning_rate = 5e-5;
  double grad_clip_norm = 1.0;
  std::size_t batch_size = 16;
  std::size_t epochs = 100;
  std::uint64_t seed = 42;
  // Stop once dev F1 reaches this value; 0 disables early stopping.
  double target_f1 = 0;
  Ablation ablation;

  void validate() const;
};

// A sentence ready for training: ids and gold tag surfaces.
struct Example {
  LabeledSentence sentence;
  std::vector<int> ids;
  TagTargets targets;
};

// Drops (with a warning) sentences longer than max_len or whose triplets
// conflict on the tag surfaces.
std::vector<Example> prepare_examples(const std::vector<LabeledSentence>& corpus,
                                      const Vocabulary& vocab, std::size_t max_len,
                                      std::vector<std::string>* warnings = nullptr);

// Summed cross-entropy over the n tokens and all n*n cells of one sentence.
ag::Var joint_loss(const FusedLogits& fused, const TagTargets& targets);
double joint_loss_value(const Tensor& logits1d, const Tensor& logits2d, const TagTargets& targets);

// L2 norm over every gradient the last backward pass reached.
double global_grad_norm(const ParameterSet& params);

// Rescales every gradient so that their global norm is at most max_norm.
// Returns the norm before clipping; throws NumericError if it is not finite.
double clip_grad_norm(const ParameterSet& params, double max_norm);

// Adam with global-norm clipping. Parameters whose gradient is empty (not
// reached by backward) are skipped and keep their state.
class Adam {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  struct StepStats {
    double grad_norm = 0;   // before clipping
    double applied_norm = 0;
  };

  // Consumes and clears the gradients in `params`.
  StepStats step(const ParameterSet& params, double learning_rate, double clip_norm);

 private:
  struct Slot {
    Tensor m, v;
    std::uint64_t t = 0;
  };
  std::map<std::string, Slot> slots_;
};

void zero_grads(const ParameterSet& params);

// Forward, loss, backward and one Adam update on `batch`. Returns the mean
// per-sentence loss. Throws NumericError on a non-finite loss.
double train_step(const ModelView& view, Adam& optimizer, std::span<const Example* const> batch,
                  const TrainConfig& config, Rng& rng);

// Inference-mode decoding. Sentences longer than max_len yield an empty
// prediction and a warning.
std::vector<TripletSet> predict(const ModelView& view, const Vocabulary& vocab,
                                const std::vector<std::vector<std::string>>& sentences,
                                std::vector<std::string>* warnings = nullptr);

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0;
  PRF dev;
};

struct FitResult {
  std::vector<EpochRecord> history;
  double best_f1 = -1;
  std::size_t best_epoch = 0;
  std::string best_checkpoint;  // serialized container of the best-dev weights
};

// Writes one JSON object per line.
std::string format_log_record(const EpochRecord& record);

// Runs config.epochs epochs over `train` (seeded shuffle, fixed batch size),
// scoring `dev` after each epoch. The model is left at its final weights.
FitResult fit(Model& model, const Vocabulary& vocab, const TrainConfig& config,
              const std::vector<Example>& train, const std::vector<LabeledSentence>& dev,
              std::ostream* log = nullptr);

}  // namespace simpletag
