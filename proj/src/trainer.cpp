#include "simpletag/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "simpletag/checkpoint.hpp"
#include "simpletag/errors.hpp"

namespace simpletag {

namespace {

void warn(std::vector<std::string>* sink, const std::string& message) {
  spdlog::warn("{}", message);
  if (sink) sink->push_back(message);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
  if (!(grad_clip_norm > 0)) throw ConfigError("grad_clip_norm must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (target_f1 < 0 || target_f1 > 1) throw ConfigError("target_f1 must lie in [0, 1]");
  ablation.branches.validate();
}

std::vector<Example> prepare_examples(const std::vector<LabeledSentence>& corpus,
                                      const Vocabulary& vocab, std::size_t max_len,
                                      std::vector<std::string>* warnings) {
  std::vector<Example> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& s = corpus[i];
    if (s.tokens.size() > max_len) {
      warn(warnings, "sentence " + std::to_string(i + 1) + " skipped: " +
                         std::to_string(s.tokens.size()) + " tokens exceed max_len " +
                         std::to_string(max_len));
      continue;
    }
    try {
      out.push_back({s, vocab.encode(s.tokens), encode_tags(s)});
    } catch (const ConflictError& e) {
      warn(warnings, "sentence " + std::to_string(i + 1) + " skipped: " + e.what());
    }
  }
  return out;
}

ag::Var joint_loss(const FusedLogits& fused, const TagTargets& targets) {
  const auto& s1 = fused.logits1d->value.shape();
  const auto& s2 = fused.logits2d->value.shape();
  const std::size_t n = targets.n;
  if (s1 != Shape{n, static_cast<std::size_t>(kNumTags1D)} ||
      s2 != Shape{n, n, static_cast<std::size_t>(kNumTags2D)}) {
    throw NumericError("loss: logits " + shape_string(s1) + "/" + shape_string(s2) +
                       " do not match a sentence of length " + std::to_string(n));
  }
  const auto c1 = targets.classes1d();
  const auto c2 = targets.classes2d();
  return ag::add(ag::cross_entropy_sum(fused.logits1d, c1), ag::cross_entropy_sum(fused.logits2d, c2));
}

double joint_loss_value(const Tensor& logits1d, const Tensor& logits2d, const TagTargets& targets) {
  return joint_loss({ag::constant(logits1d), ag::constant(logits2d)}, targets)->value[0];
}

double global_grad_norm(const ParameterSet& params) {
  double sq = 0;
  for (const auto& p : params.parameters)
    for (Real g : p.var->grad.data()) sq += g * g;
  return std::sqrt(sq);
}

void zero_grads(const ParameterSet& params) {
  for (const auto& p : params.parameters) p.var->grad = Tensor();
}

double clip_grad_norm(const ParameterSet& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (const auto& p : params.parameters)
      for (Real& g : p.var->grad.data()) g *= factor;
  }
  return norm;
}

Adam::StepStats Adam::step(const ParameterSet& params, double learning_rate, double clip_norm) {
  StepStats stats;
  stats.grad_norm = clip_grad_norm(params, clip_norm);
  stats.applied_norm = std::min(stats.grad_norm, clip_norm);

  for (const auto& p : params.parameters) {
    auto& node = *p.var;
    if (node.grad.empty()) continue;
    auto& slot = slots_[p.name];
    if (slot.m.empty()) {
      slot.m = Tensor::zeros_like(node.value);
      slot.v = Tensor::zeros_like(node.value);
    }
    ++slot.t;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(slot.t));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(slot.t));
    for (std::size_t i = 0; i < node.value.size(); ++i) {
      const double g = node.grad[i];
      slot.m[i] = kBeta1 * slot.m[i] + (1 - kBeta1) * g;
      slot.v[i] = kBeta2 * slot.v[i] + (1 - kBeta2) * g * g;
      const double m_hat = slot.m[i] / c1;
      const double v_hat = slot.v[i] / c2;
      node.value[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + kEps);
    }
  }
  zero_grads(params);
  return stats;
}

double train_step(const ModelView& view, Adam& optimizer, std::span<const Example* const> batch,
                  const TrainConfig& config, Rng& rng) {
  if (batch.empty()) throw DataError("train_step: empty batch");
  std::vector<std::vector<int>> ids;
  for (const auto* e : batch) ids.push_back(e->ids);
  const auto params = view.model().parameters();
  zero_grads(params);

  const auto fused = view.forward(ids, {true, &rng});
  std::vector<ag::Var> losses;
  for (std::size_t b = 0; b < batch.size(); ++b) losses.push_back(joint_loss(fused[b], batch[b]->targets));
  const auto total = ag::scale(ag::add_n(losses), 1.0 / static_cast<double>(batch.size()));
  const double value = total->value[0];
  if (!std::isfinite(value)) {
    throw NumericError("non-finite training loss (" + std::to_string(value) + ")");
  }
  ag::backward(total);
  optimizer.step(params, config.learning_rate, config.grad_clip_norm);
  return value;
}

std::vector<TripletSet> predict(const ModelView& view, const Vocabulary& vocab,
                                const std::vector<std::vector<std::string>>& sentences,
                                std::vector<std::string>* warnings) {
  const std::size_t max_len = view.model().config().encoder.max_len;
  std::vector<TripletSet> out(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (sentences[i].empty()) continue;
    if (sentences[i].size() > max_len) {
      warn(warnings, "sentence " + std::to_string(i + 1) + ": " +
                         std::to_string(sentences[i].size()) + " tokens exceed max_len " +
                         std::to_string(max_len) + "; empty prediction");
      continue;
    }
    const std::vector<std::vector<int>> batch{vocab.encode(sentences[i])};
    out[i] = decode_triplets(view.forward(batch, {false, nullptr}).front());
  }
  return out;
}

std::string format_log_record(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["step"] = r.step;
  j["loss"] = r.loss;
  j["dev_p"] = r.dev.precision;
  j["dev_r"] = r.dev.recall;
  j["dev_f1"] = r.dev.f1;
  return j.dump();
}

FitResult fit(Model& model, const Vocabulary& vocab, const TrainConfig& config,
              const std::vector<Example>& train, const std::vector<LabeledSentence>& dev,
              std::ostream* log) {
  config.validate();
  if (train.empty()) throw DataError("no usable training sentences");
  const ModelView view = apply_ablation(model, config.ablation);
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  Adam optimizer;

  std::vector<std::vector<std::string>> dev_tokens;
  std::vector<TripletSet> dev_gold;
  for (const auto& s : dev) {
    dev_tokens.push_back(s.tokens);
    TripletSet gold = s.triplets;
    std::sort(gold.begin(), gold.end());
    dev_gold.push_back(std::move(gold));
  }

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  FitResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      std::vector<const Example*> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + config.batch_size); ++k)
        batch.push_back(&train[order[k]]);
      loss_sum += train_step(view, optimizer, batch, config, rng);
      ++batches;
      ++step;
    }

    EpochRecord record{epoch, step, loss_sum / static_cast<double>(batches), {}};
    if (!dev.empty()) record.dev = score(predict(view, vocab, dev_tokens), dev_gold);
    result.history.push_back(record);
    if (log) *log << format_log_record(record) << '\n' << std::flush;

    if (record.dev.f1 > result.best_f1) {
      result.best_f1 = record.dev.f1;
      result.best_epoch = epoch;
      result.best_checkpoint = checkpoint_bytes(model, vocab, config.ablation);
    }
    if (config.target_f1 > 0 && record.dev.f1 >= config.target_f1) break;
  }
  return result;
}

}  // namespace simpletag
