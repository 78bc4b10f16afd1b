#pragma once

#include <optional>
#include <span>
#include <vector>

#include "simpletag/corpus.hpp"
#include "simpletag/heads.hpp"
#include "simpletag/tensor.hpp"

namespace simpletag {

// Triplets ordered by aspect, then opinion.
using TripletSet = std::vector<Triplet>;

struct SpanRuns {
  std::vector<Span> aspects;
  std::vector<Span> opinions;
};

// Maximal runs of A and of O, left to right.
SpanRuns extract_spans(std::span<const Tag1D> tags);

// Row-wise argmax; on equal logits the lower class index wins.
std::vector<Tag1D> argmax_tags1d(const Tensor& logits1d);  // (n,3) -> n
std::vector<Tag2D> argmax_tags2d(const Tensor& logits2d);  // (n,n,4) -> n*n

// Majority vote over the upper-triangle cells linking the two spans.
// Ties between classes go to the larger summed logit of each class over the
// cells that voted for it, then to the fixed order Pos > Neg > Neu.
// Returns nothing when every counted cell is N.
std::optional<Sentiment> assign_sentiment(const Span& aspect, const Span& opinion,
                                          std::span<const Tag2D> tags2d, const Tensor& logits2d);

TripletSet decode_triplets(const Tensor& logits1d, const Tensor& logits2d);
TripletSet decode_triplets(const FusedLogits& fused);

// Logits whose argmax reproduces the targets: `margin` on the gold class, 0 elsewhere.
std::pair<Tensor, Tensor> one_hot_logits(const TagTargets& targets, Real margin = 1.0);

}  // namespace simpletag
