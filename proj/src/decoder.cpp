#include "simpletag/decoder.hpp"

#include <algorithm>
#include <array>

#include "simpletag/errors.hpp"

namespace simpletag {

namespace {

template <std::size_t K>
int argmax_row(std::span<const Real> row) {
  int best = 0;
  for (std::size_t k = 1; k < K; ++k)
    if (row[k] > row[best]) best = static_cast<int>(k);
  return best;
}

std::size_t square_side(const Tensor& logits2d) {
  const auto& s = logits2d.shape();
  if (s.size() != 3 || s[0] != s[1] || s[2] != kNumTags2D) {
    throw NumericError("expected (n,n,4) 2D logits, got " + shape_string(s));
  }
  return s[0];
}

}  // namespace

SpanRuns extract_spans(std::span<const Tag1D> tags) {
  SpanRuns out;
  std::size_t i = 0;
  while (i < tags.size()) {
    const Tag1D tag = tags[i];
    std::size_t j = i;
    while (j + 1 < tags.size() && tags[j + 1] == tag) ++j;
    if (tag == Tag1D::A) out.aspects.push_back({i, j});
    if (tag == Tag1D::O) out.opinions.push_back({i, j});
    i = j + 1;
  }
  return out;
}

std::vector<Tag1D> argmax_tags1d(const Tensor& logits1d) {
  if (logits1d.rank() != 2 || logits1d.dim(1) != kNumTags1D) {
    throw NumericError("expected (n,3) 1D logits, got " + shape_string(logits1d.shape()));
  }
  std::vector<Tag1D> out(logits1d.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<Tag1D>(argmax_row<kNumTags1D>(logits1d.data().subspan(i * kNumTags1D, kNumTags1D)));
  return out;
}

std::vector<Tag2D> argmax_tags2d(const Tensor& logits2d) {
  const std::size_t n = square_side(logits2d);
  std::vector<Tag2D> out(n * n);
  for (std::size_t c = 0; c < out.size(); ++c)
    out[c] = static_cast<Tag2D>(argmax_row<kNumTags2D>(logits2d.data().subspan(c * kNumTags2D, kNumTags2D)));
  return out;
}

std::optional<Sentiment> assign_sentiment(const Span& aspect, const Span& opinion,
                                          std::span<const Tag2D> tags2d, const Tensor& logits2d) {
  const std::size_t n = square_side(logits2d);
  std::array<int, 3> votes{};
  std::array<Real, 3> mass{};
  for (std::size_t i = aspect.start; i <= aspect.end; ++i)
    for (std::size_t j = opinion.start; j <= opinion.end; ++j) {
      const std::size_t lo = std::min(i, j), hi = std::max(i, j);
      const Tag2D tag = tags2d[lo * n + hi];
      if (tag == Tag2D::N) continue;
      const auto c = static_cast<std::size_t>(tag);
      ++votes[c];
      mass[c] += logits2d.at(lo, hi, c);
    }
  const int top = *std::max_element(votes.begin(), votes.end());
  if (top == 0) return std::nullopt;

  constexpr std::array<Sentiment, 3> kPriority{Sentiment::Pos, Sentiment::Neg, Sentiment::Neu};
  std::optional<Sentiment> best;
  for (Sentiment s : kPriority) {
    const auto c = static_cast<std::size_t>(s);
    if (votes[c] != top) continue;
    if (!best || mass[c] > mass[static_cast<std::size_t>(*best)]) best = s;
  }
  return best;
}

TripletSet decode_triplets(const Tensor& logits1d, const Tensor& logits2d) {
  const std::size_t n = square_side(logits2d);
  if (logits1d.rank() != 2 || logits1d.dim(0) != n) {
    throw NumericError("1D and 2D logits disagree on sentence length");
  }
  if (!logits1d.all_finite() || !logits2d.all_finite()) {
    throw NumericError("cannot decode non-finite logits");
  }
  const auto tags1d = argmax_tags1d(logits1d);
  const auto tags2d = argmax_tags2d(logits2d);
  const auto runs = extract_spans(tags1d);
  TripletSet out;
  for (const auto& a : runs.aspects)
    for (const auto& o : runs.opinions)
      if (auto s = assign_sentiment(a, o, tags2d, logits2d)) out.push_back({a, o, *s});
  return out;
}

TripletSet decode_triplets(const FusedLogits& fused) {
  return decode_triplets(fused.logits1d->value, fused.logits2d->value);
}

std::pair<Tensor, Tensor> one_hot_logits(const TagTargets& targets, Real margin) {
  const std::size_t n = targets.n;
  Tensor l1({n, static_cast<std::size_t>(kNumTags1D)});
  Tensor l2({n, n, static_cast<std::size_t>(kNumTags2D)});
  for (std::size_t i = 0; i < n; ++i) {
    l1.at(i, static_cast<std::size_t>(targets.tags1d[i])) = margin;
    for (std::size_t j = 0; j < n; ++j) l2.at(i, j, static_cast<std::size_t>(targets.at(i, j))) = margin;
  }
  return {std::move(l1), std::move(l2)};
}

}  // namespace simpletag
