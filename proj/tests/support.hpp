#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "simpletag/autograd.hpp"
#include "simpletag/corpus.hpp"
#include "simpletag/decoder.hpp"
#include "simpletag/nn.hpp"

namespace simpletag::testing {

inline std::string data_path(const std::string& name) { return std::string(SIMPLETAG_TEST_DATA) + "/" + name; }

inline Tensor random_tensor(Shape shape, Rng& rng, Real lo = -1, Real hi = 1) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<Real> u(lo, hi);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t coordinates = 0;
  std::string worst;  // "param[index]: analytic vs numeric"
};

// Relative error with a floor on the denominator. Below the floor both
// values are compared absolutely; round-off in the central difference of a
// loss of magnitude ~1e2 is around 1e-9, so the floor sits well above that.
inline double relative_error(double analytic, double numeric, double floor = 1e-4) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Compares d(loss)/d(param) from backward() with central differences at
// `samples` random coordinates spread over `params`. `loss` must rebuild the
// graph from the current parameter values on every call.
inline GradCheckResult grad_check(const std::function<ag::Var()>& loss,
                                  const std::vector<std::pair<std::string, ag::Var>>& params,
                                  std::size_t samples, std::uint64_t seed, double step = 1e-5) {
  for (const auto& [name, p] : params) p->grad = Tensor();
  ag::backward(loss());
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  std::size_t total = 0;
  for (const auto& [name, p] : params) total += p->value.size();
  Rng rng(seed);
  for (std::size_t s = 0; s < samples; ++s) {
    std::size_t flat = std::uniform_int_distribution<std::size_t>(0, total - 1)(rng);
    std::size_t k = 0;
    while (flat >= params[k].second->value.size()) flat -= params[k++].second->value.size();
    coords.emplace_back(k, flat);
  }
  GradCheckResult out;
  for (auto [k, i] : coords) {
    const auto& p = params[k].second;
    const double analytic = p->grad.empty() ? 0.0 : p->grad[i];
    const Real saved = p->value[i];
    p->value[i] = saved + step;
    const double up = loss()->value[0];
    p->value[i] = saved - step;
    const double down = loss()->value[0];
    p->value[i] = saved;
    const double numeric = (up - down) / (2 * step);
    const double err = relative_error(analytic, numeric);
    ++out.coordinates;
    if (err > out.max_rel_error) {
      out.max_rel_error = err;
      out.worst = params[k].first + "[" + std::to_string(i) + "]: " + std::to_string(analytic) + " vs " +
                  std::to_string(numeric);
    }
  }
  return out;
}

// Straightforward restatement of the decoding rules used as an oracle for
// decode_triplets. Written independently: explicit loops, no shared helpers.
inline std::vector<Triplet> brute_force_decode(const Tensor& l1, const Tensor& l2) {
  const std::size_t n = l1.dim(0);
  std::vector<int> tag(n);
  for (std::size_t i = 0; i < n; ++i) {
    int best = 0;
    for (int c = 1; c < 3; ++c)
      if (l1.at(i, c) > l1.at(i, best)) best = c;
    tag[i] = best;
  }
  auto cell = [&](std::size_t i, std::size_t j) {
    int best = 0;
    for (int c = 1; c < 4; ++c)
      if (l2.at(i, j, c) > l2.at(i, j, best)) best = c;
    return best;
  };
  auto runs = [&](int want) {
    std::vector<Span> out;
    std::size_t i = 0;
    while (i < n) {
      if (tag[i] != want) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < n && tag[j] == want) ++j;
      out.push_back({i, j - 1});
      i = j;
    }
    return out;
  };
  // Tag2D order is Pos, Neu, Neg, N; ties prefer Pos, then Neg, then Neu.
  const int priority[3] = {0, 2, 1};
  std::vector<Triplet> out;
  for (const Span& a : runs(0)) {
    for (const Span& o : runs(1)) {
      int votes[4] = {0, 0, 0, 0};
      double mass[4] = {0, 0, 0, 0};
      for (std::size_t x = a.start; x <= a.end; ++x) {
        for (std::size_t y = o.start; y <= o.end; ++y) {
          const std::size_t i = std::min(x, y), j = std::max(x, y);
          const int c = cell(i, j);
          ++votes[c];
          mass[c] += l2.at(i, j, c);
        }
      }
      int best = -1;
      for (int c : priority) {
        if (votes[c] == 0) continue;
        if (best < 0 || votes[c] > votes[best] || (votes[c] == votes[best] && mass[c] > mass[best])) best = c;
      }
      if (best < 0) continue;
      const Sentiment s = best == 0 ? Sentiment::Pos : best == 1 ? Sentiment::Neu : Sentiment::Neg;
      out.push_back({a, o, s});
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace simpletag::testing
