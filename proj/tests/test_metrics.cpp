#include <gtest/gtest.h>

#include "simpletag/errors.hpp"
#include "simpletag/metrics.hpp"

namespace simpletag {
namespace {

Triplet tri(std::size_t a, std::size_t o, Sentiment s = Sentiment::Pos) { return {{a, a}, {o, o}, s}; }

TEST(Metrics, HandCountedExample) {
  // sentence 1: gold {t1,t2}, pred {t1, t3}; sentence 2: gold {t4,t5}, pred {t4}
  const std::vector<TripletSet> gold{{tri(0, 1), tri(2, 3)}, {tri(0, 2), tri(4, 5, Sentiment::Neg)}};
  const std::vector<TripletSet> pred{{tri(0, 1), tri(2, 3, Sentiment::Neu)}, {tri(0, 2)}};
  const auto p = score(pred, gold);
  EXPECT_EQ(p.tp, 2u);
  EXPECT_EQ(p.fp, 1u);
  EXPECT_EQ(p.fn, 2u);
  EXPECT_NEAR(p.precision, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(p.recall, 0.5, 1e-12);
  EXPECT_NEAR(p.f1, 4.0 / 7.0, 1e-12);
}

TEST(Metrics, Identity) {
  const std::vector<TripletSet> gold{{tri(0, 1), tri(2, 3), tri(4, 5)}, {tri(0, 1), tri(1, 2)}};
  const auto p = score(gold, gold);
  EXPECT_EQ(p.tp, 5u);
  EXPECT_EQ(p.precision, 1.0);
  EXPECT_EQ(p.recall, 1.0);
  EXPECT_EQ(p.f1, 1.0);
}

TEST(Metrics, DegenerateCases) {
  const std::vector<TripletSet> gold{{tri(0, 1)}};
  const std::vector<TripletSet> none{{}};
  auto p = score(none, gold);
  EXPECT_EQ(p.precision, 0.0);
  EXPECT_EQ(p.recall, 0.0);
  EXPECT_EQ(p.f1, 0.0);
  p = score(none, none);
  EXPECT_EQ(p.precision, 0.0);
  EXPECT_EQ(p.f1, 0.0);
  EXPECT_THROW(score(none, {}), DataError);
}

TEST(Metrics, ExactMatchOnAllFields) {
  const std::vector<TripletSet> gold{{{{0, 1}, {3, 3}, Sentiment::Pos}}};
  EXPECT_EQ(score({{{{0, 0}, {3, 3}, Sentiment::Pos}}}, gold).tp, 0u);
  EXPECT_EQ(score({{{{0, 1}, {2, 3}, Sentiment::Pos}}}, gold).tp, 0u);
  EXPECT_EQ(score({{{{0, 1}, {3, 3}, Sentiment::Neg}}}, gold).tp, 0u);
  EXPECT_EQ(score({{{{0, 1}, {3, 3}, Sentiment::Pos}}}, gold).tp, 1u);
}

TEST(Metrics, SymmetryBoundsMonotonicity) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> u(0, 4);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<TripletSet> a(3), b(3);
    for (std::size_t s = 0; s < 3; ++s) {
      for (int k = u(rng); k > 0; --k) a[s].push_back(tri(u(rng), 5 + u(rng), static_cast<Sentiment>(u(rng) % 3)));
      for (int k = u(rng); k > 0; --k) b[s].push_back(tri(u(rng), 5 + u(rng), static_cast<Sentiment>(u(rng) % 3)));
      for (auto* v : {&a[s], &b[s]}) {
        std::sort(v->begin(), v->end());
        v->erase(std::unique(v->begin(), v->end(), [](const Triplet& x, const Triplet& y) {
                   return x.aspect == y.aspect && x.opinion == y.opinion;
                 }),
                 v->end());
      }
    }
    const auto ab = score(a, b), ba = score(b, a);
    EXPECT_EQ(ab.precision, ba.recall);
    EXPECT_EQ(ab.recall, ba.precision);
    EXPECT_EQ(ab.f1, ba.f1);
    for (double m : {ab.precision, ab.recall, ab.f1}) {
      EXPECT_GE(m, 0.0);
      EXPECT_LE(m, 1.0);
    }
    // add a gold triplet that the prediction is missing
    for (std::size_t s = 0; s < 3; ++s) {
      for (const auto& t : b[s]) {
        if (std::find(a[s].begin(), a[s].end(), t) != a[s].end()) continue;
        auto more = a;
        more[s].push_back(t);
        const auto m = score(more, b);
        EXPECT_EQ(m.tp, ab.tp + 1);
        EXPECT_GE(m.recall, ab.recall);
        EXPECT_GE(m.f1, ab.f1);
        break;
      }
    }
  }
}

TEST(Metrics, MacroAndReport) {
  const std::vector<TripletSet> gold{{tri(0, 1)}, {tri(0, 1), tri(2, 3)}};
  const std::vector<TripletSet> pred{{tri(0, 1)}, {}};
  const auto r = score_report(pred, gold);
  EXPECT_EQ(r.sentences, 2u);
  EXPECT_NEAR(r.macro_f1, 0.5, 1e-12);
  EXPECT_NEAR(r.micro.f1, 0.5, 1e-12);
  const auto text = format_report(r);
  EXPECT_NE(text.find("precision"), std::string::npos);
  EXPECT_NE(format_prf_line(r.micro).find("tp=1"), std::string::npos);
}

TEST(Metrics, MacroSkipsSentencesWithNothingOnEitherSide) {
  const std::vector<TripletSet> gold{{tri(0, 1)}, {}, {tri(2, 3)}};
  EXPECT_EQ(score_report(gold, gold).macro_f1, 1.0);
  const std::vector<TripletSet> pred{{tri(0, 1)}, {}, {}};
  EXPECT_NEAR(score_report(pred, gold).macro_f1, 0.5, 1e-12);
  EXPECT_EQ(score_report(std::vector<TripletSet>(2), std::vector<TripletSet>(2)).macro_f1, 0.0);
}

}  // namespace
}  // namespace simpletag
