// Finite-difference checks of the analytic gradients, per module and for
// the composed model. Everything runs in double precision.

#include <gtest/gtest.h>

#include "gradient_cases.hpp"

namespace simpletag {
namespace {

class Gradients : public ::testing::TestWithParam<testing::GradCase> {};

TEST_P(Gradients, MatchCentralDifferences) {
  const auto r = GetParam().run();
  EXPECT_GE(r.coordinates, 50u);
  EXPECT_LE(r.max_rel_error, testing::kGradTolerance) << r.worst;
}

INSTANTIATE_TEST_SUITE_P(All, Gradients, ::testing::ValuesIn(testing::gradient_cases()),
                         [](const auto& info) { return info.param.name; });

}  // namespace
}  // namespace simpletag
