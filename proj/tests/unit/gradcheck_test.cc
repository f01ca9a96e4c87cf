// Copyright 2026 The FVQ Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <string>

#include <gtest/gtest.h>

#include "fvq/tensor.h"
#include "gradcheck_suite.h"

namespace fvq::testing {
namespace {

class LayerGradient : public ::testing::TestWithParam<GradCase> {};

TEST_P(LayerGradient, FiftySeeds) {
  const GradCase& c = GetParam();
  double worst = 0.0;
  std::uint64_t worst_seed = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const double e = c.max_rel_error(seed);
    if (e > worst) {
      worst = e;
      worst_seed = seed;
    }
  }
  EXPECT_LT(worst, kGradTolerance) << c.name << " worst at seed " << worst_seed;
}

INSTANTIATE_TEST_SUITE_P(AllLayers, LayerGradient, ::testing::ValuesIn(grad_cases()),
                         [](const auto& info) { return info.param.name; });

}  // namespace
}  // namespace fvq::testing
