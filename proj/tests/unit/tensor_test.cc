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

#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "fvq/random.h"
#include "fvq/tensor.h"

namespace fvq {
namespace {

class TensorTest : public ::testing::Test {
 protected:
  void SetUp() override { reset_record(); }
  void TearDown() override { reset_record(); }
};

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }
std::vector<double> grads(const Tensor& t) { return {t.grad().begin(), t.grad().end()}; }

TEST_F(TensorTest, ElementwiseExamples) {
  EXPECT_EQ(vals(add(Tensor::from({2}, {1, 2}), Tensor::from({2}, {3, 4}))), (std::vector<double>{4, 6}));
  EXPECT_EQ(vals(scale(Tensor::from({2}, {2, 3}), 0.0)), (std::vector<double>{0, 0}));
  Tensor x = Tensor::from({1}, {3}, true);
  backward(sum(square(x)));
  EXPECT_EQ(grads(x), (std::vector<double>{6}));
}

TEST_F(TensorTest, TrailingBroadcast) {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Tensor b = Tensor::from({3}, {10, 20, 30}, true);
  EXPECT_EQ(vals(add(a, b)), (std::vector<double>{11, 22, 33, 14, 25, 36}));
  backward(sum(add(a, b)));
  EXPECT_EQ(grads(b), (std::vector<double>{2, 2, 2}));
}

TEST_F(TensorTest, ShapeMismatchNamesBothShapes) {
  try {
    add(Tensor::zeros({2, 3}), Tensor::zeros({2}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2]"), std::string::npos) << msg;
  }
}

TEST_F(TensorTest, MatmulExamples) {
  const Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(vals(matmul(Tensor::from({2, 2}, {1, 0, 0, 1}), m)), vals(m));
  EXPECT_EQ(vals(matmul(Tensor::from({1, 2}, {1, 0}), Tensor::from({2, 1}, {0, 1}))), (std::vector<double>{0}));
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
}

TEST_F(TensorTest, MatmulGradientMatchesTransposeProducts) {
  Rng rng(7);
  Tensor a = rng.normal_tensor({4, 5}, 1.0, true);
  Tensor b = rng.normal_tensor({5, 3}, 1.0, true);
  const Tensor g = rng.normal_tensor({4, 3}, 1.0);
  backward(sum(mul(matmul(a, b), g)));
  // dL/da = g b^T, dL/db = a^T g, by explicit loops.
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t k = 0; k < 5; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < 3; ++j) s += g.at(i, j) * b.at(k, j);
      EXPECT_NEAR(a.grad()[i * 5 + k], s, 1e-12);
    }
  }
  for (std::size_t k = 0; k < 5; ++k) {
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < 4; ++i) s += a.at(i, k) * g.at(i, j);
      EXPECT_NEAR(b.grad()[k * 3 + j], s, 1e-12);
    }
  }
}

TEST_F(TensorTest, MatmulFiniteDifference) {
  Rng rng(11);
  Tensor a = rng.normal_tensor({4, 5}, 1.0, true);
  Tensor b = rng.normal_tensor({5, 3}, 1.0, true);
  std::vector<Tensor> in{a, b};
  EXPECT_LT(finite_diff_check([&] { return sum(matmul(a, b)); }, in, 1e-5), 1e-6);
}

TEST_F(TensorTest, Reductions) {
  EXPECT_EQ(sum(Tensor::from({3}, {1, 2, 3})).item(), 6.0);
  EXPECT_EQ(vals(mean(Tensor::full({2, 3}, 1.0), 0)), (std::vector<double>{1, 1, 1}));
  EXPECT_EQ(vals(sum(Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}), 1)), (std::vector<double>{6, 15}));
  EXPECT_THROW(sum(Tensor::zeros({2, 3}), 2), IndexError);
  Tensor x = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
  backward(sum(x));
  EXPECT_EQ(grads(x), (std::vector<double>{1, 1, 1, 1}));
  reset_record();
  x.zero_grad();
  backward(mean(x));
  EXPECT_EQ(grads(x), (std::vector<double>{0.25, 0.25, 0.25, 0.25}));
}

TEST_F(TensorTest, GatherRows) {
  Tensor table = Tensor::from({3, 2}, {1, 1, 2, 2, 9, 9}, true);
  const std::vector<std::int32_t> idx{1, 1, 0};
  Tensor rows = gather_rows(table, idx);
  EXPECT_EQ(vals(rows), (std::vector<double>{2, 2, 2, 2, 1, 1}));
  backward(sum(rows));
  // Row gradients count occurrences; row 2 is never selected.
  EXPECT_EQ(grads(table), (std::vector<double>{1, 1, 2, 2, 0, 0}));
  const std::vector<std::int32_t> bad{3};
  EXPECT_THROW(gather_rows(table, bad), IndexError);
}

TEST_F(TensorTest, Detach) {
  Tensor x = Tensor::from({3}, {1, -2, 5}, true);
  EXPECT_EQ(vals(detach(x)), vals(x));
  backward(sum(mul(detach(x), x)));
  EXPECT_EQ(grads(x), vals(x));
  reset_record();
  x.zero_grad();
  Tensor y = Tensor::from({3}, {1, 1, 1}, true);
  backward(add(sum(detach(x)), sum(y)));
  EXPECT_EQ(grads(x), (std::vector<double>{0, 0, 0}));
}

TEST_F(TensorTest, BackwardContract) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  EXPECT_THROW(backward(scale(x, 2.0)), GradError);  // non-scalar
  reset_record();
  Tensor loss = sum(square(x));
  backward(loss);
  EXPECT_THROW(backward(loss), GradError);
  reset_record();
  x.zero_grad();
  backward(sum(square(x)));
  EXPECT_EQ(grads(x), (std::vector<double>{2, 4}));
}

TEST_F(TensorTest, RecordIsAppendOnlyWithInputsFirst) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  Tensor y = mul(square(x), add(x, 1.0));
  sum(y);
  const auto& rec = ComputationRecord::active();
  ASSERT_GT(rec.size(), 0u);
  for (std::size_t i = 0; i < rec.size(); ++i) {
    for (std::int64_t id : rec.node(i).input_ids) EXPECT_LT(id, static_cast<std::int64_t>(i));
  }
}

TEST_F(TensorTest, NoGradGuardRecordsNothing) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  {
    NoGradGuard guard;
    Tensor y = square(x);
    EXPECT_FALSE(y.requires_grad());
    EXPECT_EQ(ComputationRecord::active().size(), 0u);
  }
  EXPECT_TRUE(grad_enabled());
}

TEST_F(TensorTest, StraightThroughPassesGradientUnchanged) {
  Tensor a = Tensor::from({3}, {0.3, -1.7, 2.2}, true);
  const Tensor target = Tensor::from({3}, {1, 2, 3});
  Tensor y = straight_through(a, target);
  EXPECT_EQ(vals(y), vals(target));
  const Tensor g = Tensor::from({3}, {0.1, -7.25, 3.0 / 7.0});
  backward(sum(mul(y, g)));
  EXPECT_EQ(grads(a), vals(g));
}

TEST_F(TensorTest, SoftmaxRowsSumToOne) {
  Rng rng(3);
  const Tensor s = softmax(rng.normal_tensor({5, 7}, 3.0));
  for (std::size_t r = 0; r < 5; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 7; ++c) total += s.at(r, c);
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST_F(TensorTest, FiniteDiffCheckExamples) {
  Rng rng(5);
  const Tensor x = rng.normal_tensor({6}, 1.0);
  EXPECT_LT(finite_diff_check([](const Tensor& t) { return sum(square(t)); }, x, 1e-5), 1e-7);
  EXPECT_EQ(finite_diff_check([](const Tensor&) { return Tensor::scalar(3.0); }, x, 1e-5), 0.0);
  const Tensor logits = rng.normal_tensor({3, 4}, 1.0);
  const Tensor onehot = Tensor::from({3, 4}, {1, 0, 0, 0, 0, 0, 1, 0, 0, 1, 0, 0});
  auto cross = [&](const Tensor& t) { return scale(sum(mul(log(softmax(t)), onehot)), -1.0); };
  EXPECT_LT(finite_diff_check(cross, logits, 1e-5), 1e-5);
  EXPECT_THROW(finite_diff_check([](const Tensor& t) { return sum(t); }, x, 0.0), std::invalid_argument);
}

TEST_F(TensorTest, LinearLayerNormCompositionFiniteDifference) {
  Rng rng(9);
  const Tensor w = rng.normal_tensor({4, 3}, 1.0);
  const Tensor gain = Tensor::full({3}, 1.0), shift = Tensor::zeros({3});
  const Tensor up = rng.normal_tensor({2, 3}, 1.0);
  auto f = [&](const Tensor& x) { return sum(mul(layer_norm(matmul(x, w), gain, shift, 1e-5), up)); };
  EXPECT_LT(finite_diff_check(f, rng.normal_tensor({2, 4}, 1.0), 1e-5), 1e-5);
}

// Every differentiable op, 50 seeds, relative error < 1e-5.
struct OpCase {
  const char* name;
  Shape shape;
  bool positive;
  std::function<Tensor(const Tensor&)> op;
};

class OpGradient : public ::testing::TestWithParam<OpCase> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
  const OpCase& c = GetParam();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(derive_seed(seed, 100));
    Tensor x = rng.normal_tensor(c.shape, 1.0);
    if (c.positive) {
      for (double& v : x.mutable_values()) v = 0.5 + std::abs(v);
    }
    const Tensor probe = rng.normal_tensor(c.op(x).shape(), 1.0);
    worst = std::max(worst, finite_diff_check([&](const Tensor& t) { return sum(mul(c.op(t), probe)); }, x, 1e-5));
  }
  EXPECT_LT(worst, 1e-5) << c.name;
}

const Tensor kOther = Rng(42).normal_tensor({3, 4}, 1.0);
const Tensor kRight = Rng(43).normal_tensor({4, 2}, 1.0);
const std::vector<std::size_t> kTakeOrder{11, 0, 5, 5, 3, 7};
const std::vector<std::int32_t> kRows{2, 0, 2};

INSTANTIATE_TEST_SUITE_P(
    AllOps, OpGradient,
    ::testing::Values(
        OpCase{"add", {3, 4}, false, [](const Tensor& x) { return add(x, kOther); }},
        OpCase{"sub", {3, 4}, false, [](const Tensor& x) { return sub(kOther, x); }},
        OpCase{"mul", {3, 4}, false, [](const Tensor& x) { return mul(x, x); }},
        OpCase{"scale", {3, 4}, false, [](const Tensor& x) { return scale(x, -1.5); }},
        OpCase{"square", {3, 4}, false, [](const Tensor& x) { return square(x); }},
        OpCase{"sqrt", {3, 4}, true, [](const Tensor& x) { return sqrt(x); }},
        OpCase{"exp", {3, 4}, false, [](const Tensor& x) { return exp(x); }},
        OpCase{"log", {3, 4}, true, [](const Tensor& x) { return log(x); }},
        OpCase{"gelu", {3, 4}, false, [](const Tensor& x) { return gelu(x); }},
        OpCase{"matmul", {3, 4}, false, [](const Tensor& x) { return matmul(x, kRight); }},
        OpCase{"sum_axis", {3, 4}, false, [](const Tensor& x) { return sum(square(x), 0); }},
        OpCase{"mean_axis", {3, 4}, false, [](const Tensor& x) { return mean(square(x), 1); }},
        OpCase{"reshape", {3, 4}, false, [](const Tensor& x) { return square(reshape(x, {2, 6})); }},
        OpCase{"take", {3, 4}, false, [](const Tensor& x) { return square(take(x, kTakeOrder, {2, 3})); }},
        OpCase{"gather_rows", {3, 4}, false, [](const Tensor& x) { return square(gather_rows(x, kRows)); }},
        OpCase{"softmax", {3, 4}, false, [](const Tensor& x) { return softmax(x); }},
        OpCase{"layer_norm", {3, 4}, false,
               [](const Tensor& x) { return layer_norm(x, Tensor::full({4}, 1.3), Tensor::full({4}, 0.2), 1e-5); }},
        OpCase{"mse", {3, 4}, false, [](const Tensor& x) { return mse(x, kOther); }},
        OpCase{"attention", {4, 4}, false, [](const Tensor& x) { return attention(x, square(x), x, 2, 2); }}),
    [](const auto& info) { return std::string(info.param.name); });

TEST_F(TensorTest, ForwardIsDeterministic) {
  Rng rng(1);
  const Tensor x = rng.normal_tensor({8, 8}, 1.0);
  const Tensor a = softmax(matmul(x, x)), b = softmax(matmul(x, x));
  EXPECT_EQ(vals(a), vals(b));
}

}  // namespace
}  // namespace fvq
