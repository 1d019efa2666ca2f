#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "barsctr/ndgrad/ndgrad.hpp"
#include "support/oracles.hpp"

using namespace barsctr;
using namespace barsctr::ndgrad;

namespace {

std::vector<double> random_values(std::size_t n, std::mt19937_64& gen, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(gen);
  return v;
}

// Checks d/dx_k of sum(weights * op(inputs)) against central differences for
// every input k.
void expect_matches_finite_differences(const std::function<Tensor(const std::vector<Tensor>&)>& op,
                                       const std::vector<Shape>& shapes, double tol, std::uint64_t seed,
                                       double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 gen(seed);
  std::vector<std::vector<double>> values;
  for (const auto& s : shapes) values.push_back(random_values(shape_numel(s), gen, lo, hi));
  std::vector<double> weights;

  auto forward = [&](const std::vector<std::vector<double>>& vals, bool grad, std::vector<Tensor>* keep) {
    std::vector<Tensor> in;
    for (std::size_t k = 0; k < shapes.size(); ++k) in.push_back(Tensor::from_values(shapes[k], vals[k], grad));
    Tensor y = op(in);
    if (weights.empty()) weights = random_values(y.numel(), gen);
    Tensor w = Tensor::from_values(y.shape(), weights);
    if (keep) *keep = in;
    return sum_all(mul(y, w));
  };

  std::vector<Tensor> inputs;
  Tensor loss = forward(values, true, &inputs);
  backward(loss);
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    auto f = [&](const oracle::Vec& x) {
      auto vals = values;
      vals[k] = x;
      return forward(vals, false, nullptr).item();
    };
    const auto numeric = oracle::numeric_gradient(f, values[k]);
    ASSERT_TRUE(inputs[k].has_grad()) << "input " << k;
    const auto analytic = inputs[k].grad();
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      EXPECT_LE(oracle::rel_err(analytic[i], numeric[i], 1e-6), tol)
          << "input " << k << " index " << i << " analytic " << analytic[i] << " numeric " << numeric[i];
    }
  }
}

}  // namespace

TEST(Ops, SigmoidOfZeroIsHalf) {
  auto y = op_forward("sigmoid", {Tensor::from_values({1}, {0.0})});
  EXPECT_DOUBLE_EQ(y.values()[0], 0.5);
}

TEST(Ops, MatmulHandExample) {
  auto a = Tensor::from_values({2, 2}, {1, 2, 3, 4});
  auto b = Tensor::from_values({2, 1}, {1, 1});
  auto y = op_forward("matmul", {a, b});
  ASSERT_EQ(y.shape(), (Shape{2, 1}));
  EXPECT_EQ(y.values()[0], 3.0);
  EXPECT_EQ(y.values()[1], 7.0);
}

TEST(Ops, EmbeddingLookupGathersRows) {
  auto table = Tensor::from_values({2, 2}, {1, 0, 0, 1});
  OpAttrs attrs;
  attrs.indices = {1, 1};
  auto y = op_forward("embedding_lookup", {table}, attrs);
  ASSERT_EQ(y.shape(), (Shape{2, 2}));
  EXPECT_EQ(std::vector<double>(y.values().begin(), y.values().end()), (std::vector<double>{0, 1, 0, 1}));
}

TEST(Ops, ShapeMismatchNamesOperationAndShapes) {
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
  }
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), DimensionError);
  EXPECT_THROW(concat({Tensor::zeros({2, 3}), Tensor::zeros({3, 2})}, 0), DimensionError);
}

TEST(Ops, UnknownKindIsConfigError) {
  EXPECT_THROW(op_forward("convolution", {Tensor::zeros({1})}), ConfigError);
}

TEST(Ops, ZeroDimensionRejected) { EXPECT_THROW(Tensor::zeros({2, 0}), DimensionError); }

TEST(Ops, BroadcastAddMatchesExplicitRepeat) {
  auto a = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  auto b = Tensor::from_values({3}, {10, 20, 30});
  auto y = add(a, b);
  EXPECT_EQ(std::vector<double>(y.values().begin(), y.values().end()),
            (std::vector<double>{11, 22, 33, 14, 25, 36}));
}

TEST(Ops, NoTapeWithoutRequiresGrad) {
  auto y = sigmoid(Tensor::from_values({2}, {0.1, 0.2}));
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.node().inputs.empty());
}

TEST(Backward, SigmoidSlopeAtZero) {
  auto w = Tensor::from_values({1}, {0.0}, true);
  backward(sum_all(sigmoid(w)));
  EXPECT_DOUBLE_EQ(w.grad()[0], 0.25);
}

TEST(Backward, EmbeddingDuplicatesScatterAdd) {
  auto table = Tensor::from_values({4, 3}, std::vector<double>(12, 0.7), true);
  const std::vector<std::uint32_t> idx{2, 2};
  backward(sum_all(embedding_lookup(table, idx, {2})));
  const auto g = table.grad();
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(g[r * 3 + c], r == 2 ? 2.0 : 0.0) << r << "," << c;
}

TEST(Backward, FrozenPaddingRowGetsNoGradient) {
  auto table = Tensor::from_values({3, 2}, {0, 0, 1, 1, 2, 2}, true);
  const std::vector<std::uint32_t> idx{0, 1, 0};
  backward(sum_all(embedding_lookup(table, idx, {3}, true)));
  EXPECT_EQ(table.grad()[0], 0.0);
  EXPECT_EQ(table.grad()[1], 0.0);
  EXPECT_EQ(table.grad()[2], 1.0);
}

TEST(Backward, MatmulMatchesFiniteDifferences) {
  expect_matches_finite_differences([](const auto& in) { return matmul(in[0], in[1]); }, {{3, 2}, {2, 4}}, 1e-6, 11);
  // the spec'd form: loss = sum(matmul(A, B))
  std::mt19937_64 gen(5);
  auto av = random_values(6, gen), bv = random_values(8, gen);
  auto A = Tensor::from_values({3, 2}, av, true), B = Tensor::from_values({2, 4}, bv, true);
  backward(sum_all(matmul(A, B)));
  auto fa = [&](const oracle::Vec& x) {
    return sum_all(matmul(Tensor::from_values({3, 2}, x), Tensor::from_values({2, 4}, bv))).item();
  };
  auto na = oracle::numeric_gradient(fa, av);
  for (std::size_t i = 0; i < na.size(); ++i) EXPECT_LE(oracle::rel_err(A.grad()[i], na[i]), 1e-6);
}

TEST(Backward, NonScalarLossIsContractError) {
  auto w = Tensor::from_values({2}, {1, 2}, true);
  EXPECT_THROW(backward(square(w)), ContractError);
}

TEST(Backward, SecondBackwardIsStateError) {
  auto w = Tensor::from_values({2}, {1, 2}, true);
  auto loss = sum_all(square(w));
  backward(loss);
  EXPECT_THROW(backward(loss), StateError);
}

TEST(Backward, GradientsAccumulateAcrossCalls) {
  auto w = Tensor::from_values({1}, {3.0}, true);
  backward(sum_all(square(w)));
  backward(sum_all(square(w)));
  EXPECT_DOUBLE_EQ(w.grad()[0], 12.0);
}

TEST(Backward, SharedSubexpressionVisitedOnce) {
  auto w = Tensor::from_values({1}, {2.0}, true);
  auto s = square(w);
  backward(sum_all(add(s, s)));  // 2 w^2 -> 4 w
  EXPECT_DOUBLE_EQ(w.grad()[0], 8.0);
}

struct OpCase {
  const char* name;
  std::function<Tensor(const std::vector<Tensor>&)> op;
  std::vector<Shape> shapes;
  double tol;
  double lo = -1.0, hi = 1.0;
};

class EveryOpKind : public ::testing::TestWithParam<int> {};

TEST_P(EveryOpKind, MatchesFiniteDifferences) {
  static BatchNormState bn(3);
  const std::vector<OpCase> cases = {
      {"matmul", [](auto& in) { return matmul(in[0], in[1]); }, {{2, 3, 4}, {4, 2}}, 1e-6},
      {"add_broadcast", [](auto& in) { return add(in[0], in[1]); }, {{4, 1, 3}, {2, 3}}, 1e-6},
      {"sub", [](auto& in) { return sub(in[0], in[1]); }, {{3, 4}, {3, 4}}, 1e-6},
      {"elementwise_mul", [](auto& in) { return mul(in[0], in[1]); }, {{2, 3, 2}, {3, 1}}, 1e-6},
      {"scalar_mul", [](auto& in) { return scalar_mul(in[0], -2.5); }, {{5}}, 1e-6},
      {"sum_reduce", [](auto& in) { return sum(in[0], 1); }, {{2, 3, 4}}, 1e-6},
      {"mean_reduce", [](auto& in) { return mean(in[0], -1); }, {{3, 5}}, 1e-6},
      {"concat", [](auto& in) { return concat({in[0], in[1]}, 1); }, {{2, 3}, {2, 2}}, 1e-6},
      {"sigmoid", [](auto& in) { return sigmoid(in[0]); }, {{2, 5}}, 1e-4},
      {"relu", [](auto& in) { return relu(in[0]); }, {{4, 4}}, 1e-6},
      {"square", [](auto& in) { return square(in[0]); }, {{6}}, 1e-6},
      {"sqrt_safe", [](auto& in) { return sqrt_safe(in[0]); }, {{6}}, 1e-4, 0.1, 2.0},
      {"embedding_lookup",
       [](auto& in) {
         static const std::vector<std::uint32_t> idx{3, 0, 3, 1, 4, 2};
         return embedding_lookup(in[0], idx, {2, 3});
       },
       {{5, 2}},
       1e-6},
      {"slice", [](auto& in) { return slice(in[0], 1, 1, 3); }, {{3, 4}}, 1e-6},
      {"reshape", [](auto& in) { return reshape(in[0], {3, 2, 2}); }, {{4, 3}}, 1e-6},
      {"batch_norm", [](auto& in) { return batch_norm(in[0], in[1], in[2], bn, true); }, {{5, 3}, {3}, {3}}, 1e-6},
      {"dropout", [](auto& in) { return dropout(in[0], 0.3, true, 99); }, {{4, 4}}, 1e-6},
      {"softmax", [](auto& in) { return softmax(in[0], 1); }, {{3, 4}}, 1e-6},
      {"gather", [](auto& in) { return gather(in[0], 1, {2, 0, 2, 1}); }, {{2, 3, 2}}, 1e-6},
      {"transpose", [](auto& in) { return transpose(in[0], 0, 2); }, {{2, 3, 4}}, 1e-6},
      {"exp", [](auto& in) { return ndgrad::exp(in[0]); }, {{3, 2}}, 1e-6},
      {"sum_all", [](auto& in) { return sum_all(in[0]); }, {{3, 2}}, 1e-6},
      {"bce_with_logits",
       [](auto& in) {
         static const std::vector<double> y{1, 0, 0, 1, 1};
         return bce_with_logits(in[0], y);
       },
       {{5}},
       1e-6,
       -3.0,
       3.0},
  };
  const auto& c = cases.at(static_cast<std::size_t>(GetParam()));
  SCOPED_TRACE(c.name);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) expect_matches_finite_differences(c.op, c.shapes, c.tol, seed, c.lo, c.hi);
}

INSTANTIATE_TEST_SUITE_P(Ops, EveryOpKind, ::testing::Range(0, 23));

TEST(Properties, SumOfConcatIsSumOfParts) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto a = Tensor::from_values({3, 2}, random_values(6, gen));
    auto b = Tensor::from_values({3, 5}, random_values(15, gen));
    const double lhs = sum_all(concat({a, b}, 1)).item();
    const double rhs = sum_all(a).item() + sum_all(b).item();
    EXPECT_NEAR(lhs, rhs, 1e-12);
  }
}

TEST(Properties, DropoutIdentityCases) {
  auto x = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_TRUE(dropout(x, 0.5, false, 7).same_storage(x));
  EXPECT_TRUE(dropout(x, 0.0, true, 7).same_storage(x));
  EXPECT_THROW(dropout(x, 1.0, true, 7), ConfigError);
}

TEST(Properties, DropoutMaskIsSeeded) {
  auto x = Tensor::full({64}, 1.0);
  auto a = dropout(x, 0.5, true, 42);
  auto b = dropout(x, 0.5, true, 42);
  auto c = dropout(x, 0.5, true, 43);
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  EXPECT_FALSE(std::equal(a.values().begin(), a.values().end(), c.values().begin()));
  for (double v : a.values()) EXPECT_TRUE(v == 0.0 || v == 2.0);
}

TEST(Properties, BatchNormEvalUsesRunningStats) {
  BatchNormState st(2);
  auto x = Tensor::from_values({4, 2}, {1, 10, 2, 20, 3, 30, 4, 40});
  auto g = Tensor::full({2}, 1.0), b = Tensor::zeros({2});
  auto y = batch_norm(x, g, b, st, true);
  // batch mean 2.5 and 25; running mean = 0.1 * batch mean
  EXPECT_NEAR(st.running_mean[0], 0.25, 1e-15);
  EXPECT_NEAR(st.running_mean[1], 2.5, 1e-15);
  // unbiased variance of 1..4 is 5/3
  EXPECT_NEAR(st.running_var[0], 0.9 + 0.1 * 5.0 / 3.0, 1e-15);
  double col0 = 0.0;
  for (std::size_t r = 0; r < 4; ++r) col0 += y.values()[r * 2];
  EXPECT_NEAR(col0, 0.0, 1e-12);
  auto e = batch_norm(x, g, b, st, false);
  EXPECT_NEAR(e.values()[0], (1 - 0.25) / std::sqrt(st.running_var[0] + 1e-5), 1e-12);
}

TEST(Adam, FirstStepClosedForm) {
  Parameter p{"w", Tensor::from_values({1}, {1.0}, true)};
  p.tensor.mutable_grad()[0] = 1.0;
  AdamState st;
  adam_step(p, st, 1e-3);
  EXPECT_NEAR(p.tensor.values()[0], 0.999000, 1e-9);
  EXPECT_EQ(st.step_count, 1u);
  EXPECT_EQ(p.tensor.grad()[0], 0.0);
}

TEST(Adam, ZeroGradientLeavesValue) {
  Parameter p{"w", Tensor::from_values({2}, {0.3, -0.4}, true)};
  p.tensor.mutable_grad();
  AdamState st;
  for (int i = 0; i < 3; ++i) adam_step(p, st, 1e-2);
  EXPECT_EQ(p.tensor.values()[0], 0.3);
  EXPECT_EQ(p.tensor.values()[1], -0.4);
  EXPECT_EQ(st.step_count, 3u);
}

TEST(Adam, L2EntersAsGradientTerm) {
  // grad 0, l2 0.5, value 2 -> effective grad 1 -> first step moves by lr
  Parameter p{"w", Tensor::from_values({1}, {2.0}, true), 0.5};
  p.tensor.mutable_grad();
  AdamState st;
  adam_step(p, st, 1e-3);
  EXPECT_NEAR(p.tensor.values()[0], 2.0 - 1e-3, 1e-9);
}

TEST(Adam, MissingGradientIsContractError) {
  Parameter p{"w", Tensor::from_values({1}, {1.0}, true)};
  AdamState st;
  EXPECT_THROW(adam_step(p, st, 1e-3), ContractError);
  p.tensor.mutable_grad();
  EXPECT_THROW(adam_step(p, st, 0.0), ContractError);
}

TEST(Adam, FrozenPaddingRowStaysZero) {
  Parameter p{"emb", Tensor::from_values({3, 2}, {0, 0, 0.5, 0.5, -0.5, 0.1}, true), 0.1, true};
  Adam opt(1);
  std::vector<Parameter> params{p};
  const std::vector<std::uint32_t> idx{0, 1, 2, 0};
  for (int step = 0; step < 20; ++step) {
    backward(sum_all(square(embedding_lookup(params[0].tensor, idx, {4}, true))));
    params[0].tensor.mutable_grad()[0] = 5.0;  // even a stray gradient must not move row 0
    opt.step(params, 1e-2);
  }
  EXPECT_EQ(params[0].tensor.values()[0], 0.0);
  EXPECT_EQ(params[0].tensor.values()[1], 0.0);
  EXPECT_NE(params[0].tensor.values()[2], 0.5);
  EXPECT_EQ(params[0].trainable_count(), 4u);
}

TEST(Adam, TrajectoriesAreBitwiseReproducible) {
  auto run = [] {
    std::mt19937_64 gen(17);
    Parameter p{"w", Tensor::from_values({4}, random_values(4, gen), true), 1e-3};
    AdamState st;
    std::vector<double> trace;
    for (int i = 0; i < 25; ++i) {
      backward(sum_all(sigmoid(mul(p.tensor, p.tensor))));
      adam_step(p, st, 1e-2);
      trace.insert(trace.end(), p.tensor.values().begin(), p.tensor.values().end());
    }
    return trace;
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(0, std::memcmp(a.data(), b.data(), a.size() * sizeof(double)));
}

TEST(GradCheck, PassesOnCorrectGraph) {
  std::mt19937_64 gen(8);
  std::vector<Parameter> params{{"w", Tensor::from_values({3, 2}, random_values(6, gen), true)},
                                {"b", Tensor::from_values({2}, random_values(2, gen), true)}};
  auto x = Tensor::from_values({4, 3}, random_values(12, gen));
  const std::vector<double> y{1, 0, 1, 1};
  auto loss = [&] {
    return bce_with_logits(sum(sigmoid(add(matmul(x, params[0].tensor), params[1].tensor)), 1), y);
  };
  auto report = grad_check(loss, params, 1e-4);
  EXPECT_TRUE(report.passed()) << report.max_error();
  EXPECT_EQ(report.entries.size(), 2u);
}

TEST(GradCheck, FlagsWrongSigmoidDerivative) {
  // sigmoid with derivative s instead of s(1-s)
  auto bad_sigmoid = [](const Tensor& x) {
    std::vector<double> y(x.numel());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-x.values()[i]));
    auto yc = y;
    return custom_op("bad_sigmoid", x.shape(), std::move(y), {x}, [yc](detail::Node& out) {
      auto& g = out.inputs[0]->ensure_grad();
      for (std::size_t i = 0; i < yc.size(); ++i) g[i] += out.grad[i] * yc[i];
    });
  };
  std::mt19937_64 gen(9);
  std::vector<Parameter> params{{"inner", Tensor::from_values({3}, random_values(3, gen), true)},
                                {"outer", Tensor::from_values({3}, random_values(3, gen), true)}};
  auto loss = [&] { return sum_all(mul(bad_sigmoid(params[0].tensor), params[1].tensor)); };
  auto report = grad_check(loss, params, 1e-4);
  EXPECT_FALSE(report.passed());
  EXPECT_TRUE(report.entries[0].flagged);   // gradient passes through the bad derivative
  EXPECT_FALSE(report.entries[1].flagged);  // only sees the forward value
}

TEST(GradCheck, NonFiniteLossNamesParameter) {
  std::vector<Parameter> params{{"w", Tensor::from_values({2}, {1.0, 800.0}, true)}};
  auto loss = [&] { return sum_all(ndgrad::exp(params[0].tensor)); };
  try {
    grad_check(loss, params, 1e-4);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite"), std::string::npos);
  }
}

TEST(Memory, BudgetRaisesBadAlloc) {
  ScopedMemoryBudget budget(1024);
  EXPECT_THROW(Tensor::zeros({1000}), std::bad_alloc);
  EXPECT_NO_THROW(Tensor::zeros({10}));
}
