#include <gtest/gtest.h>

#include <cmath>
#include <ranges>

#include "barsctr/models/diagnostics.hpp"
#include "barsctr/models/zoo.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "support/suites.hpp"

using namespace barsctr;
using namespace barsctr::models;
using ndgrad::Tensor;

namespace {

Batch one_row(const std::vector<std::vector<std::uint32_t>>& cols) {
  Batch b;
  b.size = 1;
  b.columns = cols;
  b.labels = {1.0};
  b.rows = {0};
  return b;
}

FieldStack stack_of(std::size_t m, std::size_t d, std::vector<double> v) {
  return FieldStack::of(Tensor::from_values({1, m, d}, std::move(v)));
}

}  // namespace

// ---------------------------------------------------------------- counting

TEST(ParamCount, LrSingleField) {
  auto m = build_model(default_config("LR"), {fixture::cat("f", 100)}, 1);
  EXPECT_EQ(m->count_params(), 101u);
}

TEST(ParamCount, FmSingleField) {
  auto m = build_model(default_config("FM", 16), {fixture::cat("f", 100)}, 1);
  EXPECT_EQ(m->count_params(), 1701u);
}

TEST(ParamCount, FfmHoldsOneVectorPerOtherField) {
  std::vector<FieldLayout> fields{fixture::cat("a", 10), fixture::cat("b", 20), fixture::cat("c", 30)};
  auto m = build_model(default_config("FFM", 4), fields, 1);
  EXPECT_EQ(m->count_params(), 60u * 2 * 4 + 60 + 1);
}

TEST(ParamCount, DnnTower) {
  std::vector<FieldLayout> fields;
  for (int i = 0; i < 8; ++i) fields.push_back(fixture::cat("f" + std::to_string(i), 10));
  auto m = build_model(default_config("DNN", 4, {8}), fields, 1);
  EXPECT_EQ(m->count_params(), 273u + 80 * 4);
}

TEST(ParamCount, DeepFmIsFmPlusTower) {
  const auto fields = probe_layout();
  auto fm = build_model(default_config("FM", 4), fields, 1);
  auto deep = build_model(default_config("DeepFM", 4, {8, 4}), fields, 1);
  const std::size_t tower = (5 * 4) * 8 + 8 + 8 * 4 + 4 + 4 + 1;
  EXPECT_EQ(deep->count_params(), fm->count_params() + tower);
}

TEST(ParamCount, SequencePaddingRowExcluded) {
  auto m = build_model(default_config("LR"), {fixture::seq("s", 10, 3)}, 1);
  EXPECT_EQ(m->count_params(), 9u + 1);
}

// ---------------------------------------------------------------- forward examples

TEST(Forward, ZeroLrGivesZeroLogits) {
  auto m = build_model(default_config("LR"), {fixture::cat("f", 5), fixture::cat("g", 5)}, 3);
  for (auto& p : m->parameters())
    for (double& v : p.tensor.mutable_values()) v = 0.0;
  auto y = m->forward(probe_batch(m->fields(), 6, 1), false);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Forward, FmHandExample) {
  auto m = build_model(default_config("FM", 2), {fixture::cat("a", 3), fixture::cat("b", 3)}, 3);
  for (auto& p : m->parameters())
    for (double& v : p.tensor.mutable_values()) v = 0.0;
  auto ea = m->parameter("embedding.a").tensor.mutable_values();
  auto eb = m->parameter("embedding.b").tensor.mutable_values();
  ea[2] = 1.0;
  ea[3] = 0.0;
  eb[4] = 0.5;
  eb[5] = 2.0;
  EXPECT_DOUBLE_EQ(m->forward(one_row({{1}, {2}}), false).values()[0], 0.5);
}

TEST(Forward, MeanPoolingIgnoresPadding) {
  auto m = build_model(default_config("LR"), {fixture::seq("s", 4, 3)}, 3);
  auto w = m->parameter("linear.s").tensor.mutable_values();
  w[1] = 1.0;
  w[2] = 3.0;
  w[3] = 100.0;
  EXPECT_DOUBLE_EQ(m->forward(one_row({{1, 2, 0}}), false).values()[0], 2.0);
}

TEST(Forward, FmPermutationInvariant) {
  const auto fields = probe_layout();
  std::vector<FieldLayout> cats(fields.begin(), fields.begin() + 4);
  std::vector<FieldLayout> rev(cats.rbegin(), cats.rend());
  auto a = build_model(default_config("FM"), cats, 5);
  auto b = build_model(default_config("FM"), rev, 5);
  // copy a's tables into b under the same field names
  for (auto& p : b->parameters()) {
    auto src = a->parameter(p.name).tensor.values();
    std::copy(src.begin(), src.end(), p.tensor.mutable_values().begin());
  }
  Batch ba = probe_batch(cats, 8, 9), bb = ba;
  std::reverse(bb.columns.begin(), bb.columns.end());
  auto ya = a->forward(ba, false), yb = b->forward(bb, false);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(ya.values()[i], yb.values()[i], 1e-14);
}

TEST(Forward, NonFiniteRaisesNamingLayer) {
  auto m = build_model(default_config("DNN"), probe_layout(), 3);
  m->parameter("tower.0.W").tensor.mutable_values()[0] = std::numeric_limits<double>::infinity();
  try {
    m->forward(probe_batch(m->fields(), 4, 1), false);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("tower.0"), std::string::npos);
  }
}

TEST(Forward, SameSeedSameLogits) {
  for (const std::string name : kModelNames | std::views::transform([](auto s) { return std::string(s); })) {
    auto a = build_model(default_config(name), probe_layout(), 11);
    auto b = build_model(default_config(name), probe_layout(), 11);
    auto batch = probe_batch(probe_layout(), 8, 2);
    EXPECT_TRUE(suites::bitwise(a->forward(batch, false), b->forward(batch, false))) << name;
  }
}

// ---------------------------------------------------------------- kernels

TEST(Kernels, FmPairwiseExamples) {
  EXPECT_DOUBLE_EQ(fm_pairwise_sum(stack_of(3, 2, {1, 0, 0, 1, 1, 1})).values()[0], 2.0);
  EXPECT_DOUBLE_EQ(fm_pairwise_sum(stack_of(1, 2, {3, 4})).values()[0], 0.0);
  EXPECT_DOUBLE_EQ(fm_pairwise_sum(FieldStack::empty(1, 2)).values()[0], 0.0);
}

TEST(Kernels, BiInteractionExamples) {
  auto y = bi_interaction_pool(stack_of(2, 2, {1, 0, 0.5, 2}));
  EXPECT_DOUBLE_EQ(y.values()[0], 0.5);
  EXPECT_DOUBLE_EQ(y.values()[1], 0.0);
  auto z = bi_interaction_pool(stack_of(1, 2, {3, 4}));
  EXPECT_EQ(z.values()[0], 0.0);
  EXPECT_EQ(z.values()[1], 0.0);
}

TEST(Kernels, FieldAwareHandExample) {
  auto packed = Tensor::from_values({1, 2, 2}, {1, 2, 3, -1});
  EXPECT_DOUBLE_EQ(field_aware_interaction(packed, 1, 2).values()[0], 1.0);
}

TEST(Kernels, FwfmExamples) {
  auto e = stack_of(2, 2, {1, 0, 0.5, 2});
  EXPECT_DOUBLE_EQ(fwfm_interaction(e, Tensor::from_values({1}, {2.0})).values()[0], 1.0);
  EXPECT_DOUBLE_EQ(fwfm_interaction(e, Tensor::from_values({1}, {0.0})).values()[0], 0.0);
}

TEST(Kernels, ThirdOrderExamples) {
  EXPECT_DOUBLE_EQ(hofm_third_order(stack_of(3, 1, {1, 2, 3})).values()[0], 6.0);
  EXPECT_DOUBLE_EQ(hofm_third_order(stack_of(2, 1, {1, 2})).values()[0], 0.0);
}

TEST(Kernels, AfmSinglePairHasWeightOne) {
  auto e = stack_of(2, 3, {1, 2, 3, 0.5, -1, 2});
  AttentionParams att{Tensor::from_values({3, 2}, {0.3, -2, 1.1, 0.4, 7, -0.2}), Tensor::from_values({2}, {0.1, -0.3}),
                      Tensor::from_values({2}, {5, -4}), Tensor::from_values({3}, {1, 1, 1})};
  EXPECT_NEAR(afm_attention_pool(e, att).values()[0], 0.5 - 2 + 6, 1e-12);
}

TEST(Kernels, AfmEqualScoresAreUniform) {
  auto e = stack_of(3, 2, {1, 2, 3, 4, 5, 6});
  AttentionParams att{Tensor::zeros({2, 2}), Tensor::zeros({2}), Tensor::zeros({2}), Tensor::from_values({2}, {1, 1})};
  EXPECT_NEAR(afm_attention_pool(e, att).values()[0], (11.0 + 17.0 + 39.0) / 3.0, 1e-12);
}

TEST(Kernels, CrossExamples) {
  auto x = Tensor::from_values({1, 2}, {1, 0});
  auto y = cross_layer(x, x, Tensor::from_values({2}, {1, 1}), Tensor::zeros({2}));
  EXPECT_EQ(y.values()[0], 2.0);
  EXPECT_EQ(y.values()[1], 0.0);
  auto x0 = Tensor::from_values({1, 3}, {0.3, -1, 2});
  Tensor xl = x0;
  for (int l = 0; l < 4; ++l) xl = cross_layer(x0, xl, Tensor::zeros({3}), Tensor::zeros({3}));
  EXPECT_TRUE(suites::bitwise(xl, x0));
  EXPECT_THROW(cross_layer(x0, x0, Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
}

TEST(Kernels, CinExamples) {
  auto x0 = Tensor::from_values({1, 2, 2}, {1, 2, 3, 4});
  auto y = cin_layer(x0, x0, Tensor::full({4, 1}, 1.0));
  EXPECT_EQ(y.values()[0], 16.0);
  EXPECT_EQ(y.values()[1], 36.0);
  auto z = cin_layer(x0, x0, Tensor::zeros({4, 1}));
  EXPECT_EQ(z.values()[0], 0.0);
  auto one = Tensor::from_values({1, 1, 2}, {3, -2});
  auto w = cin_layer(one, one, Tensor::from_values({1, 1}, {0.5}));
  EXPECT_EQ(w.values()[0], 4.5);
  EXPECT_EQ(w.values()[1], 2.0);
  EXPECT_THROW(cin_layer(x0, x0, Tensor::zeros({3, 1})), DimensionError);
}

TEST(Kernels, InnerProductOrderAndErrors) {
  auto e = stack_of(3, 2, {1, 0, 0, 1, 1, 1});
  auto y = inner_product_features(e);
  ASSERT_EQ(y.numel(), 3u);
  EXPECT_EQ(y.values()[0], 0.0);  // (1,2)
  EXPECT_EQ(y.values()[1], 1.0);  // (1,3)
  EXPECT_EQ(y.values()[2], 1.0);  // (2,3)
  EXPECT_THROW(inner_product_features(stack_of(1, 2, {1, 1})), ConfigError);
}

TEST(Kernels, SumIdentities) {
  auto e = stack_of(4, 3, {0.3, -1, 2, 1.5, 0.2, -0.7, 1, 1, 1, -2, 0.5, 0.25});
  const double fm = fm_pairwise_sum(e).values()[0];
  double bi = 0, ip = 0;
  const Tensor pooled = bi_interaction_pool(e), products = inner_product_features(e);
  for (double v : pooled.values()) bi += v;
  for (double v : products.values()) ip += v;
  EXPECT_NEAR(bi, fm, 1e-12);
  EXPECT_NEAR(ip, fm, 1e-12);
}

TEST(Kernels, MatchBruteForceOracles) {
  for (const auto& r : suites::kernel_oracle_suite(200, 77)) {
    EXPECT_LE(r.max_rel_error, 1e-10) << r.kernel;
  }
}

// ---------------------------------------------------------------- degeneracies

TEST(Degeneracy, AllBitwiseEqual) {
  for (const auto& r : suites::degeneracy_suite(5)) {
    EXPECT_TRUE(r.bitwise_equal) << r.name << " max diff " << r.max_abs_diff;
  }
}

// ---------------------------------------------------------------- gradients

TEST(GradCheck, AllModels) {
  for (const std::string name : kModelNames | std::views::transform([](auto s) { return std::string(s); })) {
    auto r = model_grad_check(name);
    EXPECT_TRUE(r.report.passed()) << name << " max rel error " << r.report.max_error();
  }
}

TEST(GradCheck, BatchNormTrainMode) {
  ModelConfig cfg = default_config("DNN", 4, {8});
  cfg.use_batch_norm = true;
  cfg.init_std = 0.3;
  auto layout = probe_layout();
  auto model = build_model(cfg, layout, 4);
  Batch batch = probe_batch(layout, 6, 8);
  auto loss = [&] { return ndgrad::bce_with_logits(model->forward(batch, true), batch.labels); };
  EXPECT_TRUE(ndgrad::grad_check(loss, model->parameters(), 1e-4).passed());
}

TEST(Training, PaddingRowStaysZero) {
  auto layout = probe_layout();
  auto model = build_model(default_config("DeepFM"), layout, 4);
  ndgrad::Adam adam(model->parameters().size());
  for (int step = 0; step < 5; ++step) {
    Batch batch = probe_batch(layout, 8, step);
    for (auto& p : model->parameters()) p.tensor.zero_grad();
    ndgrad::backward(ndgrad::bce_with_logits(model->forward(batch, true), batch.labels));
    adam.step(model->parameters(), 0.05);
  }
  for (const char* name : {"embedding.s0", "linear.s0"}) {
    auto v = model->parameter(name).tensor.values();
    const std::size_t w = model->parameter(name).row_width();
    for (std::size_t t = 0; t < w; ++t) EXPECT_EQ(v[t], 0.0) << name;
  }
  EXPECT_NE(model->parameter("embedding.c0").tensor.values()[0], 0.0);
}

// ---------------------------------------------------------------- config

TEST(Config, Errors) {
  ModelConfig c;
  c.model = "Bogus";
  EXPECT_THROW(validate(c), ConfigError);
  c.model = "DCN";
  c.hidden_units = {8};
  EXPECT_THROW(validate(c), ConfigError);  // missing cross_layers
  c.cross_layers = 1;
  EXPECT_NO_THROW(validate(c));
  c.attention_dim = 3;
  EXPECT_THROW(validate(c), ConfigError);  // knob of another model
  ModelConfig d = default_config("FM");
  d.dropout = 1.0;
  EXPECT_THROW(validate(d), ConfigError);
  d = default_config("FM");
  d.embedding_dim = 0;
  EXPECT_THROW(validate(d), ConfigError);
}

TEST(Config, JsonRoundTripAndStrictKeys) {
  ModelConfig c = default_config("xDeepFM", 8, {16, 16});
  c.cin_pool_all_layers = false;
  ModelConfig back = model_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
  auto j = to_json(c);
  j["hiden_units"] = {1};
  EXPECT_THROW(model_config_from_json(j), ConfigError);
}

TEST(Config, IpnnNeedsTwoFields) {
  EXPECT_THROW(build_model(default_config("IPNN"), {fixture::cat("a", 4)}, 1), ConfigError);
}
