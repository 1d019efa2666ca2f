#include <gtest/gtest.h>

#include <cmath>

#include "barsctr/synth/generator.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace barsctr;
using namespace barsctr::synth;

TEST(Synth, ConstantFairCoinHasLn2Oracle) {
  SynthSpec s;
  s.ground_truth = GroundTruth::constant;
  s.samples = 5000;
  auto g = generate(s);
  EXPECT_NEAR(g.oracle.oracle_logloss, std::log(2.0), 1e-12);
  EXPECT_NEAR(g.oracle.positive_rate_realized, 0.5, 0.03);
}

TEST(Synth, SameSpecSameBytes) {
  SynthSpec s;
  s.samples = 3000;
  s.numeric_fields = 2;
  s.sequences = {{5, 4}};
  auto a = generate(s), b = generate(s);
  EXPECT_EQ(a.csv, b.csv);
  EXPECT_EQ(a.oracle.to_json().dump(), b.oracle.to_json().dump());
  s.seed = 2;
  EXPECT_NE(generate(s).csv, a.csv);
}

TEST(Synth, PositiveRateNearTarget) {
  for (auto gt : {GroundTruth::linear, GroundTruth::pairwise_fm, GroundTruth::third_order}) {
    SynthSpec s;
    s.ground_truth = gt;
    s.samples = 100000;
    s.positive_rate = 0.2;
    auto g = generate(s);
    EXPECT_NEAR(g.oracle.positive_rate_expected, 0.2, 1e-6) << to_string(gt);
    EXPECT_NEAR(g.oracle.positive_rate_realized, 0.2, 0.02) << to_string(gt);
  }
}

TEST(Synth, OracleMatchesIndependentComputation) {
  SynthSpec s;
  s.samples = 2000;
  auto g = generate(s);
  long double ll = 0;
  std::vector<int> labels;
  for (std::size_t i = 0; i < g.labels.size(); ++i) {
    ll += oracle::xent(g.probabilities[i], g.labels[i]);
    labels.push_back(g.labels[i]);
  }
  EXPECT_NEAR(g.oracle.oracle_logloss, static_cast<double>(ll / g.labels.size()), 1e-12);
  auto pc = oracle::auc_pairs(g.probabilities, labels);
  ASSERT_TRUE(g.oracle.oracle_auc.has_value());
  EXPECT_DOUBLE_EQ(*g.oracle.oracle_auc, static_cast<double>(pc.twice_wins) / (2.0 * pc.pos * pc.neg));
}

TEST(Synth, CsvFeedsThePipeline) {
  SynthSpec s;
  s.samples = 500;
  s.numeric_fields = 1;
  s.sequences = {{7, 3}};
  auto dir = fixture::scratch_dir("synth-pipeline");
  auto splits = fixture::synthetic_splits(s, dir);
  EXPECT_EQ(splits.train.size() + splits.validation.size() + splits.test.size(), 500u);
  EXPECT_EQ(splits.train.fields.size(), 8u);
  auto oracle = load_json_file(dir / "raw" / "oracle.json");
  EXPECT_EQ(oracle["csv_md5"], md5_file(dir / "raw" / "data.csv"));
  EXPECT_EQ(synth_spec_from_json(oracle["spec"]).samples, 500u);
}

TEST(Synth, SpecValidation) {
  SynthSpec s;
  s.positive_rate = 1.0;
  EXPECT_THROW(generate(s), ConfigError);
  s = SynthSpec{};
  s.categorical_vocab = {5};
  EXPECT_THROW(generate(s), ConfigError);
  EXPECT_THROW(synth_spec_from_json(json{{"sample", 3}}), ConfigError);
  EXPECT_THROW(ground_truth_from("quadratic"), ConfigError);
}
