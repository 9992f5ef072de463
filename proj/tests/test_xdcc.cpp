#include "mlchain/synthetic.hpp"
#include "mlchain/xdcc.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

using namespace mlchain;
using xdcc::Branch;

namespace {

const double U = kUnknown;

boost::Params quick_boost() {
  boost::Params p;
  p.rounds = 6;
  p.max_depth = 3;
  return p;
}

SynthSplit small_data(std::uint64_t seed = 9) {
  SynthSpec s;
  s.train = 160;
  s.test = 80;
  s.features = 8;
  s.labels = 5;
  s.cardinality = 1.8;
  return make_synthetic(s, seed);
}

}  // namespace

TEST(Selection, MostProbableWhenAnyReachesHalf) {
  EXPECT_EQ(xdcc::select_next_label(std::vector<double>{0.21, 0.6, 0.3}, std::vector<double>{U, U, U}), 1u);
}

TEST(Selection, LeastProbableOtherwise) {
  EXPECT_EQ(xdcc::select_next_label(std::vector<double>{0.21, 0.4, 0.3}, std::vector<double>{U, U, U}), 0u);
}

TEST(Selection, OnlyUndecidedLabelsCount) {
  EXPECT_EQ(xdcc::select_next_label(std::vector<double>{0.21, 0.6, 0.3}, std::vector<double>{0.2, 0.6, U}), 2u);
  EXPECT_FALSE(xdcc::select_next_label(std::vector<double>{0.2, 0.6}, std::vector<double>{0.2, 0.6}).has_value());
}

TEST(Selection, TiesGoToLowerIndex) {
  EXPECT_EQ(xdcc::select_next_label(std::vector<double>{0.7, 0.7}, std::vector<double>{U, U}), 0u);
  EXPECT_EQ(xdcc::select_next_label(std::vector<double>{0.1, 0.1}, std::vector<double>{U, U}), 0u);
}

TEST(Propagation, MoreCertainSameSideIsApplied) {
  xdcc::PropagationState s(1, 2);
  s.p(0, 0) = 0.7;
  const auto log = xdcc::propagate(s, 0, 2, std::vector<double>{0.9, 0.2});
  EXPECT_DOUBLE_EQ(s.p(0, 0), 0.9);
  ASSERT_EQ(log.size(), 2u);
  EXPECT_EQ(log[0].branch, Branch::update);
  EXPECT_EQ(log[1].label, 1u);
  EXPECT_EQ(log[1].branch, Branch::neg);
}

TEST(Propagation, CrossingHalfIsBlocked) {
  xdcc::PropagationState s(1, 2);
  s.p(0, 0) = 0.7;
  xdcc::propagate(s, 0, 2, std::vector<double>{0.3, 0.2});
  EXPECT_DOUBLE_EQ(s.p(0, 0), 0.7);
  EXPECT_EQ(s.blocked_flips, 1u);
  EXPECT_EQ(s.applied_flips, 0u);
}

TEST(Propagation, LessCertainIsIgnored) {
  xdcc::PropagationState s(1, 2);
  s.p(0, 0) = 0.7;
  const auto log = xdcc::propagate(s, 0, 2, std::vector<double>{0.6, 0.8});
  EXPECT_DOUBLE_EQ(s.p(0, 0), 0.7);
  EXPECT_EQ(s.blocked_flips, 0u);
  ASSERT_EQ(log.size(), 1u);
  EXPECT_EQ(log[0].branch, Branch::pos);
}

TEST(Propagation, DecidedNeverReturnsToUnknown) {
  Rng rng(2);
  xdcc::PropagationState s(1, 6);
  for (std::size_t k = 1; k <= 6; ++k) {
    std::vector<double> y_hat(6);
    for (auto& v : y_hat) v = rng.uniform();
    const std::size_t before = s.decided(0);
    xdcc::propagate(s, 0, k, y_hat);
    EXPECT_EQ(s.decided(0), before + 1);
  }
  EXPECT_EQ(std::set<std::uint32_t>(s.chosen[0].begin(), s.chosen[0].end()).size(), 6u);
}

TEST(Chain, RejectsChainLongerThanLabels) {
  const auto d = small_data();
  xdcc::ChainParams c;
  c.chain_length = 6;
  EXPECT_THROW(xdcc::train_chain(d.train, c, quick_boost()), std::invalid_argument);
}

TEST(Chain, ZeroRoundsPredictsNothing) {
  const auto d = small_data();
  const auto model = xdcc::train_chain(d.train, {}, quick_boost()).model;
  const auto pred = xdcc::predict_chain(model, base_features(d.test), 0);
  for (auto v : pred.labels.data()) EXPECT_EQ(v, 0);
  EXPECT_EQ(pred.rounds_run, 0u);
}

TEST(Chain, OneLabelDecidedPerRound) {
  const auto d = small_data();
  const auto res = xdcc::train_chain(d.train, {}, quick_boost());
  EXPECT_EQ(res.model.rounds.size(), 5u);
  for (std::size_t i = 0; i < d.train.size(); ++i) EXPECT_EQ(res.state.decided(i), 5u);
  const auto pred = xdcc::predict_chain(res.model, base_features(d.test), 3);
  for (std::size_t i = 0; i < d.test.size(); ++i) {
    EXPECT_EQ(pred.state.decided(i), 3u);
    EXPECT_EQ(pred.state.chosen[i].size(), 3u);
  }
}

TEST(Chain, MaskCoversDecidedCells) {
  // After training, the mask used in round k is exactly the set of cells decided in rounds < k:
  // a label-feature column is non-missing for an instance iff its label was chosen earlier.
  const auto d = small_data();
  const auto res = xdcc::train_chain(d.train, {}, quick_boost());
  std::vector<std::vector<std::uint32_t>> by_round(d.train.size());
  for (const auto& r : res.trace) {
    if (r.branch != Branch::update) by_round[r.instance].push_back(r.label);
  }
  for (std::size_t i = 0; i < d.train.size(); ++i) EXPECT_EQ(by_round[i], res.state.chosen[i]);
}

TEST(Chain, CumulateUsesBestRound) {
  const auto d = small_data();
  const auto model = xdcc::train_chain(d.train, {}, quick_boost()).model;
  const auto base = base_features(d.test);
  const auto cum = xdcc::predict_chain(model, base, 2, true);
  const auto std_ = xdcc::predict_chain(model, base, 2, false);
  for (std::size_t i = 0; i < base.rows(); ++i) {
    for (std::size_t j = 0; j < model.label_count; ++j) {
      const double p = cum.state.p(i, j);
      if (!is_missing(p)) {
        EXPECT_EQ(cum.labels(i, j), std_.labels(i, j));
        continue;
      }
      double best = 0.0;
      for (const auto& r : cum.state.round_preds) best = std::max(best, r(i, j));
      EXPECT_EQ(cum.labels(i, j), best >= 0.5);
      EXPECT_EQ(std_.labels(i, j), 0);
    }
  }
}

TEST(Chain, CumulateAtFullLengthIsNeutral) {
  const auto d = small_data();
  const auto model = xdcc::train_chain(d.train, {}, quick_boost()).model;
  const auto base = base_features(d.test);
  EXPECT_TRUE(xdcc::predict_chain(model, base, std::nullopt, true).labels ==
              xdcc::predict_chain(model, base, std::nullopt, false).labels);
}

TEST(Chain, NoRevokedDecisions) {
  const auto d = small_data();
  const auto res = xdcc::train_chain(d.train, {}, quick_boost());
  EXPECT_EQ(res.state.applied_flips, 0u);
  const auto pred = xdcc::predict_chain(res.model, base_features(d.test));
  EXPECT_EQ(pred.state.applied_flips, 0u);
  // replaying the trace: every update stays on the side of the original decision
  std::map<std::pair<std::size_t, std::uint32_t>, bool> side;
  for (const auto& r : pred.trace) {
    const auto key = std::make_pair(r.instance, r.label);
    if (r.branch == Branch::update) {
      ASSERT_TRUE(side.count(key));
      EXPECT_EQ(side[key], r.probability >= 0.5);
    } else {
      EXPECT_FALSE(side.count(key));
      side[key] = r.branch == Branch::pos;
      EXPECT_EQ(side[key], r.probability >= 0.5);
    }
  }
}

TEST(Chain, Deterministic) {
  const auto d = small_data();
  const auto a = xdcc::train_chain(d.train, {}, quick_boost());
  const auto b = xdcc::train_chain(d.train, {}, quick_boost());
  const auto pa = xdcc::predict_chain(a.model, base_features(d.test));
  const auto pb = xdcc::predict_chain(b.model, base_features(d.test));
  EXPECT_TRUE(pa.scores == pb.scores);
  EXPECT_EQ(pa.trace.size(), pb.trace.size());
}

TEST(Chain, EarlyStopHaltsOnNegativeStreak) {
  const auto d = small_data();
  xdcc::ChainParams c;
  c.early_stop_negative_rounds = 1;
  auto model = xdcc::train_chain(d.train, c, quick_boost()).model;
  const auto pred = xdcc::predict_chain(model, base_features(d.test));
  EXPECT_LE(pred.rounds_run, 5u);
  EXPECT_GE(pred.rounds_run, 1u);
  model.params.early_stop_negative_rounds = 0;
  EXPECT_EQ(xdcc::predict_chain(model, base_features(d.test)).rounds_run, 5u);
}

TEST(Chain, WidthMismatchThrows) {
  const auto d = small_data();
  const auto model = xdcc::train_chain(d.train, {}, quick_boost()).model;
  EXPECT_THROW(xdcc::predict_chain(model, Matrix<double>(2, 3, 0.0)), std::invalid_argument);
}

TEST(Baselines, SingleLabelChainEqualsBinaryRelevance) {
  auto d = small_data();
  std::vector<Attribute> attrs;
  for (std::size_t c = 0; c < d.train.num_features(); ++c) attrs.push_back(d.train.attribute(c));
  Matrix<std::uint8_t> y(d.train.size(), 1);
  for (std::size_t i = 0; i < y.rows(); ++i) y(i, 0) = d.train.labels()(i, 2);
  const MultiLabelDataset one(attrs, {"l2"}, d.train.features(), y);
  const std::vector<std::uint32_t> order{0};
  const auto br = xdcc::train_br(one, quick_boost());
  const auto cc = xdcc::train_static_cc(one, order, quick_boost());
  const auto base = base_features(d.test);
  EXPECT_TRUE(xdcc::predict_baseline(br, base) == xdcc::predict_baseline(cc, base));
}

TEST(Baselines, ChainModelsSeeEarlierLabels) {
  const auto d = small_data();
  const std::vector<std::uint32_t> order{3, 1, 0, 4, 2};
  const auto cc = xdcc::train_static_cc(d.train, order, quick_boost());
  for (std::size_t k = 0; k < order.size(); ++k) EXPECT_EQ(cc.models[k].width, d.train.base_feature_count() + k);
  const std::vector<std::uint32_t> bad{0, 1, 1, 2, 3};
  EXPECT_THROW(xdcc::train_static_cc(d.train, bad, quick_boost()), std::invalid_argument);
}
