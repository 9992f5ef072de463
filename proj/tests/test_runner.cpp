#include "mlchain/runner.hpp"
#include "mlchain/synthetic.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mlchain;

namespace {

const std::string kData = MLCHAIN_TEST_DATA;

RunConfig smoke_config(Algorithm a) {
  RunConfig c;
  c.algorithm = a;
  c.train = kData + "/smoke.arff";
  c.xml = kData + "/smoke.xml";
  c.seed = 4;
  c.rdt.tree_count = 20;
  c.rdt.min_leaf_size = 2;
  c.boost.rounds = 4;
  c.boost.max_depth = 2;
  return c;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "mlchain_runner_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Algorithms, NamesRoundTrip) {
  for (auto a : kAllAlgorithms) EXPECT_EQ(parse_algorithm(to_string(a)), a);
  EXPECT_THROW(parse_algorithm("j48"), error);
}

TEST(Orders, ParseAndPrint) {
  for (const char* s : {"random", "random:7", "given:2,0,1", "rare-first", "frequent-first"}) {
    EXPECT_EQ(to_string(parse_order(s)), s);
  }
  EXPECT_THROW(parse_order("given:1,x"), error);
  EXPECT_THROW(parse_order("sorted"), error);
}

TEST(Orders, FrequencyAndSeeds) {
  Matrix<std::uint8_t> y(4, 3, std::vector<std::uint8_t>{1, 0, 1, 1, 0, 0, 1, 1, 0, 0, 0, 1});
  // frequencies (3, 1, 2)
  EXPECT_EQ(make_order(parse_order("rare-first"), y, 1), (std::vector<std::uint32_t>{1, 2, 0}));
  EXPECT_EQ(make_order(parse_order("frequent-first"), y, 1), (std::vector<std::uint32_t>{0, 2, 1}));
  EXPECT_EQ(make_order(parse_order("given:2,1,0"), y, 1), (std::vector<std::uint32_t>{2, 1, 0}));
  EXPECT_THROW(make_order(parse_order("given:0,0,1"), y, 1), std::invalid_argument);
  EXPECT_EQ(make_order(parse_order("random"), y, 5), make_order(parse_order("random:5"), y, 99));
  auto order = make_order(parse_order("random:3"), y, 1);
  std::sort(order.begin(), order.end());
  EXPECT_EQ(order, (std::vector<std::uint32_t>{0, 1, 2}));
}

TEST(Config, JsonRoundTrip) {
  auto c = smoke_config(Algorithm::xdcc_cum);
  c.order = parse_order("given:2,0,1");
  c.boost.split_gain = boost::SplitGain::sum_signed;
  c.early_stop_negative_rounds = 2;
  c.name = "cum";
  const auto back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
}

TEST(Config, RejectsUnknownKeys) {
  EXPECT_THROW(config_from_json(nlohmann::json{{"trees", 3}}), error);
  EXPECT_THROW(config_from_json(nlohmann::json{{"rdt", {{"depth", 3}}}}), error);
  EXPECT_NO_THROW(config_from_json(nlohmann::json{{"name", "baseline"}}));
}

TEST(Config, RelativePathsResolveAgainstConfigDir) {
  const auto c = config_from_json(nlohmann::json{{"train", "a.arff"}, {"xml", "/abs/a.xml"}}, "/data/set");
  EXPECT_EQ(c.train, "/data/set/a.arff");
  EXPECT_EQ(c.xml, "/abs/a.xml");
}

TEST(Config, ValidateNeedsLabelSpec) {
  RunConfig c;
  c.train = "x.arff";
  EXPECT_THROW(c.validate(), error);
  c.labels = 2;
  EXPECT_NO_THROW(c.validate());
  c.sigma = 2.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Bundle, SaveLoadPredictsIdentically) {
  for (auto a : kAllAlgorithms) {
    const auto cfg = smoke_config(a);
    const auto data = load_data(cfg);
    const auto model = train_model(cfg, data.train);
    const auto path = scratch(std::string(to_string(a)) + ".json");
    save_model(model, path);
    const auto back = load_model(path);
    EXPECT_EQ(back.algorithm, a);
    EXPECT_EQ(back.label_names, model.label_names);
    EXPECT_TRUE(predict_model(back, data.test).labels == predict_model(model, data.test).labels) << to_string(a);
  }
}

TEST(Bundle, RejectsOtherFormats) {
  EXPECT_THROW(bundle_from_json(nlohmann::json{{"format", "other"}}), error);
  auto j = bundle_to_json(train_model(smoke_config(Algorithm::mlxgb), load_data(smoke_config(Algorithm::mlxgb)).train));
  j["version"] = 99;
  EXPECT_THROW(bundle_from_json(j), error);
}

TEST(Bundle, MalformedModelRejected) {
  auto j = bundle_to_json(train_model(smoke_config(Algorithm::ml_rdt), load_data(smoke_config(Algorithm::ml_rdt)).train));
  j["model"]["trees"][0]["leaf_positives"].erase(0);
  try {
    bundle_from_json(j);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(std::string(e.what()).rfind("malformed model", 0), 0u);
  }
}

TEST(Predict, IncompatibleWidthRejected) {
  const auto cfg = smoke_config(Algorithm::rdt_dcc);
  const auto model = train_model(cfg, load_data(cfg).train);
  const auto other = load_csv(kData + "/toy.csv", 2);
  EXPECT_THROW(predict_model(model, other), error);
}

TEST(Predict, TruncatedChainMatchesTrace) {
  const auto cfg = smoke_config(Algorithm::rdt_dcc);
  const auto data = load_data(cfg);
  const auto model = train_model(cfg, data.train);
  PredictOptions opt;
  opt.trace = true;
  const auto pred = predict_model(model, data.test, opt);
  ASSERT_EQ(pred.rdt_trace.size(), data.test.size());
  EXPECT_TRUE(truncate_rdt_chain(pred.rdt_trace, 3, 3) == pred.labels);
  const auto none = truncate_rdt_chain(pred.rdt_trace, 3, 0);
  for (auto v : none.data()) EXPECT_EQ(v, 0);
}

TEST(Predict, XdccRoundsTruncate) {
  const auto cfg = smoke_config(Algorithm::xdcc_std);
  const auto data = load_data(cfg);
  const auto model = train_model(cfg, data.train);
  PredictOptions opt;
  opt.rounds = 1;
  opt.trace = true;
  const auto pred = predict_model(model, data.test, opt);
  std::size_t selections = 0;
  for (const auto& r : pred.xdcc_trace) selections += r.branch != xdcc::Branch::update;
  EXPECT_EQ(selections, data.test.size());
}

TEST(Run, DeterministicReports) {
  for (auto a : kAllAlgorithms) {
    const auto cfg = smoke_config(a);
    const auto data = load_data(cfg);
    auto r1 = run(cfg, data);
    auto r2 = run(cfg, data);
    EXPECT_TRUE(r1.prediction.labels == r2.prediction.labels) << to_string(a);
    EXPECT_EQ(r1.report.hamming_accuracy, r2.report.hamming_accuracy);
  }
}

TEST(Traces, CsvHeaders) {
  std::ostringstream a, b, c;
  write_rdt_trace(a, {});
  write_xdcc_trace(b, {});
  write_loss_csv(c, {});
  EXPECT_EQ(a.str(), "instance,iteration,label,decision,marginal,cardinality\n");
  EXPECT_EQ(b.str(), "round,instance,label,probability,branch\n");
  EXPECT_EQ(c.str(), "model,round,mean_cross_entropy\n");
}
