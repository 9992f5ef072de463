#pragma once

// Run configuration, algorithm dispatch and model bundles shared by the CLI,
// the benchmark harness and the tests.

#include "mlchain/dataset.hpp"
#include "mlchain/error.hpp"
#include "mlchain/metrics.hpp"
#include "mlchain/mlboost.hpp"
#include "mlchain/rdt.hpp"
#include "mlchain/serialize.hpp"
#include "mlchain/xdcc.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace mlchain {

enum class Algorithm : std::uint8_t { ml_rdt, rdt_static, rdt_dcc, mlxgb, xdcc_std, xdcc_cum, xgb_br, xgb_cc };

inline constexpr std::array<Algorithm, 8> kAllAlgorithms = {
    Algorithm::ml_rdt,   Algorithm::rdt_static, Algorithm::rdt_dcc, Algorithm::mlxgb,
    Algorithm::xdcc_std, Algorithm::xdcc_cum,   Algorithm::xgb_br,  Algorithm::xgb_cc};

inline std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::ml_rdt: return "ml-rdt";
    case Algorithm::rdt_static: return "rdt-static";
    case Algorithm::rdt_dcc: return "rdt-dcc";
    case Algorithm::mlxgb: return "mlxgb";
    case Algorithm::xdcc_std: return "xdcc-std";
    case Algorithm::xdcc_cum: return "xdcc-cum";
    case Algorithm::xgb_br: return "xgb-br";
    case Algorithm::xgb_cc: return "xgb-cc";
  }
  return "?";
}

inline Algorithm parse_algorithm(std::string_view s) {
  for (auto a : kAllAlgorithms) {
    if (to_string(a) == s) return a;
  }
  throw error("unknown algorithm: " + std::string(s));
}

inline bool is_rdt(Algorithm a) {
  return a == Algorithm::ml_rdt || a == Algorithm::rdt_static || a == Algorithm::rdt_dcc;
}
inline bool is_xdcc(Algorithm a) { return a == Algorithm::xdcc_std || a == Algorithm::xdcc_cum; }
/// Algorithms that decide labels one at a time and can emit a chain trace.
inline bool is_chain(Algorithm a) { return a == Algorithm::rdt_static || a == Algorithm::rdt_dcc || is_xdcc(a); }

/// Static label order: "random" (run seed), "random:<seed>", "given:2,0,1",
/// "rare-first" or "frequent-first" (training label frequencies, ties by index).
struct OrderSpec {
  enum class Kind : std::uint8_t { random, given, rare_first, frequent_first };
  Kind kind = Kind::random;
  std::optional<std::uint64_t> seed;
  std::vector<std::uint32_t> given;
};

namespace detail {
template <typename T>
T parse_integer(std::string_view s, std::string_view what) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw error("bad " + std::string(what) + ": '" + std::string(s) + "'");
  return v;
}
}  // namespace detail

inline OrderSpec parse_order(std::string_view s) {
  OrderSpec o;
  if (s == "random") return o;
  if (s == "rare-first") {
    o.kind = OrderSpec::Kind::rare_first;
    return o;
  }
  if (s == "frequent-first") {
    o.kind = OrderSpec::Kind::frequent_first;
    return o;
  }
  if (s.starts_with("random:")) {
    o.seed = detail::parse_integer<std::uint64_t>(s.substr(7), "order seed");
    return o;
  }
  if (s.starts_with("given:")) {
    o.kind = OrderSpec::Kind::given;
    std::string_view rest = s.substr(6);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      o.given.push_back(detail::parse_integer<std::uint32_t>(rest.substr(0, comma), "order entry"));
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    return o;
  }
  throw error("unknown order spec: " + std::string(s));
}

inline std::string to_string(const OrderSpec& o) {
  switch (o.kind) {
    case OrderSpec::Kind::random: return o.seed ? "random:" + std::to_string(*o.seed) : "random";
    case OrderSpec::Kind::rare_first: return "rare-first";
    case OrderSpec::Kind::frequent_first: return "frequent-first";
    case OrderSpec::Kind::given: {
      std::string s = "given:";
      for (std::size_t k = 0; k < o.given.size(); ++k) s += (k ? "," : "") + std::to_string(o.given[k]);
      return s;
    }
  }
  return "?";
}

inline constexpr std::uint64_t kOrderStream = 0x0bde;

inline std::vector<std::uint32_t> make_order(const OrderSpec& spec, const Matrix<std::uint8_t>& y,
                                             std::uint64_t run_seed) {
  const std::size_t n = y.cols();
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  switch (spec.kind) {
    case OrderSpec::Kind::given:
      rdt::check_permutation(spec.given, n);
      return spec.given;
    case OrderSpec::Kind::random: {
      Rng rng(derive_seed(spec.seed.value_or(run_seed), kOrderStream));
      rng.shuffle(order);
      return order;
    }
    case OrderSpec::Kind::rare_first:
    case OrderSpec::Kind::frequent_first: {
      std::vector<std::size_t> freq(n, 0);
      for (std::size_t i = 0; i < y.rows(); ++i) {
        for (std::size_t j = 0; j < n; ++j) freq[j] += y(i, j);
      }
      const bool rare = spec.kind == OrderSpec::Kind::rare_first;
      std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        return rare ? freq[a] < freq[b] : freq[a] > freq[b];
      });
      return order;
    }
  }
  return order;
}

struct RunConfig {
  std::string name;  // label for bench tables; optional
  Algorithm algorithm = Algorithm::rdt_dcc;
  std::string train;
  std::string test;
  std::string xml;          // MULAN label header; empty when `labels` is used
  std::size_t labels = 0;   // number of trailing label attributes (ARFF/CSV without XML)
  std::uint64_t seed = 1;
  std::size_t k = 0;        // chain length for xdcc (0 = number of labels)
  double sigma = 1.0;       // label-test activation for the RDT algorithms
  OrderSpec order;
  rdt::Params rdt;
  boost::Params boost;
  bool cumulate_overrides_propagated = false;
  std::size_t early_stop_negative_rounds = 0;

  [[nodiscard]] LabelSpec label_spec() const {
    LabelSpec s;
    if (!xml.empty()) s.xml = xml;
    s.trailing = labels;
    return s;
  }

  void validate() const {
    if (xml.empty() && labels == 0) throw error("label spec missing: give an XML header or a trailing label count");
    if (is_rdt(algorithm)) {
      rdt::Params p = rdt;
      p.activation = sigma;
      p.validate();
    } else {
      boost.validate();
    }
  }
};

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  if (!c.name.empty()) j["name"] = c.name;
  j["algorithm"] = to_string(c.algorithm);
  j["train"] = c.train;
  j["test"] = c.test;
  j["xml"] = c.xml;
  j["labels"] = c.labels;
  j["seed"] = c.seed;
  j["k"] = c.k;
  j["sigma"] = c.sigma;
  j["order"] = to_string(c.order);
  j["rdt"] = {{"trees", c.rdt.tree_count},
              {"max_depth", c.rdt.max_depth},
              {"min_leaf", c.rdt.min_leaf_size},
              {"label_tests", c.rdt.label_test_fraction}};
  j["boost"] = {{"rounds", c.boost.rounds},
                {"max_depth", c.boost.max_depth},
                {"learning_rate", c.boost.learning_rate},
                {"l2_reg", c.boost.l2_reg},
                {"complexity", c.boost.complexity},
                {"min_split_gain", c.boost.min_split_gain},
                {"split_gain", boost::to_string(c.boost.split_gain)},
                {"base_raw_score", c.boost.base_raw_score}};
  j["cumulate_overrides_propagated"] = c.cumulate_overrides_propagated;
  j["early_stop_negative_rounds"] = c.early_stop_negative_rounds;
  return j;
}

namespace detail {
template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<std::string_view> known,
                           std::string_view where) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw error("unknown key '" + key + "' in " + std::string(where));
    }
  }
}
}  // namespace detail

/// Reads a config; absent keys keep their defaults, relative paths resolve against `base_dir`.
inline RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  try {
    detail::reject_unknown(j,
                           {"algorithm", "train", "test", "xml", "labels", "seed", "k", "sigma", "order", "rdt",
                            "boost", "cumulate_overrides_propagated", "early_stop_negative_rounds", "name"},
                           "config");
    RunConfig c;
    detail::read_key(j, "name", c.name);
    if (j.contains("algorithm")) c.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
    detail::read_key(j, "train", c.train);
    detail::read_key(j, "test", c.test);
    detail::read_key(j, "xml", c.xml);
    detail::read_key(j, "labels", c.labels);
    detail::read_key(j, "seed", c.seed);
    detail::read_key(j, "k", c.k);
    detail::read_key(j, "sigma", c.sigma);
    if (j.contains("order")) c.order = parse_order(j.at("order").get<std::string>());
    if (j.contains("rdt")) {
      const auto& r = j.at("rdt");
      detail::reject_unknown(r, {"trees", "max_depth", "min_leaf", "label_tests"}, "rdt");
      detail::read_key(r, "trees", c.rdt.tree_count);
      detail::read_key(r, "max_depth", c.rdt.max_depth);
      detail::read_key(r, "min_leaf", c.rdt.min_leaf_size);
      detail::read_key(r, "label_tests", c.rdt.label_test_fraction);
    }
    if (j.contains("boost")) {
      const auto& b = j.at("boost");
      detail::reject_unknown(b,
                             {"rounds", "max_depth", "learning_rate", "l2_reg", "complexity", "min_split_gain",
                              "split_gain", "base_raw_score"},
                             "boost");
      detail::read_key(b, "rounds", c.boost.rounds);
      detail::read_key(b, "max_depth", c.boost.max_depth);
      detail::read_key(b, "learning_rate", c.boost.learning_rate);
      detail::read_key(b, "l2_reg", c.boost.l2_reg);
      detail::read_key(b, "complexity", c.boost.complexity);
      detail::read_key(b, "min_split_gain", c.boost.min_split_gain);
      detail::read_key(b, "base_raw_score", c.boost.base_raw_score);
      if (b.contains("split_gain")) c.boost.split_gain = boost::parse_split_gain(b.at("split_gain").get<std::string>());
    }
    detail::read_key(j, "cumulate_overrides_propagated", c.cumulate_overrides_propagated);
    detail::read_key(j, "early_stop_negative_rounds", c.early_stop_negative_rounds);
    auto resolve = [&](std::string& p) {
      if (!p.empty() && !base_dir.empty() && std::filesystem::path(p).is_relative()) p = (base_dir / p).string();
    };
    resolve(c.train);
    resolve(c.test);
    resolve(c.xml);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw error(std::string("bad config: ") + e.what());
  }
}

inline RunConfig load_config(const std::filesystem::path& path) {
  const std::string text = detail::read_file(path, "config");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw error("bad config " + path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

using ModelVariant = std::variant<rdt::Ensemble, boost::Model, xdcc::ChainModel, xdcc::BaselineModel>;

/// A trained model plus what is needed to apply it to new data.
struct TrainedModel {
  Algorithm algorithm = Algorithm::rdt_dcc;
  std::vector<std::string> label_names;
  std::size_t base_width = 0;
  std::vector<std::uint32_t> order;  // static chain order (rdt-static, xgb-cc)
  ModelVariant model;
};

struct TrainLog {
  std::vector<std::vector<double>> loss;  // one curve per boosted model, mean cross-entropy per round
  std::vector<xdcc::TraceRow> trace;      // xdcc training-set propagation
  double seconds = 0.0;
};

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline TrainedModel train_model(const RunConfig& cfg, const MultiLabelDataset& train, TrainLog* log = nullptr) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  TrainedModel m;
  m.algorithm = cfg.algorithm;
  m.label_names = train.label_names();
  m.base_width = train.base_feature_count();
  if (is_rdt(cfg.algorithm)) {
    rdt::Params p = cfg.rdt;
    p.seed = cfg.seed;
    p.activation = cfg.sigma;
    const MultiLabelDataset aug = train.augmented() ? train : augment(train);
    m.model = rdt::build_ensemble(aug, p);
    if (cfg.algorithm == Algorithm::rdt_static) m.order = make_order(cfg.order, train.labels(), cfg.seed);
  } else if (cfg.algorithm == Algorithm::mlxgb) {
    std::vector<double> loss;
    m.model = boost::train(base_features(train), train.labels(), cfg.boost, nullptr, &loss);
    if (log) log->loss.push_back(std::move(loss));
  } else if (is_xdcc(cfg.algorithm)) {
    xdcc::ChainParams cp;
    cp.chain_length = cfg.k;
    cp.cumulate = cfg.algorithm == Algorithm::xdcc_cum;
    cp.cumulate_overrides_propagated = cfg.cumulate_overrides_propagated;
    cp.early_stop_negative_rounds = cfg.early_stop_negative_rounds;
    auto res = xdcc::train_chain(train, cp, cfg.boost);
    if (log) {
      log->loss = std::move(res.loss_log);
      log->trace = std::move(res.trace);
    }
    m.model = std::move(res.model);
  } else {
    xdcc::BaselineModel b;
    if (cfg.algorithm == Algorithm::xgb_br) {
      b = xdcc::train_br(train, cfg.boost);
    } else {
      m.order = make_order(cfg.order, train.labels(), cfg.seed);
      b = xdcc::train_static_cc(train, m.order, cfg.boost);
    }
    m.model = std::move(b);
  }
  if (log) log->seconds = seconds_since(t0);
  return m;
}

struct PredictOptions {
  std::optional<std::size_t> rounds;  // truncate an xdcc chain
  std::optional<double> sigma;        // re-draw RDT label-test activation
  std::optional<std::uint64_t> activation_seed;
  bool trace = false;
};

struct Prediction {
  Matrix<std::uint8_t> labels;
  std::vector<std::vector<rdt::ChainStep>> rdt_trace;  // per instance, RDT chains
  std::vector<xdcc::TraceRow> xdcc_trace;
  std::size_t blocked_flips = 0;
  std::size_t applied_flips = 0;
  double seconds = 0.0;
};

inline void check_compatible(const TrainedModel& m, const MultiLabelDataset& d) {
  if (d.base_feature_count() != m.base_width) {
    throw error("incompatible widths: model expects " + std::to_string(m.base_width) + " features, dataset has " +
                std::to_string(d.base_feature_count()));
  }
  if (d.num_labels() != m.label_names.size()) {
    throw error("incompatible widths: model has " + std::to_string(m.label_names.size()) + " labels, dataset has " +
                std::to_string(d.num_labels()));
  }
}

inline constexpr std::uint64_t kSweepActivationStream = 0x5167;

inline Prediction predict_model(const TrainedModel& m, const MultiLabelDataset& test, const PredictOptions& opt = {}) {
  check_compatible(m, test);
  const auto t0 = std::chrono::steady_clock::now();
  Prediction out;
  if (const auto* e = std::get_if<rdt::Ensemble>(&m.model)) {
    const Matrix<double> x = augmented_features(test);
    const rdt::Ensemble* use = e;
    std::optional<rdt::Ensemble> redrawn;
    if (opt.sigma) {
      redrawn = rdt::set_activation(*e, *opt.sigma,
                                    opt.activation_seed.value_or(derive_seed(e->params.seed, kSweepActivationStream)));
      use = &*redrawn;
    }
    auto* traces = opt.trace ? &out.rdt_trace : nullptr;
    switch (m.algorithm) {
      case Algorithm::ml_rdt: out.labels = rdt::predict_multilabel(x, *use); break;
      case Algorithm::rdt_static: out.labels = rdt::predict_static_chain(x, *use, m.order, traces); break;
      default: out.labels = rdt::predict_dynamic_chain(x, *use, traces); break;
    }
  } else if (const auto* b = std::get_if<boost::Model>(&m.model)) {
    const Matrix<double> p = boost::predict_proba(*b, base_features(test));
    out.labels = Matrix<std::uint8_t>(p.rows(), p.cols());
    for (std::size_t i = 0; i < p.rows(); ++i) {
      for (std::size_t j = 0; j < p.cols(); ++j) out.labels(i, j) = p(i, j) >= 0.5;
    }
  } else if (const auto* c = std::get_if<xdcc::ChainModel>(&m.model)) {
    auto res = xdcc::predict_chain(*c, base_features(test), opt.rounds);
    out.labels = std::move(res.labels);
    if (opt.trace) out.xdcc_trace = std::move(res.trace);
    out.blocked_flips = res.state.blocked_flips;
    out.applied_flips = res.state.applied_flips;
  } else {
    out.labels = xdcc::predict_baseline(std::get<xdcc::BaselineModel>(m.model), base_features(test));
  }
  out.seconds = seconds_since(t0);
  return out;
}

/// Labels an RDT chain had set after its first k iterations (later iterations
/// never revise earlier decisions, so this equals a chain stopped at k).
inline Matrix<std::uint8_t> truncate_rdt_chain(const std::vector<std::vector<rdt::ChainStep>>& traces,
                                               std::size_t labels, std::size_t k) {
  Matrix<std::uint8_t> out(traces.size(), labels, 0);
  for (std::size_t i = 0; i < traces.size(); ++i) {
    for (const auto& s : traces[i]) {
      if (s.iteration <= k) out(i, s.label) = s.decision;
    }
  }
  return out;
}

// Bundle file: {"format": "mlchain-model", "version": 1, "algorithm", "label_names",
// "base_width", "order", "model": {...}}.

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json bundle_to_json(const TrainedModel& m) {
  nlohmann::json j;
  j["format"] = "mlchain-model";
  j["version"] = kModelFormatVersion;
  j["algorithm"] = to_string(m.algorithm);
  j["label_names"] = m.label_names;
  j["base_width"] = m.base_width;
  j["order"] = m.order;
  std::visit([&](const auto& model) { j["model"] = serialize::to_json(model); }, m.model);
  return j;
}

inline TrainedModel bundle_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != "mlchain-model") throw error("not an mlchain model file");
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion) throw error("unsupported model version " + std::to_string(version));
    TrainedModel m;
    m.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
    m.label_names = j.at("label_names").get<std::vector<std::string>>();
    m.base_width = j.at("base_width").get<std::size_t>();
    m.order = j.at("order").get<std::vector<std::uint32_t>>();
    const auto& body = j.at("model");
    if (is_rdt(m.algorithm)) {
      m.model = serialize::rdt_from_json(body);
    } else if (m.algorithm == Algorithm::mlxgb) {
      m.model = serialize::boost_from_json(body);
    } else if (is_xdcc(m.algorithm)) {
      m.model = serialize::chain_from_json(body);
    } else {
      m.model = serialize::baseline_from_json(body);
    }
    if (m.algorithm == Algorithm::rdt_static) rdt::check_permutation(m.order, m.label_names.size());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw error(std::string("malformed model: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw error(std::string("malformed model: ") + e.what());
  }
}

inline void save_model(const TrainedModel& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("cannot write " + path.string());
  out << bundle_to_json(m).dump() << '\n';
}

inline TrainedModel load_model(const std::filesystem::path& path) {
  const std::string text = detail::read_file(path, "model");
  try {
    return bundle_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw error("malformed model: " + std::string(e.what()));
  }
}

// Trace CSVs.
//   RDT chains:  instance,iteration,label,decision,marginal,cardinality
//   XDCC chains: round,instance,label,probability,branch

inline void write_rdt_trace(std::ostream& out, const std::vector<std::vector<rdt::ChainStep>>& traces) {
  out << "instance,iteration,label,decision,marginal,cardinality\n";
  for (std::size_t i = 0; i < traces.size(); ++i) {
    for (const auto& s : traces[i]) {
      out << i << ',' << s.iteration << ',' << s.label << ',' << int(s.decision) << ','
          << detail::format_double(s.marginal) << ',' << detail::format_double(s.cardinality) << '\n';
    }
  }
}

inline void write_xdcc_trace(std::ostream& out, const std::vector<xdcc::TraceRow>& rows) {
  out << "round,instance,label,probability,branch\n";
  for (const auto& r : rows) {
    out << r.round << ',' << r.instance << ',' << r.label << ',' << detail::format_double(r.probability) << ','
        << xdcc::to_string(r.branch) << '\n';
  }
}

inline void write_loss_csv(std::ostream& out, const std::vector<std::vector<double>>& loss) {
  out << "model,round,mean_cross_entropy\n";
  for (std::size_t k = 0; k < loss.size(); ++k) {
    for (std::size_t t = 0; t < loss[k].size(); ++t) {
      out << k + 1 << ',' << t + 1 << ',' << detail::format_double(loss[k][t]) << '\n';
    }
  }
}

/// Loads the config's train and test sets.
struct LoadedData {
  MultiLabelDataset train;
  MultiLabelDataset test;
};

inline LoadedData load_data(const RunConfig& cfg) {
  if (cfg.train.empty()) throw error("no training set given");
  const auto spec = cfg.label_spec();
  auto train = load_dataset(cfg.train, spec);
  auto test = cfg.test.empty() ? train : load_dataset(cfg.test, spec);
  return {std::move(train), std::move(test)};
}

struct RunResult {
  EvalReport report;
  TrainedModel model;
  Prediction prediction;
};

/// Train on cfg.train, predict and evaluate on cfg.test.
inline RunResult run(const RunConfig& cfg, const LoadedData& data, const PredictOptions& opt = {}) {
  TrainLog log;
  RunResult r{{}, train_model(cfg, data.train, &log), {}};
  r.prediction = predict_model(r.model, data.test, opt);
  r.report = evaluate(data.test.labels(), r.prediction.labels);
  r.report.timing = {log.seconds, r.prediction.seconds};
  return r;
}

}  // namespace mlchain
