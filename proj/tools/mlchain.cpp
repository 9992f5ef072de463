// mlchain command-line front end: train, eval, bench, grid, trace, stats, synth.
// Exit codes: 0 ok, 1 any error, 2 input dataset not found. Errors are printed
// as a single "error: ..." line on stderr.

#include "mlchain/mlchain.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace mlchain;
using ojson = nlohmann::ordered_json;

namespace {

struct UsageError : error {
  using error::error;
};

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("cannot write " + path);
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  auto out = open_out(path);
  out << text;
}

// Flags that override fields of a RunConfig; only options given on the command
// line are applied, so they layer over --config files.
struct ConfigFlags {
  std::string config_path;
  std::string algo, train, test, xml, order, split_gain;
  std::size_t labels = 0, k = 0, trees = 0, max_depth = 0, min_leaf = 0, rounds = 0, boost_depth = 0,
              early_stop = 0;
  std::uint64_t seed = 0;
  double sigma = 0, label_tests = 0, eta = 0, l2 = 0, gamma = 0, min_split_gain = 0, base_score = 0;
  bool overrides = false;
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> setters;

  template <typename T, typename F>
  void add(CLI::App* app, const std::string& name, T& var, const std::string& help, F apply) {
    auto* opt = app->add_option(name, var, help);
    setters.emplace_back(opt, [&var, apply](RunConfig& c) { apply(c, var); });
  }

  void attach(CLI::App* app, bool with_data) {
    app->add_option("--config", config_path, "JSON run config; flags override its fields");
    add(app, "--algo", algo, "ml-rdt|rdt-static|rdt-dcc|mlxgb|xdcc-std|xdcc-cum|xgb-br|xgb-cc",
        [](RunConfig& c, const std::string& v) { c.algorithm = parse_algorithm(v); });
    if (with_data) {
      add(app, "--train", train, "training set (.arff or .csv)", [](RunConfig& c, const std::string& v) { c.train = v; });
      add(app, "--test", test, "test set", [](RunConfig& c, const std::string& v) { c.test = v; });
      add(app, "--xml", xml, "MULAN XML label header", [](RunConfig& c, const std::string& v) { c.xml = v; });
      add(app, "--labels", labels, "number of trailing label attributes",
          [](RunConfig& c, std::size_t v) { c.labels = v; });
    }
    add(app, "--seed", seed, "master seed", [](RunConfig& c, std::uint64_t v) { c.seed = v; });
    add(app, "--k", k, "xdcc chain length (0 = all labels)", [](RunConfig& c, std::size_t v) { c.k = v; });
    add(app, "--sigma", sigma, "RDT label-test activation ratio", [](RunConfig& c, double v) { c.sigma = v; });
    add(app, "--order", order, "static order: random[:seed] | given:i,j,.. | rare-first | frequent-first",
        [](RunConfig& c, const std::string& v) { c.order = parse_order(v); });
    add(app, "--trees", trees, "RDT ensemble size", [](RunConfig& c, std::size_t v) { c.rdt.tree_count = v; });
    add(app, "--max-depth", max_depth, "RDT maximum depth", [](RunConfig& c, std::size_t v) { c.rdt.max_depth = v; });
    add(app, "--min-leaf", min_leaf, "RDT minimum leaf size",
        [](RunConfig& c, std::size_t v) { c.rdt.min_leaf_size = v; });
    add(app, "--label-tests", label_tests, "RDT probability of a label test",
        [](RunConfig& c, double v) { c.rdt.label_test_fraction = v; });
    add(app, "--rounds", rounds, "boosting rounds", [](RunConfig& c, std::size_t v) { c.boost.rounds = v; });
    add(app, "--boost-depth", boost_depth, "boosted tree depth",
        [](RunConfig& c, std::size_t v) { c.boost.max_depth = v; });
    add(app, "--eta", eta, "learning rate", [](RunConfig& c, double v) { c.boost.learning_rate = v; });
    add(app, "--l2", l2, "leaf L2 regularization (epsilon)", [](RunConfig& c, double v) { c.boost.l2_reg = v; });
    add(app, "--gamma", gamma, "per-split complexity penalty", [](RunConfig& c, double v) { c.boost.complexity = v; });
    add(app, "--min-split-gain", min_split_gain, "minimum gain to split",
        [](RunConfig& c, double v) { c.boost.min_split_gain = v; });
    add(app, "--split-gain", split_gain, "sumGain|maxGain|sumSigned|maxSigned|sumAbsG|maxAbsG",
        [](RunConfig& c, const std::string& v) { c.boost.split_gain = boost::parse_split_gain(v); });
    add(app, "--base-score", base_score, "initial raw score", [](RunConfig& c, double v) { c.boost.base_raw_score = v; });
    add(app, "--early-stop", early_stop, "xdcc: stop after this many all-negative rounds (0 = off)",
        [](RunConfig& c, std::size_t v) { c.early_stop_negative_rounds = v; });
    app->add_flag("--cumulate-overrides", overrides, "xdcc-cum: round maxima may also override propagated labels");
  }

  RunConfig resolve() const {
    RunConfig c = config_path.empty() ? RunConfig{} : load_config(config_path);
    for (const auto& [opt, set] : setters) {
      if (opt->count() > 0) set(c);
    }
    if (overrides) c.cumulate_overrides_propagated = true;
    return c;
  }
};

struct DataFlags {
  std::string data, xml;
  std::size_t labels = 0;

  void attach(CLI::App* app, const std::string& name, const std::string& help) {
    app->add_option(name, data, help)->required();
    app->add_option("--xml", xml, "MULAN XML label header");
    app->add_option("--labels", labels, "number of trailing label attributes");
  }
  [[nodiscard]] LabelSpec spec() const {
    if (xml.empty() && labels == 0) throw UsageError("label spec missing: give --xml or --labels");
    LabelSpec s;
    if (!xml.empty()) s.xml = xml;
    s.trailing = labels;
    return s;
  }
  [[nodiscard]] MultiLabelDataset load() const { return load_dataset(data, spec()); }
};

ojson stats_json(const MultiLabelDataset& d) {
  const auto s = stats(d);
  return {{"instances", s.instances},
          {"features", d.base_feature_count()},
          {"labels", s.labels},
          {"cardinality", s.cardinality},
          {"distinct", s.distinct}};
}

std::string metrics_csv_row(const EvalReport& r) {
  return detail::format_double(r.hamming_accuracy) + "," + detail::format_double(r.subset_accuracy) + "," +
         detail::format_double(r.example_f1);
}

int cmd_train(const ConfigFlags& flags, const std::string& model_path, std::string manifest_path,
              const std::string& loss_path, const std::string& trace_path) {
  const RunConfig cfg = flags.resolve();
  cfg.validate();
  if (cfg.train.empty()) throw UsageError("no training set given (--train)");
  const auto train = load_dataset(cfg.train, cfg.label_spec());
  TrainLog log;
  const TrainedModel model = train_model(cfg, train, &log);
  save_model(model, model_path);
  if (manifest_path.empty()) manifest_path = model_path + ".manifest.json";
  ojson manifest;
  manifest["schema"] = "mlchain-manifest";
  manifest["version"] = 1;
  manifest["config"] = to_json(cfg);
  manifest["seed"] = cfg.seed;
  manifest["model"] = model_path;
  manifest["train"] = stats_json(train);
  manifest["timing"] = {{"train_seconds", log.seconds}};
  if (const auto* c = std::get_if<xdcc::ChainModel>(&model.model)) manifest["rounds"] = c->rounds.size();
  if (!model.order.empty()) manifest["order"] = model.order;
  write_text(manifest_path, manifest.dump(2) + "\n");
  if (!loss_path.empty()) {
    if (log.loss.empty()) throw UsageError("--loss needs a boosted algorithm");
    auto out = open_out(loss_path);
    write_loss_csv(out, log.loss);
  }
  if (!trace_path.empty()) {
    if (!is_xdcc(model.algorithm)) throw UsageError("--trace at training time needs an xdcc algorithm");
    auto out = open_out(trace_path);
    write_xdcc_trace(out, log.trace);
  }
  return 0;
}

struct EvalFlags {
  std::string model, report, sweep_k, sweep_sigma_out, trace;
  std::vector<double> sweep_sigma;
  bool per_instance = false, no_timing = false;
  std::size_t rounds = 0;
  double sigma = 0;
  CLI::Option* rounds_opt = nullptr;
  CLI::Option* sigma_opt = nullptr;
};

void write_trace(const std::string& path, const TrainedModel& model, const Prediction& p) {
  std::ostringstream out;
  if (is_rdt(model.algorithm)) {
    write_rdt_trace(out, p.rdt_trace);
  } else {
    write_xdcc_trace(out, p.xdcc_trace);
  }
  write_text(path, out.str());
}

int cmd_eval(const EvalFlags& f, const DataFlags& data) {
  const TrainedModel model = load_model(f.model);
  const auto test = data.load();
  check_compatible(model, test);
  PredictOptions opt;
  if (f.rounds_opt->count()) {
    if (!is_xdcc(model.algorithm)) throw UsageError("--rounds needs an xdcc model");
    opt.rounds = f.rounds;
  }
  if (f.sigma_opt->count()) {
    if (!is_rdt(model.algorithm)) throw UsageError("--sigma needs an RDT model");
    opt.sigma = f.sigma;
  }
  opt.trace = !f.trace.empty() || (!f.sweep_k.empty() && is_rdt(model.algorithm));
  if (!f.trace.empty() && !is_chain(model.algorithm)) throw UsageError("model is not a chain model");
  const Prediction pred = predict_model(model, test, opt);
  EvalReport report = evaluate(test.labels(), pred.labels);
  report.timing.predict_seconds = pred.seconds;
  if (!f.trace.empty()) {
    write_trace(f.trace, model, pred);
    report.trace_path = f.trace;
  }
  ojson j = to_json(report, f.per_instance);
  j["algorithm"] = to_string(model.algorithm);
  if (f.no_timing) j.erase("timing");
  if (!f.report.empty()) write_text(f.report, j.dump(2) + "\n");

  if (!f.sweep_k.empty()) {
    if (!is_chain(model.algorithm)) throw UsageError("--sweep-k needs a chain model");
    std::ostringstream out;
    out << "k,hamming_accuracy,subset_accuracy,example_f1\n";
    const std::size_t n = test.num_labels();
    if (is_rdt(model.algorithm)) {
      for (std::size_t k = 1; k <= n; ++k) {
        out << k << ',' << metrics_csv_row(evaluate(test.labels(), truncate_rdt_chain(pred.rdt_trace, n, k))) << '\n';
      }
    } else {
      const auto& chain = std::get<xdcc::ChainModel>(model.model);
      for (std::size_t k = 1; k <= chain.rounds.size(); ++k) {
        PredictOptions o;
        o.rounds = k;
        out << k << ',' << metrics_csv_row(evaluate(test.labels(), predict_model(model, test, o).labels)) << '\n';
      }
    }
    write_text(f.sweep_k, out.str());
  }
  if (!f.sweep_sigma.empty()) {
    if (!is_rdt(model.algorithm)) throw UsageError("--sweep-sigma needs an RDT model");
    std::ostringstream out;
    out << "sigma,hamming_accuracy,subset_accuracy,example_f1\n";
    for (double s : f.sweep_sigma) {
      PredictOptions o;
      o.sigma = s;
      out << detail::format_double(s) << ',' << metrics_csv_row(evaluate(test.labels(), predict_model(model, test, o).labels))
          << '\n';
    }
    write_text(f.sweep_sigma_out.empty() ? "-" : f.sweep_sigma_out, out.str());
  }
  if (f.report.empty()) std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_trace(const std::string& model_path, const DataFlags& data, const std::string& out_path) {
  const TrainedModel model = load_model(model_path);
  if (!is_chain(model.algorithm)) throw UsageError("model is not a chain model: " + std::string(to_string(model.algorithm)));
  std::optional<MultiLabelDataset> test;
  try {
    test = data.load();
  } catch (const empty_dataset&) {
    // No instances: emit the header only.
  }
  Prediction pred;
  if (test) {
    PredictOptions opt;
    opt.trace = true;
    pred = predict_model(model, *test, opt);
  }
  write_trace(out_path, model, pred);
  return 0;
}

struct BenchRow {
  std::string name;
  RunConfig config;
  EvalReport report;
};

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out << "name,algorithm,hamming_accuracy,subset_accuracy,example_f1,train_seconds,predict_seconds,"
         "ha_ratio,sa_ratio,f1_ratio,train_time_ratio,predict_time_ratio\n";
  auto ratio = [](double a, double b) { return b != 0.0 ? detail::format_double(a / b) : std::string("nan"); };
  for (const auto& r : rows) {
    const auto& b = rows.front().report;
    const auto& e = r.report;
    out << r.name << ',' << to_string(r.config.algorithm) << ',' << metrics_csv_row(e) << ','
        << detail::format_double(e.timing.train_seconds) << ',' << detail::format_double(e.timing.predict_seconds) << ','
        << ratio(e.hamming_accuracy, b.hamming_accuracy) << ',' << ratio(e.subset_accuracy, b.subset_accuracy) << ','
        << ratio(e.example_f1, b.example_f1) << ',' << ratio(e.timing.train_seconds, b.timing.train_seconds) << ','
        << ratio(e.timing.predict_seconds, b.timing.predict_seconds) << '\n';
  }
  return out.str();
}

ojson bench_json(const std::vector<BenchRow>& rows, const std::string& failure) {
  ojson runs = ojson::array();
  for (const auto& r : rows) {
    ojson j = to_json(r.report);
    j["name"] = r.name;
    j["config"] = to_json(r.config);
    runs.push_back(std::move(j));
  }
  ojson out;
  out["schema"] = "mlchain-bench";
  out["version"] = 1;
  out["runs"] = std::move(runs);
  if (!failure.empty()) out["failure"] = failure;
  return out;
}

int cmd_bench(const std::vector<std::string>& configs, const std::string& csv_path, const std::string& json_path) {
  if (configs.size() < 2) throw UsageError("need >=2 configs");
  std::vector<BenchRow> rows;
  auto flush = [&](const std::string& failure) {
    if (!csv_path.empty()) write_text(csv_path, bench_csv(rows));
    if (!json_path.empty()) write_text(json_path, bench_json(rows, failure).dump(2) + "\n");
    if (csv_path.empty() && json_path.empty()) std::cout << bench_csv(rows);
  };
  for (const auto& path : configs) {
    try {
      const RunConfig cfg = load_config(path);
      cfg.validate();
      const auto data = load_data(cfg);
      const auto res = run(cfg, data);
      rows.push_back({cfg.name.empty() ? fs::path(path).stem().string() : cfg.name, cfg, res.report});
    } catch (const std::exception& e) {
      flush(path + ": " + e.what());
      throw;
    }
  }
  flush("");
  return 0;
}

// Sets a dotted key such as "boost.learning_rate" in a config document.
void set_dotted(nlohmann::json& j, const std::string& key, const nlohmann::json& value) {
  nlohmann::json* cur = &j;
  std::string rest = key;
  for (auto dot = rest.find('.'); dot != std::string::npos; dot = rest.find('.')) {
    cur = &(*cur)[rest.substr(0, dot)];
    rest = rest.substr(dot + 1);
  }
  (*cur)[rest] = value;
}

int cmd_grid(const std::string& base_path, const std::string& grid_path, const std::string& out_path) {
  nlohmann::json base = nlohmann::json::parse(detail::read_file(base_path, "config"));
  const nlohmann::json grid = nlohmann::json::parse(detail::read_file(grid_path, "grid"));
  if (!grid.is_object() || grid.empty()) throw UsageError("grid must be an object of key -> list of values");
  std::vector<std::pair<std::string, std::vector<nlohmann::json>>> axes;
  for (const auto& [key, values] : grid.items()) {
    if (!values.is_array() || values.empty()) throw UsageError("grid entry '" + key + "' must be a non-empty list");
    axes.emplace_back(key, std::vector<nlohmann::json>(values.begin(), values.end()));
  }
  std::ostringstream out;
  for (const auto& [key, _] : axes) out << key << ',';
  out << "hamming_accuracy,subset_accuracy,example_f1,train_seconds,predict_seconds\n";
  std::vector<std::size_t> idx(axes.size(), 0);
  std::optional<LoadedData> data;
  while (true) {
    nlohmann::json doc = base;
    for (std::size_t a = 0; a < axes.size(); ++a) set_dotted(doc, axes[a].first, axes[a].second[idx[a]]);
    const RunConfig cfg = config_from_json(doc, fs::path(base_path).parent_path());
    cfg.validate();
    if (!data) data = load_data(cfg);
    const auto res = run(cfg, *data);
    for (std::size_t a = 0; a < axes.size(); ++a) out << axes[a].second[idx[a]].dump() << ',';
    out << metrics_csv_row(res.report) << ',' << detail::format_double(res.report.timing.train_seconds) << ','
        << detail::format_double(res.report.timing.predict_seconds) << '\n';
    std::size_t a = 0;
    while (a < axes.size() && ++idx[a] == axes[a].second.size()) idx[a++] = 0;
    if (a == axes.size()) break;
  }
  write_text(out_path, out.str());
  return 0;
}

int cmd_synth(const std::string& shape, std::uint64_t seed, const std::string& dir) {
  const SynthSpec spec = benchmark_shape(shape);
  const auto split = make_synthetic(spec, seed);
  fs::create_directories(dir);
  const fs::path base = fs::path(dir) / shape;
  {
    auto out = open_out(base.string() + "-train.arff");
    write_arff(out, split.train, shape + "-train");
  }
  {
    auto out = open_out(base.string() + "-test.arff");
    write_arff(out, split.test, shape + "-test");
  }
  auto out = open_out(base.string() + ".xml");
  write_mulan_xml(out, split.train.label_names());
  return 0;
}

std::string one_line(std::string s) {
  for (auto& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mlchain: multi-label classification with static and dynamic classifier chains"};
  app.require_subcommand(1);

  ConfigFlags train_flags;
  std::string model_out, manifest_out, loss_out, train_trace;
  auto* train = app.add_subcommand("train", "train a model and write it with a run manifest");
  train_flags.attach(train, true);
  train->add_option("--model", model_out, "output model file")->required();
  train->add_option("--manifest", manifest_out, "run manifest JSON (default: <model>.manifest.json)");
  train->add_option("--loss", loss_out, "per-round training loss CSV (boosted algorithms)");
  train->add_option("--trace", train_trace, "training-set propagation trace CSV (xdcc)");

  EvalFlags eval_flags;
  DataFlags eval_data;
  auto* eval = app.add_subcommand("eval", "evaluate a model on a test set");
  eval->add_option("--model", eval_flags.model, "model file")->required();
  eval_data.attach(eval, "--test", "test set");
  eval->add_option("--report", eval_flags.report, "report JSON (default: stdout)");
  eval->add_flag("--per-instance", eval_flags.per_instance, "include per-instance metrics");
  eval->add_flag("--no-timing", eval_flags.no_timing, "omit timings (for byte-stable reports)");
  eval->add_option("--trace", eval_flags.trace, "chain trace CSV");
  eval->add_option("--sweep-k", eval_flags.sweep_k, "CSV with one report row per chain length");
  eval->add_option("--sweep-sigma", eval_flags.sweep_sigma, "activation ratios to sweep (RDT)")->delimiter(',');
  eval->add_option("--sweep-sigma-out", eval_flags.sweep_sigma_out, "CSV for --sweep-sigma (default: stdout)");
  eval_flags.rounds_opt = eval->add_option("--rounds", eval_flags.rounds, "truncate an xdcc chain");
  eval_flags.sigma_opt = eval->add_option("--sigma", eval_flags.sigma, "re-draw RDT label-test activation");

  std::vector<std::string> bench_configs;
  std::string bench_csv_out, bench_json_out;
  auto* bench = app.add_subcommand("bench", "run several configs and compare them to the first");
  bench->add_option("configs", bench_configs, "run config JSON files")->required();
  bench->add_option("--csv", bench_csv_out, "comparison table CSV");
  bench->add_option("--json", bench_json_out, "comparison JSON");

  std::string grid_base, grid_file, grid_out = "-";
  auto* grid = app.add_subcommand("grid", "run the cartesian product of parameter lists over a base config");
  grid->add_option("--config", grid_base, "base run config")->required();
  grid->add_option("--grid", grid_file, "JSON object: dotted key -> list of values")->required();
  grid->add_option("--out", grid_out, "results CSV (default: stdout)");

  std::string trace_model, trace_out = "-";
  DataFlags trace_data;
  auto* trace = app.add_subcommand("trace", "write the per-iteration chain trace of a chain model");
  trace->add_option("--model", trace_model, "model file")->required();
  trace_data.attach(trace, "--test", "test set");
  trace->add_option("--out", trace_out, "trace CSV (default: stdout)");

  DataFlags stats_data;
  auto* stats_cmd = app.add_subcommand("stats", "print dataset statistics as JSON");
  stats_data.attach(stats_cmd, "--data", "dataset file");

  std::string synth_shape, synth_dir;
  std::uint64_t synth_seed = 1;
  auto* synth = app.add_subcommand("synth", "write a synthetic stand-in with a benchmark's shape");
  synth->add_option("--shape", synth_shape, "emotions|scene|yeast|flags")->required();
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out", synth_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 1;
  }

  try {
    if (*train) return cmd_train(train_flags, model_out, manifest_out, loss_out, train_trace);
    if (*eval) return cmd_eval(eval_flags, eval_data);
    if (*bench) return cmd_bench(bench_configs, bench_csv_out, bench_json_out);
    if (*grid) return cmd_grid(grid_base, grid_file, grid_out);
    if (*trace) return cmd_trace(trace_model, trace_data, trace_out);
    if (*stats_cmd) {
      std::cout << stats_json(stats_data.load()).dump(2) << "\n";
      return 0;
    }
    if (*synth) return cmd_synth(synth_shape, synth_seed, synth_dir);
  } catch (const file_not_found& e) {
    const std::string what = e.what();
    std::cerr << "error: " << one_line(what) << "\n";
    return what.rfind("dataset not found", 0) == 0 ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}
