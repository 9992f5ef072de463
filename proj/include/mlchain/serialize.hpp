#pragma once

// JSON encoding of trained models. Trees are stored column-wise (one array per
// node field) to keep files compact. Doubles are written in shortest
// round-trip form, so a reloaded model predicts bit-identically.

#include "mlchain/error.hpp"
#include "mlchain/mlboost.hpp"
#include "mlchain/rdt.hpp"
#include "mlchain/xdcc.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace mlchain::serialize {

using json = nlohmann::json;

inline json to_json(const rdt::Params& p) {
  return {{"tree_count", p.tree_count},
          {"max_depth", p.max_depth},
          {"min_leaf_size", p.min_leaf_size},
          {"label_test_fraction", p.label_test_fraction},
          {"activation", p.activation},
          {"seed", p.seed}};
}

inline rdt::Params rdt_params_from_json(const json& j) {
  rdt::Params p;
  p.tree_count = j.at("tree_count").get<std::size_t>();
  p.max_depth = j.at("max_depth").get<std::size_t>();
  p.min_leaf_size = j.at("min_leaf_size").get<std::size_t>();
  p.label_test_fraction = j.at("label_test_fraction").get<double>();
  p.activation = j.at("activation").get<double>();
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

inline json to_json(const rdt::Tree& t) {
  std::vector<int> kind, label_test, active, child_count;
  std::vector<std::uint32_t> column, first_child, leaf;
  std::vector<double> threshold;
  for (const auto& n : t.nodes) {
    kind.push_back(static_cast<int>(n.kind));
    label_test.push_back(n.label_test);
    active.push_back(n.active);
    column.push_back(n.column);
    threshold.push_back(n.threshold);
    first_child.push_back(n.first_child);
    child_count.push_back(static_cast<int>(n.child_count));
    leaf.push_back(n.leaf);
  }
  return {{"label_count", t.label_count}, {"width", t.width},
          {"kind", kind},   {"label_test", label_test},   {"active", active},
          {"column", column}, {"threshold", threshold}, {"first_child", first_child},
          {"child_count", child_count}, {"leaf", leaf},
          {"leaf_instances", t.leaf_instances}, {"leaf_positives", t.leaf_positives}};
}

inline rdt::Tree rdt_tree_from_json(const json& j) {
  rdt::Tree t;
  t.label_count = j.at("label_count").get<std::size_t>();
  t.width = j.at("width").get<std::size_t>();
  const auto kind = j.at("kind").get<std::vector<int>>();
  const auto label_test = j.at("label_test").get<std::vector<int>>();
  const auto active = j.at("active").get<std::vector<int>>();
  const auto column = j.at("column").get<std::vector<std::uint32_t>>();
  const auto threshold = j.at("threshold").get<std::vector<double>>();
  const auto first_child = j.at("first_child").get<std::vector<std::uint32_t>>();
  const auto child_count = j.at("child_count").get<std::vector<std::uint32_t>>();
  const auto leaf = j.at("leaf").get<std::vector<std::uint32_t>>();
  const std::size_t n = kind.size();
  if (label_test.size() != n || active.size() != n || column.size() != n || threshold.size() != n ||
      first_child.size() != n || child_count.size() != n || leaf.size() != n) {
    throw error("malformed model: node arrays differ in length");
  }
  t.nodes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (kind[i] < 0 || kind[i] > 2) throw error("malformed model: bad node kind");
    t.nodes[i] = {static_cast<rdt::TestKind>(kind[i]), label_test[i] != 0, active[i] != 0, column[i], threshold[i],
                  first_child[i], child_count[i], leaf[i]};
  }
  t.leaf_instances = j.at("leaf_instances").get<std::vector<std::uint32_t>>();
  t.leaf_positives = j.at("leaf_positives").get<std::vector<std::uint32_t>>();
  if (t.leaf_positives.size() != t.leaf_instances.size() * t.label_count) {
    throw error("malformed model: leaf statistics have the wrong size");
  }
  for (const auto& node : t.nodes) {
    if (node.kind == rdt::TestKind::leaf) {
      if (node.leaf >= t.leaf_instances.size()) throw error("malformed model: leaf index out of range");
    } else if (node.column >= t.width || std::size_t(node.first_child) + node.child_count > n) {
      throw error("malformed model: node reference out of range");
    }
  }
  return t;
}

inline json to_json(const rdt::Ensemble& e) {
  json trees = json::array();
  for (const auto& t : e.trees) trees.push_back(to_json(t));
  return {{"params", to_json(e.params)}, {"label_count", e.label_count}, {"label_offset", e.label_offset},
          {"width", e.width},            {"prior", e.prior},             {"trees", std::move(trees)}};
}

inline rdt::Ensemble rdt_from_json(const json& j) {
  rdt::Ensemble e;
  e.params = rdt_params_from_json(j.at("params"));
  e.label_count = j.at("label_count").get<std::size_t>();
  e.label_offset = j.at("label_offset").get<std::size_t>();
  e.width = j.at("width").get<std::size_t>();
  e.prior = j.at("prior").get<std::vector<double>>();
  for (const auto& t : j.at("trees")) e.trees.push_back(rdt_tree_from_json(t));
  return e;
}

inline json to_json(const boost::Params& p) {
  return {{"rounds", p.rounds},
          {"max_depth", p.max_depth},
          {"learning_rate", p.learning_rate},
          {"l2_reg", p.l2_reg},
          {"complexity", p.complexity},
          {"min_split_gain", p.min_split_gain},
          {"split_gain", std::string(boost::to_string(p.split_gain))},
          {"base_raw_score", p.base_raw_score}};
}

inline boost::Params boost_params_from_json(const json& j) {
  boost::Params p;
  p.rounds = j.at("rounds").get<std::size_t>();
  p.max_depth = j.at("max_depth").get<std::size_t>();
  p.learning_rate = j.at("learning_rate").get<double>();
  p.l2_reg = j.at("l2_reg").get<double>();
  p.complexity = j.at("complexity").get<double>();
  p.min_split_gain = j.at("min_split_gain").get<double>();
  p.split_gain = boost::parse_split_gain(j.at("split_gain").get<std::string>());
  p.base_raw_score = j.at("base_raw_score").get<double>();
  return p;
}

inline json to_json(const boost::BoostTree& t) {
  std::vector<int> leaf, missing_left;
  std::vector<std::uint32_t> column, left, right, leaf_index;
  std::vector<double> threshold, gain;
  for (const auto& n : t.nodes) {
    leaf.push_back(n.leaf);
    missing_left.push_back(n.missing_left);
    column.push_back(n.column);
    left.push_back(n.left);
    right.push_back(n.right);
    leaf_index.push_back(n.leaf_index);
    threshold.push_back(n.threshold);
    gain.push_back(n.gain);
  }
  return {{"label_count", t.label_count}, {"leaf", leaf},       {"column", column},
          {"threshold", threshold},       {"missing_left", missing_left}, {"left", left},
          {"right", right},               {"leaf_index", leaf_index},     {"gain", gain},
          {"weights", t.weights}};
}

inline boost::BoostTree boost_tree_from_json(const json& j, std::size_t width) {
  boost::BoostTree t;
  t.label_count = j.at("label_count").get<std::size_t>();
  const auto leaf = j.at("leaf").get<std::vector<int>>();
  const auto missing_left = j.at("missing_left").get<std::vector<int>>();
  const auto column = j.at("column").get<std::vector<std::uint32_t>>();
  const auto left = j.at("left").get<std::vector<std::uint32_t>>();
  const auto right = j.at("right").get<std::vector<std::uint32_t>>();
  const auto leaf_index = j.at("leaf_index").get<std::vector<std::uint32_t>>();
  const auto threshold = j.at("threshold").get<std::vector<double>>();
  const auto gain = j.at("gain").get<std::vector<double>>();
  t.weights = j.at("weights").get<std::vector<double>>();
  const std::size_t n = leaf.size();
  if (n == 0 || missing_left.size() != n || column.size() != n || left.size() != n || right.size() != n ||
      leaf_index.size() != n || threshold.size() != n || gain.size() != n) {
    throw error("malformed model: node arrays differ in length");
  }
  for (std::size_t i = 0; i < n; ++i) {
    boost::BoostNode node{leaf[i] != 0, column[i], threshold[i], missing_left[i] != 0,
                          left[i],      right[i],  leaf_index[i], gain[i]};
    if (node.leaf ? node.leaf_index >= t.leaf_count() : (node.left >= n || node.right >= n || node.column >= width)) {
      throw error("malformed model: node reference out of range");
    }
    t.nodes.push_back(node);
  }
  return t;
}

inline json to_json(const boost::Model& m) {
  json trees = json::array();
  for (const auto& t : m.trees) trees.push_back(to_json(t));
  return {{"params", to_json(m.params)}, {"label_count", m.label_count}, {"width", m.width},
          {"trees", std::move(trees)}};
}

inline boost::Model boost_from_json(const json& j) {
  boost::Model m;
  m.params = boost_params_from_json(j.at("params"));
  m.label_count = j.at("label_count").get<std::size_t>();
  m.width = j.at("width").get<std::size_t>();
  for (const auto& t : j.at("trees")) m.trees.push_back(boost_tree_from_json(t, m.width));
  return m;
}

inline json to_json(const xdcc::ChainParams& p) {
  return {{"chain_length", p.chain_length},
          {"cumulate", p.cumulate},
          {"cumulate_overrides_propagated", p.cumulate_overrides_propagated},
          {"early_stop_negative_rounds", p.early_stop_negative_rounds}};
}

inline xdcc::ChainParams chain_params_from_json(const json& j) {
  xdcc::ChainParams p;
  p.chain_length = j.at("chain_length").get<std::size_t>();
  p.cumulate = j.at("cumulate").get<bool>();
  p.cumulate_overrides_propagated = j.at("cumulate_overrides_propagated").get<bool>();
  p.early_stop_negative_rounds = j.at("early_stop_negative_rounds").get<std::size_t>();
  return p;
}

inline json to_json(const xdcc::ChainModel& m) {
  json rounds = json::array();
  for (const auto& r : m.rounds) rounds.push_back(to_json(r));
  return {{"params", to_json(m.params)}, {"boost", to_json(m.boost)},     {"label_count", m.label_count},
          {"base_width", m.base_width},  {"rounds", std::move(rounds)}};
}

inline xdcc::ChainModel chain_from_json(const json& j) {
  xdcc::ChainModel m;
  m.params = chain_params_from_json(j.at("params"));
  m.boost = boost_params_from_json(j.at("boost"));
  m.label_count = j.at("label_count").get<std::size_t>();
  m.base_width = j.at("base_width").get<std::size_t>();
  for (const auto& r : j.at("rounds")) m.rounds.push_back(boost_from_json(r));
  for (const auto& r : m.rounds) {
    if (r.width != m.base_width + m.label_count || r.label_count != m.label_count) {
      throw error("malformed model: chain round has the wrong shape");
    }
  }
  return m;
}

inline json to_json(const xdcc::BaselineModel& m) {
  json models = json::array();
  for (const auto& r : m.models) models.push_back(to_json(r));
  return {{"kind", m.kind == xdcc::BaselineKind::binary_relevance ? "br" : "cc"},
          {"boost", to_json(m.boost)},
          {"label_count", m.label_count},
          {"base_width", m.base_width},
          {"order", m.order},
          {"models", std::move(models)}};
}

inline xdcc::BaselineModel baseline_from_json(const json& j) {
  xdcc::BaselineModel m;
  const auto kind = j.at("kind").get<std::string>();
  if (kind != "br" && kind != "cc") throw error("malformed model: unknown baseline kind '" + kind + "'");
  m.kind = kind == "br" ? xdcc::BaselineKind::binary_relevance : xdcc::BaselineKind::classifier_chain;
  m.boost = boost_params_from_json(j.at("boost"));
  m.label_count = j.at("label_count").get<std::size_t>();
  m.base_width = j.at("base_width").get<std::size_t>();
  m.order = j.at("order").get<std::vector<std::uint32_t>>();
  for (const auto& r : j.at("models")) m.models.push_back(boost_from_json(r));
  if (m.models.size() != m.label_count || m.order.size() != m.label_count) {
    throw error("malformed model: baseline needs one model per label");
  }
  return m;
}

}  // namespace mlchain::serialize
