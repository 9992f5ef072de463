#pragma once

// Random decision trees over the augmented space [X, Y]. Inner nodes test
// either an input feature or a label feature; the latter lets one ensemble
// answer binary relevance, static chain and dynamic chain queries.

#include "mlchain/dataset.hpp"
#include "mlchain/matrix.hpp"
#include "mlchain/parallel.hpp"
#include "mlchain/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mlchain::rdt {

struct Params {
  std::size_t tree_count = 300;
  std::size_t max_depth = 30;
  std::size_t min_leaf_size = 5;      // nodes with this many instances or fewer become leaves
  double label_test_fraction = 0.3;   // probability of drawing the test column from the label features
  double activation = 1.0;            // sigma: probability that a label test honours known label values
  std::uint64_t seed = 1;

  void validate() const {
    if (tree_count < 1) throw std::invalid_argument("tree_count must be >= 1");
    if (max_depth < 1) throw std::invalid_argument("max_depth must be >= 1");
    if (min_leaf_size < 1) throw std::invalid_argument("min_leaf_size must be >= 1");
    if (!(label_test_fraction >= 0.0 && label_test_fraction <= 1.0)) {
      throw std::invalid_argument("label_test_fraction must be in [0,1]");
    }
    if (!(activation >= 0.0 && activation <= 1.0)) throw std::invalid_argument("activation must be in [0,1]");
  }
};

enum class TestKind : std::uint8_t { leaf, numeric, categorical };

struct Node {
  TestKind kind = TestKind::leaf;
  bool label_test = false;  // tests a label-feature column (always two children: 0 and 1)
  bool active = true;       // inactive label tests treat the label as unknown
  std::uint32_t column = 0;
  double threshold = 0.0;   // numeric: value < threshold goes to child 0
  std::uint32_t first_child = 0;
  std::uint32_t child_count = 0;
  std::uint32_t leaf = 0;   // index into the leaf statistics when kind == leaf
};

struct LeafStats {
  std::uint32_t instance_count = 0;
  std::vector<std::uint32_t> positive_counts;
};

struct Tree {
  std::vector<Node> nodes;  // nodes[0] is the root; siblings are contiguous
  std::vector<std::uint32_t> leaf_instances;
  std::vector<std::uint32_t> leaf_positives;  // leaf-major, label_count per leaf
  std::size_t label_count = 0;
  std::size_t width = 0;  // augmented instance width the tree was built on

  [[nodiscard]] std::size_t leaf_count() const noexcept { return leaf_instances.size(); }
  [[nodiscard]] std::span<const std::uint32_t> positives(std::size_t leaf) const noexcept {
    return {leaf_positives.data() + leaf * label_count, label_count};
  }
  [[nodiscard]] LeafStats leaf_stats(std::size_t leaf) const {
    const auto p = positives(leaf);
    return {leaf_instances.at(leaf), {p.begin(), p.end()}};
  }
  [[nodiscard]] std::size_t depth() const {
    std::size_t best = 0;
    std::vector<std::pair<std::uint32_t, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
      auto [id, d] = stack.back();
      stack.pop_back();
      const Node& n = nodes[id];
      if (n.kind == TestKind::leaf) {
        best = std::max(best, d);
        continue;
      }
      for (std::uint32_t c = 0; c < n.child_count; ++c) stack.emplace_back(n.first_child + c, d + 1);
    }
    return best;
  }
};

struct Ensemble {
  Params params;
  std::size_t label_count = 0;
  std::size_t label_offset = 0;  // first label-feature column
  std::size_t width = 0;
  std::vector<Tree> trees;
  std::vector<double> prior;  // training label frequencies, used when every tree abstains

  [[nodiscard]] std::size_t label_test_count() const {
    std::size_t c = 0;
    for (const auto& t : trees) {
      for (const auto& n : t.nodes) c += n.kind != TestKind::leaf && n.label_test;
    }
    return c;
  }
  [[nodiscard]] std::size_t inner_node_count() const {
    std::size_t c = 0;
    for (const auto& t : trees) {
      for (const auto& n : t.nodes) c += n.kind != TestKind::leaf;
    }
    return c;
  }
};

namespace detail {

struct ColumnMeta {
  TestKind kind = TestKind::numeric;
  bool label = false;
  std::uint32_t arity = 2;
};

class TreeBuilder {
 public:
  TreeBuilder(const Matrix<double>& x, const Matrix<std::uint8_t>& y, const std::vector<ColumnMeta>& meta,
              std::size_t label_offset, const Params& params, std::uint64_t seed)
      : x_(x), y_(y), meta_(meta), label_offset_(label_offset), params_(params), rng_(seed),
        used_(meta.size(), 0) {}

  Tree build() {
    tree_.label_count = y_.cols();
    tree_.width = meta_.size();
    tree_.nodes.emplace_back();
    std::vector<std::uint32_t> rows(x_.rows());
    std::iota(rows.begin(), rows.end(), 0u);
    grow(0, rows, 0);
    return std::move(tree_);
  }

 private:
  [[nodiscard]] double cell(std::uint32_t row, std::uint32_t column) const {
    if (meta_[column].label) return y_(row, column - label_offset_);
    return x_(row, column);
  }

  void make_leaf(std::uint32_t id, const std::vector<std::uint32_t>& rows) {
    Node& n = tree_.nodes[id];
    n.kind = TestKind::leaf;
    n.leaf = static_cast<std::uint32_t>(tree_.leaf_instances.size());
    tree_.leaf_instances.push_back(static_cast<std::uint32_t>(rows.size()));
    const std::size_t base = tree_.leaf_positives.size();
    tree_.leaf_positives.resize(base + y_.cols(), 0);
    for (auto r : rows) {
      for (std::size_t j = 0; j < y_.cols(); ++j) tree_.leaf_positives[base + j] += y_(r, j);
    }
  }

  // Numeric test: threshold from a randomly picked instance, one resample if it fails to separate.
  std::optional<double> try_numeric(std::uint32_t column, const std::vector<std::uint32_t>& rows) {
    std::vector<std::uint32_t> known;
    double lo = std::numeric_limits<double>::infinity();
    for (auto r : rows) {
      const double v = cell(r, column);
      if (is_missing(v)) continue;
      known.push_back(r);
      lo = std::min(lo, v);
    }
    if (known.size() < 2) return std::nullopt;
    for (int attempt = 0; attempt < 2; ++attempt) {
      const double t = cell(known[rng_.index(known.size())], column);
      if (t > lo) return t;  // the minimum goes left, the picked instance goes right
    }
    return std::nullopt;
  }

  bool separates_discrete(std::uint32_t column, const std::vector<std::uint32_t>& rows) const {
    double first = kMissing;
    for (auto r : rows) {
      const double v = cell(r, column);
      if (is_missing(v)) continue;
      if (is_missing(first)) {
        first = v;
      } else if (v != first) {
        return true;
      }
    }
    return false;
  }

  void grow(std::uint32_t id, const std::vector<std::uint32_t>& rows, std::size_t depth) {
    if (depth >= params_.max_depth || rows.size() <= params_.min_leaf_size) {
      make_leaf(id, rows);
      return;
    }
    std::vector<std::uint32_t> label_pool, feature_pool;
    for (std::uint32_t c = 0; c < meta_.size(); ++c) {
      const bool discrete = meta_[c].kind == TestKind::categorical;
      if (discrete && used_[c]) continue;
      (meta_[c].label ? label_pool : feature_pool).push_back(c);
    }
    const double frac = params_.label_test_fraction;
    while (true) {
      const bool labels_ok = !label_pool.empty() && frac > 0.0;
      const bool features_ok = !feature_pool.empty() && frac < 1.0;
      if (!labels_ok && !features_ok) {
        make_leaf(id, rows);
        return;
      }
      bool pick_label = rng_.uniform() < frac;
      if (pick_label && !labels_ok) pick_label = false;
      if (!pick_label && !features_ok) pick_label = true;
      auto& pool = pick_label ? label_pool : feature_pool;
      const std::size_t slot = rng_.index(pool.size());
      const std::uint32_t column = pool[slot];
      const ColumnMeta& m = meta_[column];

      double threshold = 0.0;
      bool ok = false;
      if (m.kind == TestKind::numeric) {
        if (auto t = try_numeric(column, rows)) {
          threshold = *t;
          ok = true;
        }
      } else {
        ok = separates_discrete(column, rows);
      }
      if (!ok) {
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(slot));
        continue;
      }
      split(id, rows, depth, column, threshold);
      return;
    }
  }

  void split(std::uint32_t id, const std::vector<std::uint32_t>& rows, std::size_t depth, std::uint32_t column,
             double threshold) {
    const ColumnMeta& m = meta_[column];
    const std::uint32_t arity = m.kind == TestKind::numeric ? 2 : m.arity;
    const auto first = static_cast<std::uint32_t>(tree_.nodes.size());
    {
      Node& n = tree_.nodes[id];
      n.kind = m.kind;
      n.label_test = m.label;
      n.column = column;
      n.threshold = threshold;
      n.first_child = first;
      n.child_count = arity;
    }
    tree_.nodes.resize(tree_.nodes.size() + arity);
    std::vector<std::vector<std::uint32_t>> parts(arity);
    for (auto r : rows) {
      const double v = cell(r, column);
      if (is_missing(v)) {
        for (auto& p : parts) p.push_back(r);  // missing values follow every branch
      } else if (m.kind == TestKind::numeric) {
        parts[v < threshold ? 0 : 1].push_back(r);
      } else {
        parts[static_cast<std::size_t>(v)].push_back(r);
      }
    }
    const bool discrete = m.kind == TestKind::categorical;
    if (discrete) used_[column] = 1;
    for (std::uint32_t c = 0; c < arity; ++c) grow(first + c, parts[c], depth + 1);
    if (discrete) used_[column] = 0;
  }

  const Matrix<double>& x_;
  const Matrix<std::uint8_t>& y_;
  const std::vector<ColumnMeta>& meta_;
  std::size_t label_offset_;
  const Params& params_;
  Rng rng_;
  std::vector<std::uint8_t> used_;
  Tree tree_;
};

inline std::size_t child_for(const Node& n, double v) {
  if (n.kind == TestKind::numeric && !n.label_test) return v < n.threshold ? 0 : 1;
  if (n.label_test) return v >= 0.5 ? 1 : 0;
  return static_cast<std::size_t>(v);
}

/// True when the node sends the value down every branch.
inline bool branches_all(const Node& n, double v) {
  if (is_missing(v)) return true;
  if (n.label_test) return !n.active;
  if (n.kind == TestKind::categorical) return v < 0 || v >= double(n.child_count);
  return false;
}

}  // namespace detail

/// Sets each label test's active flag independently with probability sigma.
inline Ensemble set_activation(Ensemble ensemble, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0 && sigma <= 1.0)) throw std::invalid_argument("activation must be in [0,1]");
  Rng rng(seed);
  for (auto& tree : ensemble.trees) {
    for (auto& n : tree.nodes) {
      if (n.kind != TestKind::leaf && n.label_test) n.active = rng.uniform() < sigma;
    }
  }
  ensemble.params.activation = sigma;
  return ensemble;
}

inline constexpr std::uint64_t kActivationStream = 0xAC71;

/// Builds the ensemble on an augmented dataset. Label-feature columns are
/// filled with the true labels during construction.
inline Ensemble build_ensemble(const MultiLabelDataset& d, const Params& params) {
  params.validate();
  if (!d.augmented()) throw std::invalid_argument("random decision trees need an augmented dataset");
  const std::size_t width = d.num_features();
  std::vector<detail::ColumnMeta> meta(width);
  for (std::size_t c = 0; c < width; ++c) {
    const auto& a = d.attribute(c);
    if (a.kind == AttributeKind::label_feature) {
      meta[c] = {TestKind::categorical, true, 2};
    } else if (a.kind == AttributeKind::categorical) {
      meta[c] = {TestKind::categorical, false, static_cast<std::uint32_t>(a.categories.size())};
      if (a.categories.size() < 2) meta[c].arity = 2;  // never separates; kept for indexing
    } else {
      meta[c] = {TestKind::numeric, false, 2};
    }
  }
  Ensemble e;
  e.params = params;
  e.label_count = d.num_labels();
  e.label_offset = d.base_feature_count();
  e.width = width;
  e.trees.resize(params.tree_count);
  parallel_for(params.tree_count, [&](std::size_t t) {
    detail::TreeBuilder builder(d.features(), d.labels(), meta, e.label_offset, params, derive_seed(params.seed, t));
    e.trees[t] = builder.build();
  });
  e.prior.assign(e.label_count, 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = 0; j < e.label_count; ++j) e.prior[j] += d.labels()(i, j);
  }
  for (auto& p : e.prior) p /= static_cast<double>(d.size());
  return set_activation(std::move(e), params.activation, derive_seed(params.seed, kActivationStream));
}

/// Leaves reached by the instance, ascending. Missing features, unknown label
/// features and inactive label tests send the instance down every branch.
inline std::vector<std::uint32_t> route(std::span<const double> x, const Tree& tree) {
  if (x.size() != tree.width) {
    throw std::out_of_range("instance width " + std::to_string(x.size()) + " does not match tree width " +
                            std::to_string(tree.width));
  }
  std::vector<std::uint32_t> leaves;
  std::vector<std::uint32_t> stack{0};
  while (!stack.empty()) {
    const Node& n = tree.nodes[stack.back()];
    stack.pop_back();
    if (n.kind == TestKind::leaf) {
      leaves.push_back(n.leaf);
      continue;
    }
    const double v = x[n.column];
    if (detail::branches_all(n, v)) {
      for (std::uint32_t c = 0; c < n.child_count; ++c) stack.push_back(n.first_child + c);
    } else {
      stack.push_back(n.first_child + static_cast<std::uint32_t>(detail::child_for(n, v)));
    }
  }
  std::sort(leaves.begin(), leaves.end());
  return leaves;
}

/// Per-label positive rate over the reached leaves. Throws std::domain_error
/// when every reached leaf is empty (possible below categorical tests).
inline std::vector<double> posterior(std::span<const double> x, const Tree& tree) {
  const auto leaves = route(x, tree);
  std::uint64_t total = 0;
  std::vector<double> p(tree.label_count, 0.0);
  for (auto l : leaves) {
    total += tree.leaf_instances[l];
    const auto pos = tree.positives(l);
    for (std::size_t j = 0; j < p.size(); ++j) p[j] += pos[j];
  }
  if (total == 0) throw std::domain_error("instance reaches only empty leaves");
  for (auto& v : p) v /= static_cast<double>(total);
  return p;
}

/// Inverted Gini impurity of a posterior: 1 at pure marginals, 0 when all are 0.5.
inline double gini_weight(std::span<const double> posterior) {
  if (posterior.empty()) return 0.0;
  double impurity = 0.0;
  for (double p : posterior) impurity += p * (1.0 - p);
  return std::clamp(1.0 - 4.0 / static_cast<double>(posterior.size()) * impurity, 0.0, 1.0);
}

inline double gini_weight(std::span<const double> x, const Tree& tree) { return gini_weight(posterior(x, tree)); }

struct Estimate {
  std::vector<double> marginals;  // weighted per-label probability
  double cardinality = 0.0;       // weighted expected number of relevant labels
};

/// Reachable leaves of one instance, with the label values each leaf depends on.
/// Feature tests are resolved once; label tests become per-leaf conditions so
/// chain iterations only re-check the conditions.
class CompiledInstance {
 public:
  struct Condition {
    std::uint32_t label;
    std::uint8_t value;
  };
  struct Reach {
    std::uint32_t leaf;
    std::uint32_t cond_begin;
    std::uint32_t cond_end;
  };

  CompiledInstance(std::span<const double> x, const Ensemble& e) : label_offset_(e.label_offset) {
    if (x.size() != e.width) {
      throw std::out_of_range("instance width " + std::to_string(x.size()) + " does not match ensemble width " +
                              std::to_string(e.width));
    }
    tree_begin_.reserve(e.trees.size() + 1);
    std::vector<Condition> path;
    for (const auto& tree : e.trees) {
      tree_begin_.push_back(static_cast<std::uint32_t>(reach_.size()));
      walk(tree, 0, x, path);
    }
    tree_begin_.push_back(static_cast<std::uint32_t>(reach_.size()));
  }

  [[nodiscard]] std::size_t tree_count() const noexcept { return tree_begin_.size() - 1; }

  [[nodiscard]] bool consistent(const Reach& r, std::span<const double> labels) const noexcept {
    for (auto c = r.cond_begin; c < r.cond_end; ++c) {
      const double v = labels[conditions_[c].label];
      if (!is_missing(v) && (v >= 0.5 ? 1 : 0) != conditions_[c].value) return false;
    }
    return true;
  }

  /// Leaves of tree t reached under the given label-feature values (NaN = unknown), ascending.
  [[nodiscard]] std::vector<std::uint32_t> leaves(std::size_t t, std::span<const double> labels) const {
    std::vector<std::uint32_t> out;
    for (auto k = tree_begin_[t]; k < tree_begin_[t + 1]; ++k) {
      if (consistent(reach_[k], labels)) out.push_back(reach_[k].leaf);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Ensemble estimate under the given label-feature values.
  [[nodiscard]] Estimate estimate(const Ensemble& e, std::span<const double> labels) const {
    const std::size_t n = e.label_count;
    std::vector<double> sum_pos(n);
    std::vector<double> tree_p(n);
    Estimate weighted{std::vector<double>(n, 0.0), 0.0};
    Estimate plain{std::vector<double>(n, 0.0), 0.0};
    double weight_total = 0.0;
    std::size_t voters = 0;
    for (std::size_t t = 0; t < tree_count(); ++t) {
      const Tree& tree = e.trees[t];
      std::fill(sum_pos.begin(), sum_pos.end(), 0.0);
      std::uint64_t total = 0;
      for (auto k = tree_begin_[t]; k < tree_begin_[t + 1]; ++k) {
        const Reach& r = reach_[k];
        if (!consistent(r, labels)) continue;
        total += tree.leaf_instances[r.leaf];
        const auto pos = tree.positives(r.leaf);
        for (std::size_t j = 0; j < n; ++j) sum_pos[j] += pos[j];
      }
      if (total == 0) continue;  // only empty leaves reached: the tree abstains
      const double inv = 1.0 / static_cast<double>(total);
      double r_tree = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        tree_p[j] = sum_pos[j] * inv;
        r_tree += sum_pos[j];
      }
      r_tree *= inv;
      const double w = gini_weight(tree_p);
      for (std::size_t j = 0; j < n; ++j) {
        weighted.marginals[j] += w * tree_p[j];
        plain.marginals[j] += tree_p[j];
      }
      weighted.cardinality += w * r_tree;
      plain.cardinality += r_tree;
      weight_total += w;
      ++voters;
    }
    if (voters == 0) {
      Estimate prior{e.prior, 0.0};
      for (double p : e.prior) prior.cardinality += p;
      return prior;
    }
    Estimate& out = weight_total > 0.0 ? weighted : plain;
    const double denom = weight_total > 0.0 ? weight_total : static_cast<double>(voters);
    for (auto& v : out.marginals) v /= denom;
    out.cardinality /= denom;
    return out;
  }

 private:
  void walk(const Tree& tree, std::uint32_t id, std::span<const double> x, std::vector<Condition>& path) {
    const Node& n = tree.nodes[id];
    if (n.kind == TestKind::leaf) {
      const auto begin = static_cast<std::uint32_t>(conditions_.size());
      conditions_.insert(conditions_.end(), path.begin(), path.end());
      reach_.push_back({n.leaf, begin, static_cast<std::uint32_t>(conditions_.size())});
      return;
    }
    if (n.label_test) {
      if (!n.active) {
        for (std::uint32_t c = 0; c < n.child_count; ++c) walk(tree, n.first_child + c, x, path);
        return;
      }
      const auto label = static_cast<std::uint32_t>(n.column - label_offset_);
      for (std::uint32_t c = 0; c < n.child_count; ++c) {
        path.push_back({label, static_cast<std::uint8_t>(c)});
        walk(tree, n.first_child + c, x, path);
        path.pop_back();
      }
      return;
    }
    const double v = x[n.column];
    if (detail::branches_all(n, v)) {
      for (std::uint32_t c = 0; c < n.child_count; ++c) walk(tree, n.first_child + c, x, path);
    } else {
      walk(tree, n.first_child + static_cast<std::uint32_t>(detail::child_for(n, v)), x, path);
    }
  }

  std::size_t label_offset_;
  std::vector<std::uint32_t> tree_begin_;
  std::vector<Reach> reach_;
  std::vector<Condition> conditions_;
};

namespace detail {
inline std::span<const double> label_part(std::span<const double> x, const Ensemble& e) {
  return x.subspan(e.label_offset, e.label_count);
}
}  // namespace detail

/// Full ensemble estimate for an augmented instance (its label features are honoured).
inline Estimate estimate(std::span<const double> x, const Ensemble& e) {
  const CompiledInstance compiled(x, e);
  return compiled.estimate(e, detail::label_part(x, e));
}

inline std::vector<double> ensemble_estimate(std::span<const double> x, const Ensemble& e) {
  return estimate(x, e).marginals;
}

inline double cardinality_estimate(std::span<const double> x, const Ensemble& e) {
  return estimate(x, e).cardinality;
}

/// Rounds the cardinality estimate half up.
inline std::size_t round_cardinality(double r) {
  return r <= 0.0 ? 0 : static_cast<std::size_t>(std::floor(r + 0.5));
}

/// Sets the round(R) labels with the highest marginals (ties: lower label index).
inline std::vector<std::uint8_t> cut_ranking(const Estimate& est) {
  const std::size_t n = est.marginals.size();
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return est.marginals[a] > est.marginals[b]; });
  const std::size_t r = std::min(round_cardinality(est.cardinality), n);
  std::vector<std::uint8_t> out(n, 0);
  for (std::size_t k = 0; k < r; ++k) out[order[k]] = 1;
  return out;
}

/// Multi-label prediction without chaining (label features unknown).
inline std::vector<std::uint8_t> predict_multilabel(std::span<const double> x, const Ensemble& e) {
  const CompiledInstance compiled(x, e);
  const std::vector<double> unknown(e.label_count, kUnknown);
  return cut_ranking(compiled.estimate(e, unknown));
}

/// One chain iteration, as emitted in traces.
struct ChainStep {
  std::size_t iteration = 0;  // 1-based
  std::uint32_t label = 0;
  std::uint8_t decision = 0;
  double marginal = 0.0;
  double cardinality = 0.0;   // unrounded R at this iteration (dynamic chains)
};

/// Per-instance chain state: p holds NaN for undecided labels and 0/1 otherwise.
struct ChainState {
  std::vector<double> p;
  std::vector<std::uint32_t> order;
  std::size_t positives = 0;

  explicit ChainState(std::size_t labels) : p(labels, kUnknown) {}

  void decide(std::uint32_t label, std::uint8_t value) {
    p[label] = value;
    order.push_back(label);
    positives += value;
  }
  [[nodiscard]] std::vector<std::uint8_t> binarized() const {
    std::vector<std::uint8_t> out(p.size(), 0);
    for (std::size_t j = 0; j < p.size(); ++j) out[j] = !is_missing(p[j]) && p[j] >= 0.5;
    return out;
  }
};

inline void check_permutation(std::span<const std::uint32_t> order, std::size_t n) {
  if (order.size() != n) throw std::invalid_argument("invalid permutation: wrong length");
  std::vector<std::uint8_t> seen(n, 0);
  for (auto j : order) {
    if (j >= n || seen[j]) throw std::invalid_argument("invalid permutation");
    seen[j] = 1;
  }
}

/// Classifier chain along a fixed order, collapsed onto one ensemble.
inline std::vector<std::uint8_t> predict_static_chain(std::span<const double> x, const Ensemble& e,
                                                      std::span<const std::uint32_t> order,
                                                      std::vector<ChainStep>* trace = nullptr) {
  check_permutation(order, e.label_count);
  const CompiledInstance compiled(x, e);
  ChainState state(e.label_count);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto est = compiled.estimate(e, state.p);
    const std::uint32_t j = order[k];
    const std::uint8_t decision = est.marginals[j] >= 0.5 ? 1 : 0;
    state.decide(j, decision);
    if (trace) trace->push_back({k + 1, j, decision, est.marginals[j], est.cardinality});
  }
  return state.binarized();
}

struct DynamicChainResult {
  std::vector<std::uint8_t> labels;
  std::vector<std::uint32_t> order;  // realized prediction order
};

/// Value of the label decided at iteration k (1-based) of n: positive when the
/// estimate says so and fewer than r labels are set, or when every remaining
/// iteration must be positive to reach r.
inline std::uint8_t dynamic_decision(double marginal, std::size_t positives, std::size_t r, std::size_t n,
                                     std::size_t k) {
  const bool room = positives < r;
  const bool forced = r > positives && n - k < r - positives;
  return ((marginal >= 0.5 && room) || forced) ? 1 : 0;
}

/// Dynamic chain: each iteration decides the undecided label the ensemble is most
/// certain about, aiming for exactly round(R) positives.
inline DynamicChainResult predict_dynamic_chain(std::span<const double> x, const Ensemble& e,
                                                std::vector<ChainStep>* trace = nullptr) {
  const std::size_t n = e.label_count;
  const CompiledInstance compiled(x, e);
  ChainState state(n);
  for (std::size_t k = 1; k <= n; ++k) {
    const auto est = compiled.estimate(e, state.p);
    // Equal certainty: lower index first on the positive side, higher index first
    // on the negative side, so the labels left to forced positives are the ones
    // the ranking cut would pick.
    std::uint32_t best = 0;
    double best_certainty = -1.0;
    for (std::uint32_t j = 0; j < n; ++j) {
      if (!is_missing(state.p[j])) continue;
      const double certainty = std::abs(0.5 - est.marginals[j]);
      if (certainty > best_certainty || (certainty == best_certainty && est.marginals[j] < 0.5)) {
        best_certainty = certainty;
        best = j;
      }
    }
    const double f = est.marginals[best];
    const std::uint8_t decision = dynamic_decision(f, state.positives, round_cardinality(est.cardinality), n, k);
    state.decide(best, decision);
    if (trace) trace->push_back({k, best, decision, f, est.cardinality});
  }
  return {state.binarized(), state.order};
}

/// Row-wise helpers over a feature matrix of augmented width.
inline Matrix<std::uint8_t> predict_multilabel(const Matrix<double>& x, const Ensemble& e) {
  Matrix<std::uint8_t> out(x.rows(), e.label_count);
  parallel_for(x.rows(), [&](std::size_t i) {
    const auto y = predict_multilabel(x.row(i), e);
    std::copy(y.begin(), y.end(), out.row(i).begin());
  });
  return out;
}

inline Matrix<std::uint8_t> predict_static_chain(const Matrix<double>& x, const Ensemble& e,
                                                 std::span<const std::uint32_t> order,
                                                 std::vector<std::vector<ChainStep>>* traces = nullptr) {
  Matrix<std::uint8_t> out(x.rows(), e.label_count);
  if (traces) traces->assign(x.rows(), {});
  parallel_for(x.rows(), [&](std::size_t i) {
    const auto y = predict_static_chain(x.row(i), e, order, traces ? &(*traces)[i] : nullptr);
    std::copy(y.begin(), y.end(), out.row(i).begin());
  });
  return out;
}

inline Matrix<std::uint8_t> predict_dynamic_chain(const Matrix<double>& x, const Ensemble& e,
                                                  std::vector<std::vector<ChainStep>>* traces = nullptr) {
  Matrix<std::uint8_t> out(x.rows(), e.label_count);
  if (traces) traces->assign(x.rows(), {});
  parallel_for(x.rows(), [&](std::size_t i) {
    const auto res = predict_dynamic_chain(x.row(i), e, traces ? &(*traces)[i] : nullptr);
    std::copy(res.labels.begin(), res.labels.end(), out.row(i).begin());
  });
  return out;
}

}  // namespace mlchain::rdt
