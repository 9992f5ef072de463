#pragma once

// Multi-label gradient boosted trees: one tree per round emits a score vector
// over all labels, trained on second-order cross-entropy statistics with one of
// six split-gain aggregations over the labels.

#include "mlchain/dataset.hpp"
#include "mlchain/matrix.hpp"
#include "mlchain/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mlchain::boost {

enum class SplitGain : std::uint8_t { sum_gain, max_gain, sum_signed, max_signed, sum_abs_g, max_abs_g };

inline constexpr std::array<SplitGain, 6> kAllSplitGains = {SplitGain::sum_gain,   SplitGain::max_gain,
                                                            SplitGain::sum_signed, SplitGain::max_signed,
                                                            SplitGain::sum_abs_g,  SplitGain::max_abs_g};

inline std::string_view to_string(SplitGain k) {
  switch (k) {
    case SplitGain::sum_gain: return "sumGain";
    case SplitGain::max_gain: return "maxGain";
    case SplitGain::sum_signed: return "sumSigned";
    case SplitGain::max_signed: return "maxSigned";
    case SplitGain::sum_abs_g: return "sumAbsG";
    case SplitGain::max_abs_g: return "maxAbsG";
  }
  return "?";
}

inline SplitGain parse_split_gain(std::string_view s) {
  for (auto k : kAllSplitGains) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown split gain: " + std::string(s));
}

struct Params {
  std::size_t rounds = 20;
  std::size_t max_depth = 5;  // 0 grows leaf-only trees
  double learning_rate = 0.3;
  double l2_reg = 1.0;        // epsilon
  double complexity = 0.0;    // gamma
  double min_split_gain = 0.0;
  SplitGain split_gain = SplitGain::max_gain;
  double base_raw_score = 0.0;

  void validate() const {
    if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
    // 0 is accepted so that a model can be pinned at the base score.
    if (!(learning_rate >= 0.0 && learning_rate <= 1.0)) throw std::invalid_argument("learning_rate must be in [0,1]");
    if (!(l2_reg >= 0.0)) throw std::invalid_argument("l2_reg must be >= 0");
    if (!(complexity >= 0.0)) throw std::invalid_argument("complexity must be >= 0");
    if (!std::isfinite(min_split_gain)) throw std::invalid_argument("min_split_gain must be finite");
    if (!std::isfinite(base_raw_score)) throw std::invalid_argument("base_raw_score must be finite");
  }
};

inline constexpr double kRawClamp = 30.0;

inline double sigmoid(double raw) {
  raw = std::clamp(raw, -kRawClamp, kRawClamp);
  return 1.0 / (1.0 + std::exp(-raw));
}

/// Binary cross-entropy of one label as a function of its raw score.
inline double cross_entropy(std::uint8_t y, double raw) {
  // log(1 + e^-s) and log(1 + e^s) in a form that stays accurate for large |s|.
  auto softplus = [](double s) { return s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); };
  return y ? softplus(-raw) : softplus(raw);
}

struct GradPair {
  double g;
  double h;
};

inline GradPair grad_hess(std::uint8_t y, double y_hat) {
  if (!(y_hat > 0.0 && y_hat < 1.0)) throw std::domain_error("probability outside (0,1)");
  return {y_hat - static_cast<double>(y), y_hat * (1.0 - y_hat)};
}

struct GradHess {
  Matrix<double> g;
  Matrix<double> h;
  Matrix<std::uint8_t> mask;  // 1 = excluded from split scoring
};

/// Gradients for every cell from probabilities. mask may be null (nothing masked).
inline GradHess grad_hess(const Matrix<std::uint8_t>& y, const Matrix<double>& y_hat,
                          const Matrix<std::uint8_t>* mask = nullptr) {
  if (y.rows() != y_hat.rows() || y.cols() != y_hat.cols()) throw std::invalid_argument("gradient shape mismatch");
  if (mask && (mask->rows() != y.rows() || mask->cols() != y.cols())) throw std::invalid_argument("mask shape mismatch");
  GradHess gh{Matrix<double>(y.rows(), y.cols()), Matrix<double>(y.rows(), y.cols()),
              mask ? *mask : Matrix<std::uint8_t>(y.rows(), y.cols(), 0)};
  for (std::size_t i = 0; i < y.rows(); ++i) {
    for (std::size_t j = 0; j < y.cols(); ++j) {
      const auto [g, h] = grad_hess(y(i, j), y_hat(i, j));
      gh.g(i, j) = g;
      gh.h(i, j) = h;
    }
  }
  return gh;
}

/// Node score under the chosen aggregation. Labels with H+eps == 0 contribute nothing.
inline double node_score(SplitGain kind, std::span<const double> g, std::span<const double> h, double eps) {
  const std::size_t n = g.size();
  const bool is_max = kind == SplitGain::max_gain || kind == SplitGain::max_signed || kind == SplitGain::max_abs_g;
  double acc = is_max ? -std::numeric_limits<double>::infinity() : 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double d = h[j] + eps;
    double term = 0.0;
    if (d > 0.0) {
      switch (kind) {
        case SplitGain::sum_gain:
        case SplitGain::max_gain: term = g[j] * g[j] / d; break;
        case SplitGain::sum_signed:
        case SplitGain::max_signed: term = -g[j] / d; break;
        case SplitGain::sum_abs_g:
        case SplitGain::max_abs_g: term = std::abs(g[j] / d); break;
      }
    }
    acc = is_max ? std::max(acc, term) : acc + term;
  }
  return n == 0 ? 0.0 : acc;
}

inline double split_gain(SplitGain kind, std::span<const double> g_left, std::span<const double> h_left,
                         std::span<const double> g_right, std::span<const double> h_right, double eps,
                         double gamma) {
  const std::size_t n = g_left.size();
  std::vector<double> g(n), h(n);
  for (std::size_t j = 0; j < n; ++j) {
    g[j] = g_left[j] + g_right[j];
    h[j] = h_left[j] + h_right[j];
  }
  return 0.5 * (node_score(kind, g_left, h_left, eps) + node_score(kind, g_right, h_right, eps) -
                node_score(kind, g, h, eps)) -
         gamma;
}

struct BoostNode {
  bool leaf = true;
  std::uint32_t column = 0;
  double threshold = 0.0;  // value < threshold goes left
  bool missing_left = false;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  std::uint32_t leaf_index = 0;
  double gain = 0.0;
};

struct BoostTree {
  std::vector<BoostNode> nodes;  // nodes[0] is the root
  std::vector<double> weights;   // leaf-major, label_count per leaf
  std::size_t label_count = 0;

  [[nodiscard]] std::size_t leaf_count() const noexcept { return label_count ? weights.size() / label_count : 0; }
  [[nodiscard]] std::span<const double> leaf_weights(std::size_t leaf) const noexcept {
    return {weights.data() + leaf * label_count, label_count};
  }
  [[nodiscard]] std::uint32_t leaf_for(std::span<const double> x) const {
    std::uint32_t id = 0;
    while (!nodes[id].leaf) {
      const BoostNode& n = nodes[id];
      const double v = x[n.column];
      const bool left = is_missing(v) ? n.missing_left : v < n.threshold;
      id = left ? n.left : n.right;
    }
    return nodes[id].leaf_index;
  }
  [[nodiscard]] std::size_t depth() const {
    std::size_t best = 0;
    std::vector<std::pair<std::uint32_t, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
      auto [id, d] = stack.back();
      stack.pop_back();
      if (nodes[id].leaf) {
        best = std::max(best, d);
      } else {
        stack.emplace_back(nodes[id].left, d + 1);
        stack.emplace_back(nodes[id].right, d + 1);
      }
    }
    return best;
  }
};

struct SplitCandidate {
  bool found = false;
  std::uint32_t column = 0;
  double threshold = 0.0;
  bool missing_left = false;
  double gain = -std::numeric_limits<double>::infinity();
};

namespace detail {

/// Strictly better beyond a relative tolerance. Near-ties keep the earlier
/// candidate, which is what makes the (column, threshold) tie-break hold
/// under different summation orders.
inline bool better(double gain, double best) {
  if (best == -std::numeric_limits<double>::infinity()) return true;
  return gain > best + 1e-10 * (1.0 + std::abs(best));
}

inline void offer(SplitCandidate& best, std::uint32_t column, double threshold, bool missing_left, double gain) {
  if (better(gain, best.gain)) best = {true, column, threshold, missing_left, gain};
}

inline double candidate_threshold(double last, double cur) {
  const double mid = last + (cur - last) * 0.5;
  return mid > last ? mid : cur;
}

}  // namespace detail

/// Exhaustive split search over the given rows, used as a reference for the
/// scanning tree grower. Sums are recomputed from scratch for every candidate.
inline SplitCandidate brute_force_split(const Matrix<double>& x, const GradHess& gh,
                                        std::span<const std::uint32_t> rows, SplitGain kind, double eps,
                                        double gamma) {
  const std::size_t n = gh.g.cols();
  SplitCandidate best;
  std::vector<double> gl(n), hl(n), gr(n), hr(n);
  for (std::uint32_t c = 0; c < x.cols(); ++c) {
    std::vector<double> values;
    bool any_missing = false;
    for (auto r : rows) {
      const double v = x(r, c);
      if (is_missing(v)) {
        any_missing = true;
      } else {
        values.push_back(v);
      }
    }
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    SplitCandidate col_best;
    for (std::size_t k = 1; k < values.size(); ++k) {
      const double t = detail::candidate_threshold(values[k - 1], values[k]);
      for (int dir = 0; dir < (any_missing ? 2 : 1); ++dir) {
        const bool missing_left = dir == 1;
        std::fill(gl.begin(), gl.end(), 0.0);
        std::fill(hl.begin(), hl.end(), 0.0);
        std::fill(gr.begin(), gr.end(), 0.0);
        std::fill(hr.begin(), hr.end(), 0.0);
        for (auto r : rows) {
          const double v = x(r, c);
          const bool left = is_missing(v) ? missing_left : v < t;
          auto& g = left ? gl : gr;
          auto& h = left ? hl : hr;
          for (std::size_t j = 0; j < n; ++j) {
            if (gh.mask(r, j)) continue;
            g[j] += gh.g(r, j);
            h[j] += gh.h(r, j);
          }
        }
        detail::offer(col_best, c, t, missing_left, split_gain(kind, gl, hl, gr, hr, eps, gamma));
      }
    }
    if (col_best.found && detail::better(col_best.gain, best.gain)) best = col_best;
  }
  return best;
}

/// Per-column row order, computed once per training run.
struct Presorted {
  std::vector<std::vector<std::uint32_t>> sorted;   // known rows by ascending value
  std::vector<std::vector<std::uint32_t>> missing;  // rows with a missing value

  explicit Presorted(const Matrix<double>& x) : sorted(x.cols()), missing(x.cols()) {
    parallel_for(x.cols(), [&](std::size_t c) {
      auto& s = sorted[c];
      for (std::uint32_t r = 0; r < x.rows(); ++r) {
        (is_missing(x(r, c)) ? missing[c] : s).push_back(r);
      }
      std::stable_sort(s.begin(), s.end(), [&](std::uint32_t a, std::uint32_t b) { return x(a, c) < x(b, c); });
    });
  }
};

namespace detail {

struct GrowResult {
  BoostTree tree;
  std::vector<std::uint32_t> row_leaf;  // leaf reached by every training row
};

/// Level-wise exact greedy growth. Split scoring uses masked sums; leaf weights
/// use all rows.
inline GrowResult grow(const Matrix<double>& x, const GradHess& gh, const Params& p, const Presorted& pre) {
  const std::size_t m = x.rows();
  const std::size_t n = gh.g.cols();
  const double eps = p.l2_reg;

  // Masked gradients for scoring.
  Matrix<double> gs(m, n), hs(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const bool keep = !gh.mask(i, j);
      gs(i, j) = keep ? gh.g(i, j) : 0.0;
      hs(i, j) = keep ? gh.h(i, j) : 0.0;
    }
  }

  GrowResult out;
  BoostTree& tree = out.tree;
  tree.label_count = n;
  tree.nodes.emplace_back();
  std::vector<std::int32_t> slot_of(m, 0);  // active-node slot per row, -1 once settled
  std::vector<std::uint32_t> active{0};      // node ids of the current level
  std::vector<std::uint32_t> node_of(m, 0);

  for (std::size_t depth = 0; !active.empty(); ++depth) {
    const std::size_t a = active.size();
    std::vector<double> gt(a * n, 0.0), ht(a * n, 0.0);
    std::vector<std::uint32_t> count(a, 0);
    for (std::size_t i = 0; i < m; ++i) {
      if (slot_of[i] < 0) continue;
      const std::size_t s = static_cast<std::size_t>(slot_of[i]);
      ++count[s];
      for (std::size_t j = 0; j < n; ++j) {
        gt[s * n + j] += gs(i, j);
        ht[s * n + j] += hs(i, j);
      }
    }
    std::vector<double> parent_score(a);
    for (std::size_t s = 0; s < a; ++s) {
      parent_score[s] = node_score(p.split_gain, {gt.data() + s * n, n}, {ht.data() + s * n, n}, eps);
    }

    std::vector<std::vector<SplitCandidate>> per_column(x.cols());
    if (depth < p.max_depth) {
      parallel_for(x.cols(), [&](std::size_t c) {
        std::vector<SplitCandidate> best(a);
        std::vector<double> gl(a * n, 0.0), hl(a * n, 0.0), gm(a * n, 0.0), hm(a * n, 0.0);
        std::vector<std::uint32_t> missing_count(a, 0), seen(a, 0);
        std::vector<double> last(a, 0.0);
        std::vector<double> gu(n), hu(n), gv(n), hv(n);
        for (auto r : pre.missing[c]) {
          if (slot_of[r] < 0) continue;
          const std::size_t s = static_cast<std::size_t>(slot_of[r]);
          ++missing_count[s];
          for (std::size_t j = 0; j < n; ++j) {
            gm[s * n + j] += gs(r, j);
            hm[s * n + j] += hs(r, j);
          }
        }
        auto score = [&](const std::vector<double>& g, const std::vector<double>& h) {
          return node_score(p.split_gain, g, h, eps);
        };
        for (auto r : pre.sorted[c]) {
          if (slot_of[r] < 0) continue;
          const std::size_t s = static_cast<std::size_t>(slot_of[r]);
          const double v = x(r, c);
          if (seen[s] > 0 && v > last[s]) {
            const double t = candidate_threshold(last[s], v);
            const double* g_left = gl.data() + s * n;
            const double* h_left = hl.data() + s * n;
            const double* g_tot = gt.data() + s * n;
            const double* h_tot = ht.data() + s * n;
            // Missing rows to the right.
            for (std::size_t j = 0; j < n; ++j) {
              gu[j] = g_left[j];
              hu[j] = h_left[j];
              gv[j] = g_tot[j] - g_left[j];
              hv[j] = h_tot[j] - h_left[j];
            }
            offer(best[s], static_cast<std::uint32_t>(c), t, false,
                  0.5 * (score(gu, hu) + score(gv, hv) - parent_score[s]) - p.complexity);
            if (missing_count[s] > 0) {
              for (std::size_t j = 0; j < n; ++j) {
                gu[j] = g_left[j] + gm[s * n + j];
                hu[j] = h_left[j] + hm[s * n + j];
                gv[j] = g_tot[j] - gu[j];
                hv[j] = h_tot[j] - hu[j];
              }
              offer(best[s], static_cast<std::uint32_t>(c), t, true,
                    0.5 * (score(gu, hu) + score(gv, hv) - parent_score[s]) - p.complexity);
            }
          }
          ++seen[s];
          last[s] = v;
          for (std::size_t j = 0; j < n; ++j) {
            gl[s * n + j] += gs(r, j);
            hl[s * n + j] += hs(r, j);
          }
        }
        per_column[c] = std::move(best);
      });
    }

    std::vector<std::uint32_t> next_active;
    std::vector<std::int32_t> left_slot(a, -1);
    std::vector<SplitCandidate> chosen(a);
    for (std::size_t s = 0; s < a; ++s) {
      if (depth < p.max_depth) {
        for (std::size_t c = 0; c < x.cols(); ++c) {
          const auto& cand = per_column[c][s];
          if (cand.found && better(cand.gain, chosen[s].gain)) chosen[s] = cand;
        }
      }
      const std::uint32_t id = active[s];
      if (chosen[s].found && chosen[s].gain > p.min_split_gain) {
        const auto l = static_cast<std::uint32_t>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        BoostNode& node = tree.nodes[id];
        node.leaf = false;
        node.column = chosen[s].column;
        node.threshold = chosen[s].threshold;
        node.missing_left = chosen[s].missing_left;
        node.left = l;
        node.right = l + 1;
        node.gain = chosen[s].gain;
        left_slot[s] = static_cast<std::int32_t>(next_active.size());
        next_active.push_back(l);
        next_active.push_back(l + 1);
      } else {
        tree.nodes[id].leaf = true;
        tree.nodes[id].leaf_index = static_cast<std::uint32_t>(tree.weights.size() / std::max<std::size_t>(n, 1));
        tree.weights.resize(tree.weights.size() + n, 0.0);
      }
    }

    // Leaf weights from unmasked sums over the rows settled at this level.
    std::vector<double> g_full, h_full;
    std::vector<std::int32_t> leaf_slot(a, -1);
    std::size_t leaves_here = 0;
    for (std::size_t s = 0; s < a; ++s) {
      if (left_slot[s] < 0) leaf_slot[s] = static_cast<std::int32_t>(leaves_here++);
    }
    g_full.assign(leaves_here * n, 0.0);
    h_full.assign(leaves_here * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      if (slot_of[i] < 0) continue;
      const std::size_t s = static_cast<std::size_t>(slot_of[i]);
      if (left_slot[s] >= 0) {
        const BoostNode& node = tree.nodes[active[s]];
        const double v = x(i, node.column);
        const bool left = is_missing(v) ? node.missing_left : v < node.threshold;
        slot_of[i] = left_slot[s] + (left ? 0 : 1);
        node_of[i] = left ? node.left : node.right;
      } else {
        const std::size_t k = static_cast<std::size_t>(leaf_slot[s]);
        for (std::size_t j = 0; j < n; ++j) {
          g_full[k * n + j] += gh.g(i, j);
          h_full[k * n + j] += gh.h(i, j);
        }
        slot_of[i] = -1;
      }
    }
    for (std::size_t s = 0; s < a; ++s) {
      if (leaf_slot[s] < 0) continue;
      const std::size_t k = static_cast<std::size_t>(leaf_slot[s]);
      const std::size_t leaf = tree.nodes[active[s]].leaf_index;
      for (std::size_t j = 0; j < n; ++j) {
        const double d = h_full[k * n + j] + eps;
        tree.weights[leaf * n + j] = d > 0.0 ? -g_full[k * n + j] / d : 0.0;
      }
    }
    active = std::move(next_active);
  }

  out.row_leaf.resize(m);
  for (std::size_t i = 0; i < m; ++i) out.row_leaf[i] = tree.nodes[node_of[i]].leaf_index;
  return out;
}

}  // namespace detail

inline BoostTree grow_tree(const Matrix<double>& x, const GradHess& gh, const Params& params) {
  params.validate();
  if (gh.g.rows() != x.rows()) throw std::invalid_argument("gradient rows do not match the dataset");
  const Presorted pre(x);
  return detail::grow(x, gh, params, pre).tree;
}

struct Model {
  Params params;
  std::size_t label_count = 0;
  std::size_t width = 0;
  std::vector<BoostTree> trees;
};

/// Raw per-label scores: base + learning_rate * sum of tree outputs.
inline std::vector<double> predict_raw(const Model& model, std::span<const double> x) {
  if (x.size() != model.width) {
    throw std::invalid_argument("instance width " + std::to_string(x.size()) + " does not match model width " +
                                std::to_string(model.width));
  }
  std::vector<double> raw(model.label_count, model.params.base_raw_score);
  for (const auto& t : model.trees) {
    const auto w = t.leaf_weights(t.leaf_for(x));
    for (std::size_t j = 0; j < raw.size(); ++j) raw[j] += model.params.learning_rate * w[j];
  }
  return raw;
}

inline std::vector<double> predict_proba(const Model& model, std::span<const double> x) {
  auto raw = predict_raw(model, x);
  for (auto& v : raw) v = sigmoid(v);
  return raw;
}

inline Matrix<double> predict_proba(const Model& model, const Matrix<double>& x) {
  if (x.cols() != model.width) {
    throw std::invalid_argument("dataset width " + std::to_string(x.cols()) + " does not match model width " +
                                std::to_string(model.width));
  }
  Matrix<double> out(x.rows(), model.label_count);
  parallel_for(x.rows(), [&](std::size_t i) {
    const auto p = predict_proba(model, x.row(i));
    std::copy(p.begin(), p.end(), out.row(i).begin());
  });
  return out;
}

inline double mean_cross_entropy(const Matrix<std::uint8_t>& y, const Matrix<double>& raw) {
  double total = 0.0;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    for (std::size_t j = 0; j < y.cols(); ++j) total += cross_entropy(y(i, j), raw(i, j));
  }
  const double cells = static_cast<double>(y.rows() * y.cols());
  return cells > 0 ? total / cells : 0.0;
}

/// Additive training. mask (optional) excludes cells from split scoring in every
/// round. loss_log, when given, receives the mean training cross-entropy after
/// each round.
inline Model train(const Matrix<double>& x, const Matrix<std::uint8_t>& y, const Params& params,
                   const Matrix<std::uint8_t>* mask = nullptr, std::vector<double>* loss_log = nullptr) {
  params.validate();
  if (x.rows() != y.rows()) throw std::invalid_argument("feature and label row counts differ");
  if (y.cols() == 0) throw std::invalid_argument("no labels to train on");
  Model model;
  model.params = params;
  model.label_count = y.cols();
  model.width = x.cols();
  const Presorted pre(x);
  Matrix<double> raw(y.rows(), y.cols(), params.base_raw_score);
  Matrix<double> prob(y.rows(), y.cols());
  for (std::size_t t = 0; t < params.rounds; ++t) {
    for (std::size_t i = 0; i < raw.rows(); ++i) {
      for (std::size_t j = 0; j < raw.cols(); ++j) prob(i, j) = sigmoid(raw(i, j));
    }
    const GradHess gh = grad_hess(y, prob, mask);
    auto grown = detail::grow(x, gh, params, pre);
    for (std::size_t i = 0; i < raw.rows(); ++i) {
      const auto w = grown.tree.leaf_weights(grown.row_leaf[i]);
      for (std::size_t j = 0; j < raw.cols(); ++j) {
        raw(i, j) += params.learning_rate * w[j];
      }
    }
    model.trees.push_back(std::move(grown.tree));
    if (loss_log) loss_log->push_back(mean_cross_entropy(y, raw));
  }
  return model;
}

inline Model train(const MultiLabelDataset& d, const Params& params, std::vector<double>* loss_log = nullptr) {
  return train(d.features(), d.labels(), params, nullptr, loss_log);
}

}  // namespace mlchain::boost
