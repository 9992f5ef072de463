#pragma once

// Dynamic classifier chains of multi-label boosting rounds. Round k trains one
// boosted model on the features plus the label probabilities propagated so far,
// then every instance decides one more label: the most probable one if any
// undecided label reaches 0.5, otherwise the least probable one.
// Also holds the binary relevance and static chain baselines.

#include "mlchain/dataset.hpp"
#include "mlchain/matrix.hpp"
#include "mlchain/mlboost.hpp"
#include "mlchain/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mlchain::xdcc {

struct ChainParams {
  std::size_t chain_length = 0;  // K; 0 means one round per label
  bool cumulate = true;
  // Let any round's prediction >= 0.5 turn a label on, even one propagated as negative.
  bool cumulate_overrides_propagated = false;
  // Stop prediction once every instance's last s selections were negative (0 = never).
  std::size_t early_stop_negative_rounds = 0;
};

enum class Branch : std::uint8_t { pos, neg, update };

inline std::string_view to_string(Branch b) {
  switch (b) {
    case Branch::pos: return "pos";
    case Branch::neg: return "neg";
    case Branch::update: return "update";
  }
  return "?";
}

struct TraceRow {
  std::size_t round = 0;  // 1-based
  std::size_t instance = 0;
  std::uint32_t label = 0;
  double probability = 0.0;
  Branch branch = Branch::pos;
};

/// p holds NaN for undecided labels and the propagated probability otherwise.
struct PropagationState {
  Matrix<double> p;
  std::vector<std::vector<std::uint32_t>> chosen;
  std::vector<Matrix<double>> round_preds;
  std::size_t blocked_flips = 0;  // updates refused because they would cross 0.5
  std::size_t applied_flips = 0;  // audit: decided values that ended up on the other side

  PropagationState(std::size_t instances, std::size_t labels)
      : p(instances, labels, kUnknown), chosen(instances) {}

  [[nodiscard]] std::size_t decided(std::size_t i) const {
    std::size_t c = 0;
    for (double v : p.row(i)) c += !is_missing(v);
    return c;
  }
};

/// Argmax over undecided labels when the best reaches 0.5, argmin otherwise.
/// Undecided entries of p are NaN. Returns nothing when every label is decided.
inline std::optional<std::uint32_t> select_next_label(std::span<const double> y_hat, std::span<const double> p) {
  if (y_hat.size() != p.size()) throw std::invalid_argument("select_next_label: length mismatch");
  std::optional<std::uint32_t> hi, lo;
  for (std::uint32_t j = 0; j < y_hat.size(); ++j) {
    if (!is_missing(p[j])) continue;
    if (!hi || y_hat[j] > y_hat[*hi]) hi = j;
    if (!lo || y_hat[j] < y_hat[*lo]) lo = j;
  }
  if (!hi) return std::nullopt;
  return y_hat[*hi] >= 0.5 ? hi : lo;
}

namespace detail {
inline bool positive(double v) { return v >= 0.5; }
}  // namespace detail

/// One round for one instance: refreshes decided labels whose prediction moved
/// further from 0.5 on the same side, then decides the next undecided label.
/// Returns the rows to log for this step.
inline std::vector<TraceRow> propagate(PropagationState& s, std::size_t i, std::size_t round,
                                       std::span<const double> y_hat, std::size_t* blocked = nullptr,
                                       std::size_t* applied = nullptr) {
  auto row = s.p.row(i);
  std::vector<TraceRow> log;
  std::size_t local_blocked = 0, local_applied = 0;
  for (std::uint32_t j = 0; j < row.size(); ++j) {
    const double old = row[j];
    if (is_missing(old)) continue;
    const double now = y_hat[j];
    if (detail::positive(now) != detail::positive(old)) {
      ++local_blocked;
      continue;
    }
    if (std::abs(now - 0.5) > std::abs(old - 0.5)) {
      row[j] = now;
      if (detail::positive(row[j]) != detail::positive(old)) ++local_applied;
      log.push_back({round, i, j, now, Branch::update});
    }
  }
  if (auto j = select_next_label(y_hat, row)) {
    row[*j] = y_hat[*j];
    s.chosen[i].push_back(*j);
    log.push_back({round, i, *j, y_hat[*j], detail::positive(y_hat[*j]) ? Branch::pos : Branch::neg});
  }
  if (blocked) *blocked += local_blocked;
  else s.blocked_flips += local_blocked;
  if (applied) *applied += local_applied;
  else s.applied_flips += local_applied;
  return log;
}

struct ChainModel {
  ChainParams params;
  boost::Params boost;
  std::size_t label_count = 0;
  std::size_t base_width = 0;
  std::vector<boost::Model> rounds;
};

namespace detail {

/// Base features with the propagated probabilities in the label-feature columns.
inline void fill_label_features(Matrix<double>& x, std::size_t base_width, const Matrix<double>& p) {
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < p.cols(); ++j) x(i, base_width + j) = p(i, j);
  }
}

inline Matrix<double> widen(const Matrix<double>& base, std::size_t labels) {
  Matrix<double> x(base.rows(), base.cols() + labels, kUnknown);
  for (std::size_t i = 0; i < base.rows(); ++i) {
    const auto src = base.row(i);
    std::copy(src.begin(), src.end(), x.row(i).begin());
  }
  return x;
}

/// Applies one round of predictions to every instance. Rows are merged in
/// instance order so traces do not depend on scheduling.
inline void propagate_all(PropagationState& s, std::size_t round, const Matrix<double>& y_hat,
                          std::vector<TraceRow>* trace) {
  const std::size_t m = y_hat.rows();
  std::vector<std::vector<TraceRow>> rows(m);
  std::vector<std::size_t> blocked(m, 0), applied(m, 0);
  parallel_for(m, [&](std::size_t i) { rows[i] = propagate(s, i, round, y_hat.row(i), &blocked[i], &applied[i]); });
  for (std::size_t i = 0; i < m; ++i) {
    s.blocked_flips += blocked[i];
    s.applied_flips += applied[i];
    if (trace) trace->insert(trace->end(), rows[i].begin(), rows[i].end());
  }
}

}  // namespace detail

struct TrainResult {
  ChainModel model;
  PropagationState state;                     // training-set propagation
  std::vector<std::vector<double>> loss_log;  // per chain round, per boosting round
  std::vector<TraceRow> trace;
};

/// Trains K rounds. Cells already propagated for an instance are masked out of
/// split scoring in later rounds (they still count for leaf weights).
inline TrainResult train_chain(const MultiLabelDataset& d, const ChainParams& chain, const boost::Params& params) {
  params.validate();
  const std::size_t n = d.num_labels();
  const std::size_t k_rounds = chain.chain_length == 0 ? n : chain.chain_length;
  if (k_rounds > n) {
    throw std::invalid_argument("chain length " + std::to_string(k_rounds) + " exceeds label count " +
                                std::to_string(n));
  }
  const std::size_t q = d.base_feature_count();
  Matrix<double> x = detail::widen(base_features(d), n);
  TrainResult out{{chain, params, n, q, {}}, PropagationState(d.size(), n), {}, {}};
  out.model.params.chain_length = k_rounds;
  Matrix<std::uint8_t> mask(d.size(), n, 0);
  for (std::size_t k = 1; k <= k_rounds; ++k) {
    detail::fill_label_features(x, q, out.state.p);
    for (std::size_t i = 0; i < d.size(); ++i) {
      for (std::size_t j = 0; j < n; ++j) mask(i, j) = !is_missing(out.state.p(i, j));
    }
    std::vector<double> losses;
    out.model.rounds.push_back(boost::train(x, d.labels(), params, &mask, &losses));
    out.loss_log.push_back(std::move(losses));
    const Matrix<double> y_hat = boost::predict_proba(out.model.rounds.back(), x);
    detail::propagate_all(out.state, k, y_hat, &out.trace);
  }
  return out;
}

struct ChainPrediction {
  Matrix<std::uint8_t> labels;
  Matrix<double> scores;  // the value each label was thresholded on
  PropagationState state;
  std::vector<TraceRow> trace;
  std::size_t rounds_run = 0;
};

/// Runs the stored rounds on new data. `rounds` truncates the chain (for K sweeps);
/// `cumulate` overrides the model's setting when given.
inline ChainPrediction predict_chain(const ChainModel& model, const Matrix<double>& base,
                                     std::optional<std::size_t> rounds = std::nullopt,
                                     std::optional<bool> cumulate = std::nullopt) {
  if (base.cols() != model.base_width) {
    throw std::invalid_argument("dataset width " + std::to_string(base.cols()) + " does not match model width " +
                                std::to_string(model.base_width));
  }
  const std::size_t k_rounds = std::min(rounds.value_or(model.rounds.size()), model.rounds.size());
  const bool cum = cumulate.value_or(model.params.cumulate);
  const std::size_t m = base.rows();
  const std::size_t n = model.label_count;
  Matrix<double> x = detail::widen(base, n);
  ChainPrediction out{Matrix<std::uint8_t>(m, n, 0), Matrix<double>(m, n, 0.0), PropagationState(m, n), {}, 0};
  std::vector<std::size_t> negative_streak(m, 0);
  const std::size_t stop_after = model.params.early_stop_negative_rounds;
  for (std::size_t k = 1; k <= k_rounds; ++k) {
    detail::fill_label_features(x, model.base_width, out.state.p);
    Matrix<double> y_hat = boost::predict_proba(model.rounds[k - 1], x);
    const std::size_t before = out.trace.size();
    detail::propagate_all(out.state, k, y_hat, &out.trace);
    out.state.round_preds.push_back(std::move(y_hat));
    out.rounds_run = k;
    if (stop_after > 0) {
      for (std::size_t t = before; t < out.trace.size(); ++t) {
        const auto& r = out.trace[t];
        if (r.branch == Branch::neg) ++negative_streak[r.instance];
        if (r.branch == Branch::pos) negative_streak[r.instance] = 0;
      }
      if (std::all_of(negative_streak.begin(), negative_streak.end(),
                      [&](std::size_t s) { return s >= stop_after; })) {
        break;
      }
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double p = out.state.p(i, j);
      double c = is_missing(p) ? 0.0 : p;
      if (cum && (is_missing(p) || model.params.cumulate_overrides_propagated)) {
        double best = is_missing(p) ? 0.0 : p;
        for (const auto& r : out.state.round_preds) best = std::max(best, r(i, j));
        c = best;
      }
      out.scores(i, j) = c;
      out.labels(i, j) = c >= 0.5 ? 1 : 0;
    }
  }
  return out;
}

// Baselines built from the same learner, one single-label model per label.

enum class BaselineKind : std::uint8_t { binary_relevance, classifier_chain };

struct BaselineModel {
  BaselineKind kind = BaselineKind::binary_relevance;
  boost::Params boost;
  std::size_t label_count = 0;
  std::size_t base_width = 0;
  std::vector<std::uint32_t> order;  // chain order; identity for binary relevance
  std::vector<boost::Model> models;  // models[k] predicts label order[k]
};

namespace detail {
inline Matrix<std::uint8_t> label_column(const Matrix<std::uint8_t>& y, std::size_t j) {
  Matrix<std::uint8_t> out(y.rows(), 1);
  for (std::size_t i = 0; i < y.rows(); ++i) out(i, 0) = y(i, j);
  return out;
}

inline void check_order(std::span<const std::uint32_t> order, std::size_t n) {
  if (order.size() != n) throw std::invalid_argument("invalid permutation: wrong length");
  std::vector<std::uint8_t> seen(n, 0);
  for (auto j : order) {
    if (j >= n || seen[j]) throw std::invalid_argument("invalid permutation");
    seen[j] = 1;
  }
}
}  // namespace detail

inline BaselineModel train_br(const MultiLabelDataset& d, const boost::Params& params) {
  params.validate();
  BaselineModel m{BaselineKind::binary_relevance, params, d.num_labels(), d.base_feature_count(), {}, {}};
  const Matrix<double> x = base_features(d);
  for (std::uint32_t j = 0; j < d.num_labels(); ++j) {
    m.order.push_back(j);
    m.models.push_back(boost::train(x, detail::label_column(d.labels(), j), params));
  }
  return m;
}

/// Model k sees the base features plus the true values of order[0..k-1].
inline BaselineModel train_static_cc(const MultiLabelDataset& d, std::span<const std::uint32_t> order,
                                     const boost::Params& params) {
  params.validate();
  detail::check_order(order, d.num_labels());
  BaselineModel m{BaselineKind::classifier_chain, params, d.num_labels(), d.base_feature_count(),
                  {order.begin(), order.end()}, {}};
  const std::size_t q = d.base_feature_count();
  const Matrix<double> base = base_features(d);
  for (std::size_t k = 0; k < order.size(); ++k) {
    Matrix<double> x(d.size(), q + k);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto src = base.row(i);
      std::copy(src.begin(), src.end(), x.row(i).begin());
      for (std::size_t e = 0; e < k; ++e) x(i, q + e) = d.labels()(i, order[e]);
    }
    m.models.push_back(boost::train(x, detail::label_column(d.labels(), order[k]), params));
  }
  return m;
}

/// Binary relevance predicts every label independently; the chain threads its
/// own binary predictions forward.
inline Matrix<std::uint8_t> predict_baseline(const BaselineModel& model, const Matrix<double>& base) {
  if (base.cols() != model.base_width) {
    throw std::invalid_argument("dataset width " + std::to_string(base.cols()) + " does not match model width " +
                                std::to_string(model.base_width));
  }
  const std::size_t q = model.base_width;
  Matrix<std::uint8_t> out(base.rows(), model.label_count, 0);
  parallel_for(base.rows(), [&](std::size_t i) {
    std::vector<double> x(base.row(i).begin(), base.row(i).end());
    if (model.kind == BaselineKind::classifier_chain) x.reserve(q + model.label_count);
    for (std::size_t k = 0; k < model.models.size(); ++k) {
      const auto& mk = model.models[k];
      const double p = boost::predict_proba(mk, std::span<const double>(x.data(), mk.width))[0];
      const std::uint8_t bit = p >= 0.5 ? 1 : 0;
      out(i, model.order[k]) = bit;
      if (model.kind == BaselineKind::classifier_chain) x.push_back(bit);
    }
  });
  return out;
}

}  // namespace mlchain::xdcc
