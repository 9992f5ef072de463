#pragma once

// Synthetic multi-label data with the shapes of common benchmark sets. Used
// when the real files are not available, and for tests.
//
// Every instance draws latent factors z ~ N(0, I). Features are noisy linear
// views of z (some binned into categories). Label j scores w_j.z plus the
// influence of a few earlier labels plus noise, and is relevant when the score
// clears a per-label threshold. Thresholds are set from quantiles, then shifted
// together so the label cardinality matches the target; instances left without
// any label get their best-scoring one.

#include "mlchain/dataset.hpp"
#include "mlchain/error.hpp"
#include "mlchain/matrix.hpp"
#include "mlchain/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace mlchain {

struct SynthSpec {
  std::string name = "synthetic";
  std::size_t train = 200;
  std::size_t test = 100;
  std::size_t features = 10;
  std::size_t labels = 4;
  double cardinality = 1.5;
  std::size_t categorical = 0;  // how many of the features are categorical
  std::size_t categories = 4;   // vocabulary size of each categorical feature
  std::size_t latent = 6;
  double feature_noise = 0.6;
  double label_noise = 0.5;
  double dependency = 1.0;      // strength of label-on-label influence
  bool at_least_one = true;
};

/// Shapes of the standard benchmark splits (train/test sizes, features, labels, cardinality).
inline SynthSpec benchmark_shape(const std::string& name) {
  SynthSpec s;
  s.name = name;
  if (name == "emotions") {
    s.train = 391, s.test = 202, s.features = 72, s.labels = 6, s.cardinality = 1.869, s.latent = 8;
  } else if (name == "scene") {
    s.train = 1211, s.test = 1196, s.features = 294, s.labels = 6, s.cardinality = 1.074, s.latent = 10;
  } else if (name == "yeast") {
    s.train = 1500, s.test = 917, s.features = 103, s.labels = 14, s.cardinality = 4.237, s.latent = 10;
  } else if (name == "flags") {
    s.train = 129, s.test = 65, s.features = 19, s.labels = 7, s.cardinality = 3.392, s.latent = 6;
    s.categorical = 14, s.categories = 5;
  } else {
    throw error("no benchmark shape named '" + name + "'");
  }
  return s;
}

struct SynthSplit {
  MultiLabelDataset train;
  MultiLabelDataset test;
};

namespace detail {

inline std::vector<std::uint8_t> assign_labels(const Matrix<double>& base_score, const Matrix<double>& influence,
                                               const std::vector<double>& threshold, double shift,
                                               bool at_least_one, Matrix<std::uint8_t>& y) {
  const std::size_t m = base_score.rows();
  const std::size_t n = base_score.cols();
  std::vector<std::uint8_t> any(m, 0);
  std::vector<double> s(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 0; j < n; ++j) {
      s[j] = base_score(i, j);
      for (std::size_t k = 0; k < j; ++k) s[j] += influence(j, k) * y(i, k);
      y(i, j) = s[j] > threshold[j] + shift;
      any[i] |= y(i, j);
      if (s[j] - threshold[j] > s[best] - threshold[best]) best = j;
    }
    if (at_least_one && !any[i]) y(i, best) = 1;
  }
  return any;
}

inline double mean_positives(const Matrix<std::uint8_t>& y) {
  std::size_t c = 0;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    for (auto v : y.row(i)) c += v;
  }
  return static_cast<double>(c) / static_cast<double>(y.rows());
}

}  // namespace detail

inline SynthSplit make_synthetic(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.train == 0 || spec.test == 0 || spec.labels == 0 || spec.features == 0 || spec.latent == 0) {
    throw error("synthetic spec needs train and test instances, features, labels and latent factors");
  }
  if (spec.categorical > spec.features) throw error("more categorical features than features");
  if (spec.categories < 2 && spec.categorical > 0) throw error("categorical features need at least 2 categories");
  Rng rng(derive_seed(seed, 0x5e7));
  const std::size_t m = spec.train + spec.test;
  const std::size_t q = spec.features, n = spec.labels, l = spec.latent;

  Matrix<double> z(m, l);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t a = 0; a < l; ++a) z(i, a) = rng.normal();
  }

  // Features: random loadings on a few latent factors each.
  Matrix<double> load(q, l, 0.0);
  for (std::size_t c = 0; c < q; ++c) {
    for (std::size_t a = 0; a < l; ++a) load(c, a) = rng.bernoulli(0.5) ? rng.normal() : 0.0;
  }
  Matrix<double> x(m, q);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t c = 0; c < q; ++c) {
      double v = 0.0;
      for (std::size_t a = 0; a < l; ++a) v += load(c, a) * z(i, a);
      x(i, c) = v + spec.feature_noise * rng.normal();
    }
  }

  // Labels: latent weights plus dependencies on earlier labels. Sparse label
  // sets lean on mutual exclusion, dense ones on co-occurrence.
  Matrix<double> base(m, n);
  Matrix<double> w(n, l);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t a = 0; a < l; ++a) w(j, a) = rng.normal();
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double v = 0.0;
      for (std::size_t a = 0; a < l; ++a) v += w(j, a) * z(i, a);
      base(i, j) = v + spec.label_noise * rng.normal();
    }
  }
  const double density = spec.cardinality / static_cast<double>(n);
  Matrix<double> influence(n, n, 0.0);
  for (std::size_t j = 1; j < n; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      if (!rng.bernoulli(0.4)) continue;
      const double sign = rng.uniform() < density + 0.2 ? 1.0 : -1.0;
      influence(j, k) = sign * spec.dependency * (1.0 + 1.5 * rng.uniform());
    }
  }
  // Per-label frequencies around the target density, as score quantiles.
  std::vector<double> threshold(n);
  std::vector<double> col(m);
  for (std::size_t j = 0; j < n; ++j) {
    const double f = std::clamp(density * (0.5 + rng.uniform()), 0.02, 0.95);
    for (std::size_t i = 0; i < m; ++i) col[i] = base(i, j);
    std::sort(col.begin(), col.end());
    threshold[j] = col[std::min(m - 1, static_cast<std::size_t>((1.0 - f) * static_cast<double>(m)))];
  }
  Matrix<std::uint8_t> y(m, n, 0);
  double lo = -20.0, hi = 20.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    detail::assign_labels(base, influence, threshold, mid, spec.at_least_one, y);
    (detail::mean_positives(y) > spec.cardinality ? lo : hi) = mid;
  }
  detail::assign_labels(base, influence, threshold, hi, spec.at_least_one, y);

  // Bin the first `categorical` features into equal-frequency categories.
  std::vector<Attribute> attrs(q);
  for (std::size_t c = 0; c < q; ++c) {
    attrs[c].name = "f" + std::to_string(c);
    if (c >= spec.categorical) continue;
    attrs[c].kind = AttributeKind::categorical;
    for (std::size_t v = 0; v < spec.categories; ++v) attrs[c].categories.push_back("c" + std::to_string(v));
    for (std::size_t i = 0; i < m; ++i) col[i] = x(i, c);
    std::sort(col.begin(), col.end());
    std::vector<double> cuts;
    for (std::size_t v = 1; v < spec.categories; ++v) cuts.push_back(col[v * m / spec.categories]);
    for (std::size_t i = 0; i < m; ++i) {
      x(i, c) = static_cast<double>(std::upper_bound(cuts.begin(), cuts.end(), x(i, c)) - cuts.begin());
    }
  }
  std::vector<std::string> names;
  for (std::size_t j = 0; j < n; ++j) names.push_back("l" + std::to_string(j));

  auto slice = [&](std::size_t from, std::size_t count) {
    Matrix<double> xs(count, q);
    Matrix<std::uint8_t> ys(count, n);
    for (std::size_t r = 0; r < count; ++r) {
      std::copy(x.row(from + r).begin(), x.row(from + r).end(), xs.row(r).begin());
      std::copy(y.row(from + r).begin(), y.row(from + r).end(), ys.row(r).begin());
    }
    return MultiLabelDataset(attrs, names, std::move(xs), std::move(ys));
  };
  return {slice(0, spec.train), slice(spec.train, spec.test)};
}

}  // namespace mlchain
