#pragma once

#include "mlchain/matrix.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mlchain {

namespace detail {
inline void check_lengths(std::span<const std::uint8_t> y, std::span<const std::uint8_t> y_hat) {
  if (y.size() != y_hat.size()) {
    throw std::invalid_argument("label vector length mismatch: " + std::to_string(y.size()) + " vs " +
                                std::to_string(y_hat.size()));
  }
}
}  // namespace detail

/// Fraction of labels predicted correctly.
inline double hamming_accuracy(std::span<const std::uint8_t> y, std::span<const std::uint8_t> y_hat) {
  detail::check_lengths(y, y_hat);
  if (y.empty()) return 1.0;
  std::size_t hits = 0;
  for (std::size_t j = 0; j < y.size(); ++j) hits += (y[j] != 0) == (y_hat[j] != 0);
  return static_cast<double>(hits) / static_cast<double>(y.size());
}

/// 1 if the whole label vector matches, else 0.
inline double subset_accuracy(std::span<const std::uint8_t> y, std::span<const std::uint8_t> y_hat) {
  detail::check_lengths(y, y_hat);
  for (std::size_t j = 0; j < y.size(); ++j) {
    if ((y[j] != 0) != (y_hat[j] != 0)) return 0.0;
  }
  return 1.0;
}

/// Example-based F1. Two empty label sets count as a perfect match (1.0).
inline double example_f1(std::span<const std::uint8_t> y, std::span<const std::uint8_t> y_hat) {
  detail::check_lengths(y, y_hat);
  std::size_t both = 0, truth = 0, predicted = 0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    const bool a = y[j] != 0;
    const bool b = y_hat[j] != 0;
    both += a && b;
    truth += a;
    predicted += b;
  }
  if (truth + predicted == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(truth + predicted);
}

struct Timing {
  double train_seconds = 0.0;
  double predict_seconds = 0.0;
};

struct EvalReport {
  double hamming_accuracy = 0.0;
  double subset_accuracy = 0.0;
  double example_f1 = 0.0;
  std::vector<double> instance_hamming;
  std::vector<double> instance_subset;
  std::vector<double> instance_f1;
  Timing timing;
  std::string trace_path;  // empty when no chain trace was written
};

inline EvalReport evaluate(const Matrix<std::uint8_t>& y, const Matrix<std::uint8_t>& y_hat) {
  if (y.rows() != y_hat.rows() || y.cols() != y_hat.cols()) {
    throw std::invalid_argument("label matrix shape mismatch: " + std::to_string(y.rows()) + "x" +
                                std::to_string(y.cols()) + " vs " + std::to_string(y_hat.rows()) + "x" +
                                std::to_string(y_hat.cols()));
  }
  EvalReport r;
  const std::size_t m = y.rows();
  r.instance_hamming.resize(m);
  r.instance_subset.resize(m);
  r.instance_f1.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    r.instance_hamming[i] = hamming_accuracy(y.row(i), y_hat.row(i));
    r.instance_subset[i] = subset_accuracy(y.row(i), y_hat.row(i));
    r.instance_f1[i] = example_f1(y.row(i), y_hat.row(i));
  }
  auto mean = [m](const std::vector<double>& v) {
    return m == 0 ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(m);
  };
  r.hamming_accuracy = mean(r.instance_hamming);
  r.subset_accuracy = mean(r.instance_subset);
  r.example_f1 = mean(r.instance_f1);
  return r;
}

inline constexpr int kReportSchemaVersion = 1;

/// Report document. Keys:
///   schema ("mlchain-report"), version, instances, hamming_accuracy, subset_accuracy,
///   example_f1, timing {train_seconds, predict_seconds}, trace (optional path),
///   per_instance {hamming_accuracy, subset_accuracy, example_f1} (optional).
inline nlohmann::ordered_json to_json(const EvalReport& r, bool per_instance = false) {
  nlohmann::ordered_json j;
  j["schema"] = "mlchain-report";
  j["version"] = kReportSchemaVersion;
  j["instances"] = r.instance_f1.size();
  j["hamming_accuracy"] = r.hamming_accuracy;
  j["subset_accuracy"] = r.subset_accuracy;
  j["example_f1"] = r.example_f1;
  j["timing"] = {{"train_seconds", r.timing.train_seconds}, {"predict_seconds", r.timing.predict_seconds}};
  if (!r.trace_path.empty()) j["trace"] = r.trace_path;
  if (per_instance) {
    j["per_instance"] = {{"hamming_accuracy", r.instance_hamming},
                         {"subset_accuracy", r.instance_subset},
                         {"example_f1", r.instance_f1}};
  }
  return j;
}

}  // namespace mlchain
