#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mcdsim/engine.hpp"
#include "mcdsim/tensor.hpp"

namespace mcdsim {

struct EvalSet {
  std::vector<FloatTensor> inputs;
  std::vector<int> targets;  // empty for OOD noise sets
  std::size_t K = 0;
};

struct CalibrationBin {
  double lo = 0.0, hi = 0.0;  // (lo, hi]
  std::size_t count = 0;
  double mean_confidence = 0.0;
  double mean_accuracy = 0.0;
};

struct MetricsReport {
  double accuracy_pct = 0.0;
  double ape_nats = 0.0;
  double ece_pct = 0.0;
  std::size_t n_bins = 10;
  std::vector<CalibrationBin> per_bin;
};

/// Sum in a fixed pairwise order, independent of how work was partitioned.
double pairwise_sum(std::span<const double> values);

/// Index of the largest probability; ties resolve to the lowest index.
std::size_t argmax_lowest(std::span<const double> probs);

std::vector<std::vector<double>> mean_probs_of(std::span<const PredictiveResult> preds);

/// Percentage of examples whose argmax matches the target.
double accuracy(std::span<const std::vector<double>> probs, std::span<const int> targets);

/// Mean over examples of -sum_k p_k ln p_k, in nats (0 ln 0 = 0).
double average_predictive_entropy(std::span<const std::vector<double>> probs);

/// Equal-width right-closed confidence bins over (0, 1]; result in percent.
double expected_calibration_error(std::span<const std::vector<double>> probs,
                                  std::span<const int> targets, std::size_t n_bins = 10,
                                  std::vector<CalibrationBin>* bins = nullptr);

/// Accuracy and ECE on `probs`/`targets`; aPE on `ood_probs` (or on `probs`
/// when no OOD predictions are given).
MetricsReport compute_metrics(std::span<const std::vector<double>> probs, std::span<const int> targets,
                              std::span<const std::vector<double>> ood_probs = {},
                              std::size_t n_bins = 10);

/// n inputs of i.i.d. N(mean[i], std[i]^2) elements, Box-Muller over a
/// counter-based uniform stream keyed by `seed`.
EvalSet gaussian_noise_set(std::size_t n, const Shape& shape, const FloatTensor& mean,
                           const FloatTensor& stddev, std::uint64_t seed);

/// Per-element mean and standard deviation of a set of equally shaped tensors.
std::pair<FloatTensor, FloatTensor> elementwise_mean_std(std::span<const FloatTensor> xs);

}  // namespace mcdsim
