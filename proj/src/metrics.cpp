#include "mcdsim/metrics.hpp"

#include <cmath>
#include <numbers>

#include "mcdsim/error.hpp"
#include "mcdsim/rng.hpp"

namespace mcdsim {

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

std::size_t argmax_lowest(std::span<const double> probs) {
  if (probs.empty()) throw Error("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t k = 1; k < probs.size(); ++k) {
    if (probs[k] > probs[best]) best = k;
  }
  return best;
}

std::vector<std::vector<double>> mean_probs_of(std::span<const PredictiveResult> preds) {
  std::vector<std::vector<double>> out;
  out.reserve(preds.size());
  for (const auto& p : preds) out.push_back(p.mean_probs);
  return out;
}

namespace {

void check_targets(std::span<const std::vector<double>> probs, std::span<const int> targets) {
  if (probs.empty()) throw Error("metrics: empty evaluation set");
  if (probs.size() != targets.size()) throw Error("metrics: predictions and targets differ in length");
  for (std::size_t e = 0; e < probs.size(); ++e) {
    if (targets[e] < 0 || static_cast<std::size_t>(targets[e]) >= probs[e].size()) {
      throw Error("metrics: target " + std::to_string(targets[e]) + " out of range at example " +
                  std::to_string(e));
    }
  }
}

}  // namespace

double accuracy(std::span<const std::vector<double>> probs, std::span<const int> targets) {
  check_targets(probs, targets);
  std::size_t correct = 0;
  for (std::size_t e = 0; e < probs.size(); ++e) {
    if (argmax_lowest(probs[e]) == static_cast<std::size_t>(targets[e])) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(probs.size());
}

double average_predictive_entropy(std::span<const std::vector<double>> probs) {
  if (probs.empty()) throw Error("aPE: empty evaluation set");
  std::vector<double> entropies(probs.size());
  for (std::size_t e = 0; e < probs.size(); ++e) {
    std::vector<double> terms(probs[e].size());
    for (std::size_t k = 0; k < probs[e].size(); ++k) {
      const double p = probs[e][k];
      if (p < 0.0 || !std::isfinite(p)) {
        throw Error("aPE: invalid probability " + std::to_string(p) + " at example " + std::to_string(e));
      }
      terms[k] = p > 0.0 ? -p * std::log(p) : 0.0;
    }
    if (std::abs(pairwise_sum(probs[e]) - 1.0) > 1e-6) {
      throw Error("aPE: probabilities of example " + std::to_string(e) + " do not sum to 1");
    }
    entropies[e] = pairwise_sum(terms);
  }
  return pairwise_sum(entropies) / static_cast<double>(probs.size());
}

double expected_calibration_error(std::span<const std::vector<double>> probs,
                                  std::span<const int> targets, std::size_t n_bins,
                                  std::vector<CalibrationBin>* bins_out) {
  check_targets(probs, targets);
  if (n_bins == 0) throw Error("ECE: bin count must be positive");
  std::vector<std::vector<double>> conf(n_bins), acc(n_bins);
  for (std::size_t e = 0; e < probs.size(); ++e) {
    const std::size_t top = argmax_lowest(probs[e]);
    const double c = probs[e][top];
    const double scaled = std::ceil(c * static_cast<double>(n_bins));
    std::size_t b = scaled < 1.0 ? 0 : static_cast<std::size_t>(scaled) - 1;
    b = std::min(b, n_bins - 1);
    conf[b].push_back(c);
    acc[b].push_back(top == static_cast<std::size_t>(targets[e]) ? 1.0 : 0.0);
  }
  const auto n = static_cast<double>(probs.size());
  std::vector<double> gaps(n_bins, 0.0);
  std::vector<CalibrationBin> bins(n_bins);
  for (std::size_t b = 0; b < n_bins; ++b) {
    bins[b].lo = static_cast<double>(b) / static_cast<double>(n_bins);
    bins[b].hi = static_cast<double>(b + 1) / static_cast<double>(n_bins);
    bins[b].count = conf[b].size();
    if (conf[b].empty()) continue;
    const auto m = static_cast<double>(conf[b].size());
    bins[b].mean_confidence = pairwise_sum(conf[b]) / m;
    bins[b].mean_accuracy = pairwise_sum(acc[b]) / m;
    gaps[b] = (m / n) * std::abs(bins[b].mean_accuracy - bins[b].mean_confidence);
  }
  if (bins_out) *bins_out = std::move(bins);
  return 100.0 * pairwise_sum(gaps);
}

MetricsReport compute_metrics(std::span<const std::vector<double>> probs, std::span<const int> targets,
                              std::span<const std::vector<double>> ood_probs, std::size_t n_bins) {
  MetricsReport r;
  r.n_bins = n_bins;
  r.accuracy_pct = accuracy(probs, targets);
  r.ece_pct = expected_calibration_error(probs, targets, n_bins, &r.per_bin);
  r.ape_nats = average_predictive_entropy(ood_probs.empty() ? probs : ood_probs);
  return r;
}

EvalSet gaussian_noise_set(std::size_t n, const Shape& shape, const FloatTensor& mean,
                           const FloatTensor& stddev, std::uint64_t seed) {
  if (mean.shape != shape || stddev.shape != shape) throw Error("noise set: mean/std shape mismatch");
  for (double s : stddev.data) {
    if (!(s >= 0.0)) throw Error("noise set: standard deviation must be >= 0");
  }
  EvalSet set;
  const std::size_t numel = shape.numel();
  for (std::size_t e = 0; e < n; ++e) {
    FloatTensor x(shape);
    for (std::size_t i = 0; i < numel; ++i) {
      const std::uint64_t g = static_cast<std::uint64_t>(e) * numel + i;
      const std::uint64_t pair = g / 2;
      const double u1 = counter_uniform(seed, 2 * pair);
      const double u2 = counter_uniform(seed, 2 * pair + 1);
      const double r = std::sqrt(-2.0 * std::log(u1));
      const double angle = 2.0 * std::numbers::pi * u2;
      const double z = (g % 2 == 0) ? r * std::cos(angle) : r * std::sin(angle);
      x.data[i] = mean.data[i] + stddev.data[i] * z;
    }
    set.inputs.push_back(std::move(x));
  }
  return set;
}

std::pair<FloatTensor, FloatTensor> elementwise_mean_std(std::span<const FloatTensor> xs) {
  if (xs.empty()) throw Error("mean/std of an empty set");
  const Shape& shape = xs.front().shape;
  FloatTensor mean(shape), stddev(shape);
  const auto n = static_cast<double>(xs.size());
  std::vector<double> column(xs.size());
  for (std::size_t i = 0; i < shape.numel(); ++i) {
    for (std::size_t e = 0; e < xs.size(); ++e) {
      if (xs[e].shape != shape) throw Error("mean/std: tensors differ in shape");
      column[e] = xs[e].data[i];
    }
    const double m = pairwise_sum(column) / n;
    for (auto& v : column) v = (v - m) * (v - m);
    mean.data[i] = m;
    stddev.data[i] = std::sqrt(pairwise_sum(column) / n);
  }
  return {mean, stddev};
}

}  // namespace mcdsim
