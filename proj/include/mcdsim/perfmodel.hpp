#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcdsim/engine.hpp"

namespace mcdsim {

inline constexpr std::size_t kChannelFilterDomain[] = {8, 16, 32, 64, 128};
inline constexpr std::size_t kVectorDomain[] = {1, 4, 8, 16};

/// Parallelism and precision of the modeled accelerator.
struct HwConfig {
  std::size_t PC = 64;  ///< channel parallelism
  std::size_t PF = 64;  ///< filter parallelism
  std::size_t PV = 1;   ///< vector parallelism
  std::size_t DW = 8;   ///< data width, bits
  std::size_t D = 16;   ///< Bernoulli FIFO depth
  double clock_mhz = 225.0;

  void validate() const;
  friend bool operator==(const HwConfig&, const HwConfig&) = default;
};

struct ResourceBudget {
  std::uint64_t dsp_total = 0;
  std::uint64_t mem_total_bits = 0;
};

struct ResourceEstimate {
  std::uint64_t dsp = 0;
  std::uint64_t mem_fifo_bits = 0;
  std::uint64_t mem_in_bits = 0;
  std::uint64_t mem_weight_bits = 0;
  std::uint64_t mem_total_bits = 0;
};

/// DSP = PC*PF*PV/2 (two int8 multipliers per DSP), FIFO = D*PF*DW,
/// input buffer = max_i(C_i*H_i*W_i)*DW, weight buffer = max_i(C_i*K_i^2)*PF*DW
/// over the weight layers; a linear layer counts as C = in_features, H = W = K = 1.
ResourceEstimate resource_estimate(const NetworkSpec& net, const HwConfig& hw);

/// Closed inequality on both DSPs and memory.
bool fits(const ResourceEstimate& est, const ResourceBudget& budget);

/// Compares a formula estimate with a measured/available DSP count and
/// returns a human-readable warning when they disagree.
std::optional<std::string> check_dsp_against_measured(const ResourceEstimate& est,
                                                      std::uint64_t measured_used,
                                                      std::uint64_t available);

/// ceil(F/PF) * ceil(C/PC) * ceil(Ho*Wo/PV) * K^2 for a conv layer; linear
/// layers map to K = 1, Ho = Wo = 1. `in_shape` is the layer's input shape.
std::uint64_t layer_cycles(const LayerSpec& layer, const Shape& in_shape, const HwConfig& hw);

/// Affine correction fitted from measured latencies: ms = factor * model_ms + overhead_ms.
struct LatencyCalibration {
  double factor = 1.0;
  double overhead_ms = 0.0;

  double apply(double model_ms) const { return factor * model_ms + overhead_ms; }
};

/// Least-squares fit over (model_ms, measured_ms) pairs. One pair fits the
/// factor only.
LatencyCalibration fit_latency_calibration(std::span<const double> model_ms,
                                           std::span<const double> measured_ms);

struct LatencyEstimate {
  std::uint64_t cycles_prefix = 0;
  std::uint64_t cycles_suffix = 0;
  std::uint64_t total_cycles = 0;
  double latency_ms = 0.0;
};

/// Splits the weight layers at the L boundary (the same boundary the engine
/// uses). ic: prefix + S*suffix, otherwise S*(prefix + suffix).
LatencyEstimate network_latency(const NetworkSpec& net, const HwConfig& hw, std::size_t L,
                                std::size_t S, bool ic, const LatencyCalibration& cal = {});

}  // namespace mcdsim
