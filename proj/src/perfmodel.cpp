#include "mcdsim/perfmodel.hpp"

#include <algorithm>
#include <cmath>

#include "mcdsim/error.hpp"

namespace mcdsim {

namespace {

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

template <std::size_t N>
bool in_domain(std::size_t v, const std::size_t (&domain)[N]) {
  return std::find(std::begin(domain), std::end(domain), v) != std::end(domain);
}

// (C, H, W, K) as the resource model sees a weight layer.
struct LayerGeometry {
  std::uint64_t C, H, W, K;
};

LayerGeometry geometry(const LayerSpec& layer, const Shape& in_shape) {
  if (layer.kind() == LayerKind::Conv) {
    return {in_shape[0], in_shape[1], in_shape[2], layer.as<ConvLayer>().kernel};
  }
  return {layer.as<LinearLayer>().in_features, 1, 1, 1};
}

}  // namespace

void HwConfig::validate() const {
  if (!in_domain(PC, kChannelFilterDomain)) throw Error("PC must be one of 8,16,32,64,128");
  if (!in_domain(PF, kChannelFilterDomain)) throw Error("PF must be one of 8,16,32,64,128");
  if (!in_domain(PV, kVectorDomain)) throw Error("PV must be one of 1,4,8,16");
  if (DW != 8) throw Error("DW must be 8");
  if (D < 1) throw Error("FIFO depth D must be >= 1");
  if (!(clock_mhz > 0.0)) throw Error("clock_mhz must be positive");
}

ResourceEstimate resource_estimate(const NetworkSpec& net, const HwConfig& hw) {
  ResourceEstimate est;
  est.dsp = static_cast<std::uint64_t>(hw.PC) * hw.PF * hw.PV / 2;
  est.mem_fifo_bits = static_cast<std::uint64_t>(hw.D) * hw.PF * hw.DW;
  std::uint64_t max_in = 0, max_weight = 0;
  for (std::size_t i : net.weight_layer_indices()) {
    const auto g = geometry(net.layers[i], net.in_shapes[i]);
    max_in = std::max(max_in, g.C * g.H * g.W);
    max_weight = std::max(max_weight, g.C * g.K * g.K);
  }
  est.mem_in_bits = max_in * hw.DW;
  est.mem_weight_bits = max_weight * hw.PF * hw.DW;
  est.mem_total_bits = est.mem_fifo_bits + est.mem_in_bits + est.mem_weight_bits;
  return est;
}

bool fits(const ResourceEstimate& est, const ResourceBudget& budget) {
  return est.dsp <= budget.dsp_total && est.mem_total_bits <= budget.mem_total_bits;
}

std::optional<std::string> check_dsp_against_measured(const ResourceEstimate& est,
                                                      std::uint64_t measured_used,
                                                      std::uint64_t available) {
  if (est.dsp <= available && est.dsp == measured_used) return std::nullopt;
  std::string msg = "DSP formula gives " + std::to_string(est.dsp) + " but " +
                    std::to_string(measured_used) + " were measured";
  if (est.dsp > available) msg += " and only " + std::to_string(available) + " are available";
  return msg;
}

std::uint64_t layer_cycles(const LayerSpec& layer, const Shape& in_shape, const HwConfig& hw) {
  if (layer.kind() == LayerKind::Conv) {
    const auto& c = layer.as<ConvLayer>();
    const std::uint64_t ho = (in_shape[1] + 2 * c.padding - c.kernel) / c.stride + 1;
    const std::uint64_t wo = (in_shape[2] + 2 * c.padding - c.kernel) / c.stride + 1;
    return ceil_div(c.filters, hw.PF) * ceil_div(c.in_channels, hw.PC) * ceil_div(ho * wo, hw.PV) *
           c.kernel * c.kernel;
  }
  if (layer.kind() == LayerKind::Linear) {
    const auto& l = layer.as<LinearLayer>();
    return ceil_div(l.out_features, hw.PF) * ceil_div(l.in_features, hw.PC) * ceil_div(1, hw.PV);
  }
  throw Error(std::string("layer_cycles: unsupported layer kind ") + to_string(layer.kind()));
}

LatencyCalibration fit_latency_calibration(std::span<const double> model_ms,
                                           std::span<const double> measured_ms) {
  if (model_ms.size() != measured_ms.size() || model_ms.empty()) {
    throw Error("latency calibration needs matching, nonempty model/measured lists");
  }
  const std::size_t n = model_ms.size();
  if (n == 1) {
    if (model_ms[0] == 0.0) throw Error("latency calibration: model latency is zero");
    return {measured_ms[0] / model_ms[0], 0.0};
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += model_ms[i];
    my += measured_ms[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (model_ms[i] - mx) * (model_ms[i] - mx);
    sxy += (model_ms[i] - mx) * (measured_ms[i] - my);
  }
  if (sxx == 0.0) throw Error("latency calibration: model latencies are all equal");
  const double factor = sxy / sxx;
  return {factor, my - factor * mx};
}

LatencyEstimate network_latency(const NetworkSpec& net, const HwConfig& hw, std::size_t L,
                                std::size_t S, bool ic, const LatencyCalibration& cal) {
  if (S < 1) throw Error("S must be >= 1");
  const std::size_t boundary = active_from(net, L);
  LatencyEstimate est;
  for (std::size_t i : net.weight_layer_indices()) {
    const std::uint64_t c = layer_cycles(net.layers[i], net.in_shapes[i], hw);
    (i < boundary ? est.cycles_prefix : est.cycles_suffix) += c;
  }
  est.total_cycles = ic ? est.cycles_prefix + S * est.cycles_suffix
                        : S * (est.cycles_prefix + est.cycles_suffix);
  est.latency_ms = cal.apply(static_cast<double>(est.total_cycles) / (hw.clock_mhz * 1e3));
  return est;
}

}  // namespace mcdsim
