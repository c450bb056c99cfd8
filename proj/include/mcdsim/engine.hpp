#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mcdsim/sampler.hpp"
#include "mcdsim/tensor.hpp"

namespace mcdsim {

// ---------------------------------------------------------------------------
// Layer descriptors
// ---------------------------------------------------------------------------

struct ConvLayer {
  std::size_t in_channels = 0;
  std::size_t filters = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

struct LinearLayer {
  std::size_t in_features = 0;
  std::size_t out_features = 0;
};

/// Inference-time batch norm folded to y = scale[c] * x + shift[c] (real units).
struct BatchNormLayer {
  std::vector<double> scale;
  std::vector<double> shift;
};

struct ReluLayer {};

struct MaxPoolLayer {
  std::size_t window = 2;
  std::size_t stride = 2;
};

struct AvgPoolLayer {
  std::size_t window = 2;
  std::size_t stride = 2;
};

/// Adds the output of layer `source` (or the network input when source == -1).
struct ShortcutLayer {
  int source = -1;
};

struct DropoutSite {
  double p = 0.25;
};

enum class LayerKind { Conv, Linear, BatchNorm, ReLU, MaxPool, AvgPool, Shortcut, DropoutSite };

const char* to_string(LayerKind kind);

struct LayerSpec {
  std::variant<ConvLayer, LinearLayer, BatchNormLayer, ReluLayer, MaxPoolLayer, AvgPoolLayer,
               ShortcutLayer, DropoutSite>
      op;
  std::string name;
  /// Requantization scale of this layer's output. Absent: chosen per call from
  /// the real-valued result (Conv/Linear) or inherited from the input (BN).
  std::optional<double> out_scale;

  LayerKind kind() const { return static_cast<LayerKind>(op.index()); }
  bool is_weight_layer() const {
    return kind() == LayerKind::Conv || kind() == LayerKind::Linear;
  }
  template <class T>
  const T& as() const {
    return std::get<T>(op);
  }
};

/// Ordered layer list plus the shapes derived by validate().
struct NetworkSpec {
  Shape input_shape;
  std::optional<double> input_scale;
  std::vector<LayerSpec> layers;

  // Filled by validate().
  std::vector<Shape> in_shapes;
  std::vector<Shape> out_shapes;

  /// Checks every structural invariant and derives per-layer shapes.
  /// Errors name the layer index.
  void validate();

  /// N: the number of Conv and Linear layers.
  std::size_t weight_layer_count() const;
  std::vector<std::size_t> weight_layer_indices() const;
  std::size_t num_classes() const { return out_shapes.back().numel(); }
};

struct LayerParams {
  std::optional<QuantTensor> weight;
  std::optional<QuantTensor> bias;
};

/// A validated network with int8 parameters; immutable after load.
struct Network {
  NetworkSpec spec;
  std::vector<LayerParams> params;  // one entry per layer, empty for function layers

  void validate();
};

/// Layer index of the (N - L + 1)-th weight layer: every dropout site at or
/// after it is active. Shared by the engine and the latency model.
std::size_t active_from(const NetworkSpec& net, std::size_t bayesian_layers);

// ---------------------------------------------------------------------------
// Layer execution
// ---------------------------------------------------------------------------

/// Exact integer conv accumulators (bias excluded), shape {F, H_out, W_out}.
std::vector<std::int32_t> conv_accumulate(const ConvLayer& conv, const QuantTensor& input,
                                          const QuantTensor& weight, std::size_t* out_h,
                                          std::size_t* out_w);

/// Runs one layer. `shortcut_operand` is required for Shortcut layers. Dropout
/// sites pass through unchanged here; masking is apply_mcd's job.
QuantTensor run_layer(const LayerSpec& layer, const LayerParams& params, const QuantTensor& input,
                      const QuantTensor* shortcut_operand = nullptr, std::size_t index = 0);

/// round(256 / (1 - p)), the 8-fraction-bit keep multiplier.
std::int32_t mcd_keep_multiplier(double p);

/// Zeroes each filter whose mask bit is 0 and scales the kept ones by
/// 1/(1-p) in fixed point. Filter f reads bit f % width of word f / width.
QuantTensor apply_mcd(const QuantTensor& y, std::span<const MaskWord> words, double p);

// ---------------------------------------------------------------------------
// Monte Carlo Dropout inference
// ---------------------------------------------------------------------------

struct McdConfig {
  std::size_t L = 1;  ///< trailing Bayesian weight layers
  std::size_t S = 1;  ///< stochastic forward passes
  /// Dropout probability at active sites; defaults to each site's own p.
  std::optional<double> p;

  void validate(const NetworkSpec& net) const;
};

struct SamplePrediction {
  std::vector<double> probs;
};

struct PredictiveResult {
  std::vector<double> mean_probs;
  std::vector<SamplePrediction> per_sample;
  /// Keep/drop decisions drawn from the sampler over all passes.
  std::uint64_t mask_decisions = 0;
  /// How many times each layer was executed.
  std::vector<std::size_t> layer_runs;
  std::vector<std::string> warnings;
};

struct IcOptions {
  /// On-chip capacity for the cached boundary activations, in bits.
  std::optional<std::uint64_t> cache_budget_bits;
  /// Exceeding the budget throws instead of warning.
  bool strict_mem = false;
};

/// One stochastic pass through the whole network.
SamplePrediction forward_once(const Network& net, const QuantTensor& x, const McdConfig& cfg,
                              BernoulliSampler& sampler, std::vector<std::size_t>* layer_runs = nullptr);

/// Naive MCD: S end-to-end passes.
PredictiveResult predict(const Network& net, const QuantTensor& x, const McdConfig& cfg,
                         BernoulliSampler& sampler);

/// MCD with intermediate-layer caching: the deterministic prefix runs once and
/// only the Bayesian suffix runs S times. Bit-identical to predict().
PredictiveResult predict_with_ic(const Network& net, const QuantTensor& x, const McdConfig& cfg,
                                 BernoulliSampler& sampler, const IcOptions& opts = {});

/// Bits held on chip by predict_with_ic for a given L: the boundary activation
/// plus any prefix outputs that suffix shortcuts read.
std::uint64_t ic_cache_bits(const NetworkSpec& net, std::size_t bayesian_layers);

std::vector<double> softmax(std::span<const double> logits);

/// The dropout probability the network runs with: `override` when given,
/// else the (single) p shared by its dropout sites, else 0.25.
double effective_dropout_p(const NetworkSpec& net, std::optional<double> override_p);

/// A sampler realizing p = 2^-k with default chains, PF-wide words and a
/// depth-D FIFO.
BernoulliSampler make_sampler(double p, std::size_t sipo_width, std::size_t fifo_depth,
                              std::uint64_t seed);

/// Quantizes an input with the manifest's input scale, or calibrates on it.
QuantTensor quantize_input(const NetworkSpec& net, const FloatTensor& x);

// ---------------------------------------------------------------------------
// Float reference path (calibration and quantization)
// ---------------------------------------------------------------------------

struct FloatLayerParams {
  std::optional<FloatTensor> weight;
  std::optional<FloatTensor> bias;
};

struct FloatNetwork {
  NetworkSpec spec;
  std::vector<FloatLayerParams> params;

  void validate();
};

/// Deterministic float forward (dropout sites are identity). Returns every
/// layer's output.
std::vector<FloatTensor> float_forward(const FloatNetwork& net, const FloatTensor& x);

/// Per-tensor weight scales from choose_scale, activation scales from the
/// maximum magnitude seen on the calibration inputs.
Network quantize_network(const FloatNetwork& net, std::span<const FloatTensor> calibration);

}  // namespace mcdsim
