#include "mcdsim/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mcdsim/error.hpp"

namespace mcdsim {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Linear: return "linear";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::ReLU: return "relu";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::AvgPool: return "avgpool";
    case LayerKind::Shortcut: return "shortcut";
    case LayerKind::DropoutSite: return "dropout";
  }
  return "?";
}

namespace {

std::string where(std::size_t index, const LayerSpec& layer) {
  return "layer " + std::to_string(index) + " (" + to_string(layer.kind()) + ")";
}

[[noreturn]] void shape_error(std::size_t index, const LayerSpec& layer, const std::string& expected,
                              const Shape& actual) {
  throw Error(where(index, layer) + ": expected input shape " + expected + ", got " + actual.str());
}

std::size_t pooled_extent(std::size_t in, std::size_t window, std::size_t stride) {
  return (in - window) / stride + 1;
}

std::int32_t saturate_int32(std::int64_t v) {
  return static_cast<std::int32_t>(std::clamp<std::int64_t>(
      v, std::numeric_limits<std::int32_t>::min(), std::numeric_limits<std::int32_t>::max()));
}

// Arithmetic right shift by `bits` with round-half-away-from-zero.
std::int64_t rshift_round(std::int64_t v, int bits) {
  const std::int64_t half = std::int64_t{1} << (bits - 1);
  return v >= 0 ? (v + half) >> bits : -((-v + half) >> bits);
}

bool follows_weight_layer(const std::vector<LayerSpec>& layers, std::size_t site) {
  for (std::size_t j = site; j-- > 0;) {
    switch (layers[j].kind()) {
      case LayerKind::Conv:
      case LayerKind::Linear: return true;
      case LayerKind::BatchNorm:
      case LayerKind::ReLU:
      case LayerKind::MaxPool:
      case LayerKind::AvgPool:
      case LayerKind::Shortcut: continue;
      case LayerKind::DropoutSite: return false;
    }
  }
  return false;
}

}  // namespace

// ---------------------------------------------------------------------------
// NetworkSpec
// ---------------------------------------------------------------------------

void NetworkSpec::validate() {
  if (layers.empty()) throw Error("network has no layers");
  if (input_scale && !(*input_scale > 0.0)) throw Error("network input scale must be positive");
  in_shapes.clear();
  out_shapes.clear();
  Shape cur = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& layer = layers[i];
    if (layer.out_scale && !(*layer.out_scale > 0.0 && std::isfinite(*layer.out_scale))) {
      throw Error(where(i, layer) + ": out_scale must be positive");
    }
    in_shapes.push_back(cur);
    Shape out = cur;
    switch (layer.kind()) {
      case LayerKind::Conv: {
        const auto& c = layer.as<ConvLayer>();
        if (c.in_channels == 0 || c.filters == 0 || c.kernel == 0 || c.stride == 0) {
          throw Error(where(i, layer) + ": conv dimensions must be positive");
        }
        if (cur.rank() != 3 || cur[0] != c.in_channels) {
          shape_error(i, layer, "[" + std::to_string(c.in_channels) + ",H,W]", cur);
        }
        if (cur[1] + 2 * c.padding < c.kernel || cur[2] + 2 * c.padding < c.kernel) {
          throw Error(where(i, layer) + ": kernel " + std::to_string(c.kernel) +
                      " larger than padded input " + cur.str());
        }
        out = Shape{c.filters, (cur[1] + 2 * c.padding - c.kernel) / c.stride + 1,
                    (cur[2] + 2 * c.padding - c.kernel) / c.stride + 1};
        break;
      }
      case LayerKind::Linear: {
        const auto& l = layer.as<LinearLayer>();
        if (l.in_features == 0 || l.out_features == 0) {
          throw Error(where(i, layer) + ": linear dimensions must be positive");
        }
        if (cur.numel() != l.in_features) {
          shape_error(i, layer, std::to_string(l.in_features) + " elements", cur);
        }
        out = Shape{l.out_features};
        break;
      }
      case LayerKind::BatchNorm: {
        const auto& bn = layer.as<BatchNormLayer>();
        if (bn.scale.size() != cur[0] || bn.shift.size() != cur[0]) {
          throw Error(where(i, layer) + ": expected " + std::to_string(cur[0]) +
                      " per-filter scale/shift values");
        }
        break;
      }
      case LayerKind::ReLU: break;
      case LayerKind::MaxPool:
      case LayerKind::AvgPool: {
        const auto [window, stride] = layer.kind() == LayerKind::MaxPool
                                          ? std::pair{layer.as<MaxPoolLayer>().window,
                                                      layer.as<MaxPoolLayer>().stride}
                                          : std::pair{layer.as<AvgPoolLayer>().window,
                                                      layer.as<AvgPoolLayer>().stride};
        if (window == 0 || stride == 0) throw Error(where(i, layer) + ": pool window/stride must be positive");
        if (cur.rank() != 3 || cur[1] < window || cur[2] < window) {
          shape_error(i, layer, "[C,H,W] with H,W >= " + std::to_string(window), cur);
        }
        out = Shape{cur[0], pooled_extent(cur[1], window, stride), pooled_extent(cur[2], window, stride)};
        break;
      }
      case LayerKind::Shortcut: {
        const int src = layer.as<ShortcutLayer>().source;
        if (src < -1 || src >= static_cast<int>(i)) {
          throw Error(where(i, layer) + ": shortcut source " + std::to_string(src) +
                      " does not precede this layer");
        }
        const Shape& src_shape = src < 0 ? input_shape : out_shapes[static_cast<std::size_t>(src)];
        if (src_shape != cur) {
          throw Error(where(i, layer) + ": shortcut source shape " + src_shape.str() +
                      " does not match " + cur.str());
        }
        break;
      }
      case LayerKind::DropoutSite: {
        dropout_chain_count(layer.as<DropoutSite>().p);
        if (!follows_weight_layer(layers, i)) {
          throw Error(where(i, layer) + ": dropout site must follow a conv or linear layer");
        }
        break;
      }
    }
    out_shapes.push_back(out);
    cur = out;
  }
  if (weight_layer_count() == 0) throw Error("network has no conv or linear layer");
}

std::size_t NetworkSpec::weight_layer_count() const {
  return static_cast<std::size_t>(
      std::count_if(layers.begin(), layers.end(), [](const LayerSpec& l) { return l.is_weight_layer(); }));
}

std::vector<std::size_t> NetworkSpec::weight_layer_indices() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].is_weight_layer()) idx.push_back(i);
  }
  return idx;
}

namespace {

template <class Tensor>
void check_params(const NetworkSpec& spec, std::size_t i, const std::optional<Tensor>& weight,
                  const std::optional<Tensor>& bias) {
  const LayerSpec& layer = spec.layers[i];
  if (!layer.is_weight_layer()) {
    if (weight || bias) throw Error(where(i, layer) + ": function layer carries parameters");
    return;
  }
  Shape expected;
  std::size_t filters = 0;
  if (layer.kind() == LayerKind::Conv) {
    const auto& c = layer.as<ConvLayer>();
    expected = Shape{c.filters, c.in_channels, c.kernel, c.kernel};
    filters = c.filters;
  } else {
    const auto& l = layer.as<LinearLayer>();
    expected = Shape{l.out_features, l.in_features};
    filters = l.out_features;
  }
  if (!weight) throw Error(where(i, layer) + ": missing weight tensor");
  if (weight->shape != expected) {
    throw Error(where(i, layer) + ": weight shape " + weight->shape.str() + ", expected " +
                expected.str());
  }
  if (bias && bias->shape != Shape{filters}) {
    throw Error(where(i, layer) + ": bias shape " + bias->shape.str() + ", expected [" +
                std::to_string(filters) + "]");
  }
}

}  // namespace

void Network::validate() {
  spec.validate();
  if (params.size() != spec.layers.size()) throw Error("network parameter list does not match layers");
  for (std::size_t i = 0; i < params.size(); ++i) check_params(spec, i, params[i].weight, params[i].bias);
}

void FloatNetwork::validate() {
  spec.validate();
  if (params.size() != spec.layers.size()) throw Error("network parameter list does not match layers");
  for (std::size_t i = 0; i < params.size(); ++i) check_params(spec, i, params[i].weight, params[i].bias);
}

std::size_t active_from(const NetworkSpec& net, std::size_t bayesian_layers) {
  const auto idx = net.weight_layer_indices();
  if (bayesian_layers < 1 || bayesian_layers > idx.size()) {
    throw Error("L=" + std::to_string(bayesian_layers) + " outside 1.." + std::to_string(idx.size()));
  }
  return idx[idx.size() - bayesian_layers];
}

// ---------------------------------------------------------------------------
// Layer execution
// ---------------------------------------------------------------------------

std::vector<std::int32_t> conv_accumulate(const ConvLayer& conv, const QuantTensor& input,
                                          const QuantTensor& weight, std::size_t* out_h,
                                          std::size_t* out_w) {
  const std::size_t C = conv.in_channels, F = conv.filters, K = conv.kernel;
  const std::size_t H = input.shape[1], W = input.shape[2];
  const std::size_t Ho = (H + 2 * conv.padding - K) / conv.stride + 1;
  const std::size_t Wo = (W + 2 * conv.padding - K) / conv.stride + 1;
  std::vector<std::int32_t> acc(F * Ho * Wo);
  const auto pad = static_cast<std::ptrdiff_t>(conv.padding);
  for (std::size_t f = 0; f < F; ++f) {
    for (std::size_t oy = 0; oy < Ho; ++oy) {
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        std::int64_t sum = 0;
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t ky = 0; ky < K; ++ky) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * conv.stride + ky) - pad;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
            for (std::size_t kx = 0; kx < K; ++kx) {
              const auto ix = static_cast<std::ptrdiff_t>(ox * conv.stride + kx) - pad;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
              const std::int32_t a =
                  input.data[(c * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix)];
              const std::int32_t w = weight.data[((f * C + c) * K + ky) * K + kx];
              sum += a * w;
            }
          }
        }
        acc[(f * Ho + oy) * Wo + ox] = saturate_int32(sum);
      }
    }
  }
  if (out_h) *out_h = Ho;
  if (out_w) *out_w = Wo;
  return acc;
}

namespace {

// Adds the bias (converted to the accumulator grid) and requantizes each
// accumulator to int8 once.
QuantTensor requantize(const LayerSpec& layer, std::vector<std::int32_t> acc, Shape shape,
                       std::size_t filters, double in_scale, const QuantTensor& weight,
                       const std::optional<QuantTensor>& bias) {
  const double acc_scale = in_scale * weight.scale;
  const std::size_t spatial = acc.size() / filters;
  if (bias) {
    for (std::size_t f = 0; f < filters; ++f) {
      const auto b = static_cast<std::int64_t>(round_half_away(bias->data[f] * bias->scale / acc_scale));
      for (std::size_t s = 0; s < spatial; ++s) {
        acc[f * spatial + s] = saturate_int32(acc[f * spatial + s] + b);
      }
    }
  }
  double out_scale = 0.0;
  if (layer.out_scale) {
    out_scale = *layer.out_scale;
  } else {
    std::int64_t max_abs = 0;
    for (std::int32_t a : acc) max_abs = std::max<std::int64_t>(max_abs, std::abs(std::int64_t{a}));
    out_scale = max_abs == 0 ? 1.0 : static_cast<double>(max_abs) * acc_scale / kQMax;
  }
  const double multiplier = acc_scale / out_scale;
  QuantTensor out(std::move(shape), out_scale);
  for (std::size_t i = 0; i < acc.size(); ++i) {
    out.data[i] = saturate_int8(round_half_away(acc[i] * multiplier));
  }
  return out;
}

std::int8_t rescale(std::int8_t q, double from, double to) {
  return saturate_int8(round_half_away(q * from / to));
}

}  // namespace

QuantTensor run_layer(const LayerSpec& layer, const LayerParams& params, const QuantTensor& input,
                      const QuantTensor* shortcut_operand, std::size_t index) {
  const Shape& in = input.shape;
  switch (layer.kind()) {
    case LayerKind::Conv: {
      const auto& c = layer.as<ConvLayer>();
      if (in.rank() != 3 || in[0] != c.in_channels) {
        shape_error(index, layer, "[" + std::to_string(c.in_channels) + ",H,W]", in);
      }
      if (!params.weight) throw Error(where(index, layer) + ": missing weights");
      std::size_t ho = 0, wo = 0;
      auto acc = conv_accumulate(c, input, *params.weight, &ho, &wo);
      return requantize(layer, std::move(acc), Shape{c.filters, ho, wo}, c.filters, input.scale,
                        *params.weight, params.bias);
    }
    case LayerKind::Linear: {
      const auto& l = layer.as<LinearLayer>();
      if (in.numel() != l.in_features) shape_error(index, layer, std::to_string(l.in_features) + " elements", in);
      if (!params.weight) throw Error(where(index, layer) + ": missing weights");
      const auto& w = params.weight->data;
      std::vector<std::int32_t> acc(l.out_features);
      for (std::size_t f = 0; f < l.out_features; ++f) {
        std::int64_t sum = 0;
        for (std::size_t c = 0; c < l.in_features; ++c) {
          sum += std::int32_t{input.data[c]} * std::int32_t{w[f * l.in_features + c]};
        }
        acc[f] = saturate_int32(sum);
      }
      return requantize(layer, std::move(acc), Shape{l.out_features}, l.out_features, input.scale,
                        *params.weight, params.bias);
    }
    case LayerKind::BatchNorm: {
      const auto& bn = layer.as<BatchNormLayer>();
      if (bn.scale.size() != in[0]) shape_error(index, layer, "[" + std::to_string(bn.scale.size()) + ",...]", in);
      const double out_scale = layer.out_scale.value_or(input.scale);
      QuantTensor out(in, out_scale);
      const std::size_t spatial = in.numel() / in[0];
      for (std::size_t c = 0; c < in[0]; ++c) {
        const auto mult = static_cast<std::int64_t>(round_half_away(bn.scale[c] * input.scale / out_scale * 65536.0));
        const auto add = static_cast<std::int64_t>(round_half_away(bn.shift[c] / out_scale * 65536.0));
        for (std::size_t s = 0; s < spatial; ++s) {
          const std::size_t i = c * spatial + s;
          out.data[i] = saturate_int8(rshift_round(input.data[i] * mult + add, 16));
        }
      }
      return out;
    }
    case LayerKind::ReLU: {
      QuantTensor out = input;
      for (auto& v : out.data) v = std::max<std::int8_t>(v, 0);
      return out;
    }
    case LayerKind::MaxPool:
    case LayerKind::AvgPool: {
      const bool is_max = layer.kind() == LayerKind::MaxPool;
      const std::size_t window = is_max ? layer.as<MaxPoolLayer>().window : layer.as<AvgPoolLayer>().window;
      const std::size_t stride = is_max ? layer.as<MaxPoolLayer>().stride : layer.as<AvgPoolLayer>().stride;
      if (in.rank() != 3 || in[1] < window || in[2] < window) {
        shape_error(index, layer, "[C,H,W] with H,W >= " + std::to_string(window), in);
      }
      const std::size_t C = in[0], H = in[1], W = in[2];
      const std::size_t Ho = pooled_extent(H, window, stride), Wo = pooled_extent(W, window, stride);
      QuantTensor out(Shape{C, Ho, Wo}, input.scale);
      const auto n = static_cast<std::int64_t>(window * window);
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            std::int64_t best = std::numeric_limits<std::int64_t>::min();
            std::int64_t sum = 0;
            for (std::size_t ky = 0; ky < window; ++ky) {
              for (std::size_t kx = 0; kx < window; ++kx) {
                const std::int64_t v = input.data[(c * H + oy * stride + ky) * W + ox * stride + kx];
                best = std::max(best, v);
                sum += v;
              }
            }
            std::int64_t r = best;
            if (!is_max) r = sum >= 0 ? (2 * sum + n) / (2 * n) : -((-2 * sum + n) / (2 * n));
            out.data[(c * Ho + oy) * Wo + ox] = saturate_int8(r);
          }
        }
      }
      return out;
    }
    case LayerKind::Shortcut: {
      if (!shortcut_operand) throw Error(where(index, layer) + ": shortcut operand missing");
      if (shortcut_operand->shape != in) shape_error(index, layer, shortcut_operand->shape.str(), in);
      const double s = std::max(input.scale, shortcut_operand->scale);
      QuantTensor out(in, s);
      for (std::size_t i = 0; i < in.numel(); ++i) {
        const std::int64_t a = rescale(input.data[i], input.scale, s);
        const std::int64_t b = rescale(shortcut_operand->data[i], shortcut_operand->scale, s);
        out.data[i] = saturate_int8(a + b);
      }
      return out;
    }
    case LayerKind::DropoutSite: return input;
  }
  throw Error(where(index, layer) + ": unsupported layer");
}

std::int32_t mcd_keep_multiplier(double p) {
  dropout_chain_count(p);
  return static_cast<std::int32_t>(round_half_away(256.0 / (1.0 - p)));
}

QuantTensor apply_mcd(const QuantTensor& y, std::span<const MaskWord> words, double p) {
  const std::int64_t mult = mcd_keep_multiplier(p);
  const std::size_t filters = y.shape[0];
  std::size_t total_bits = 0;
  for (const auto& w : words) total_bits += w.width();
  if (words.empty() || total_bits < filters) {
    throw Error("apply_mcd: " + std::to_string(total_bits) + " mask bits for " +
                std::to_string(filters) + " filters");
  }
  const std::size_t width = words.front().width();
  const std::size_t spatial = y.shape.numel() / filters;
  QuantTensor out = y;
  for (std::size_t f = 0; f < filters; ++f) {
    const bool keep = words[f / width].keep(f % width);
    for (std::size_t s = 0; s < spatial; ++s) {
      auto& v = out.data[f * spatial + s];
      v = keep ? saturate_int8(rshift_round(v * mult, 8)) : std::int8_t{0};
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

void McdConfig::validate(const NetworkSpec& net) const {
  const std::size_t n = net.weight_layer_count();
  if (L < 1 || L > n) throw Error("L=" + std::to_string(L) + " outside 1.." + std::to_string(n));
  if (S < 1) throw Error("S must be >= 1");
  if (p) dropout_chain_count(*p);
}

namespace {

struct ForwardState {
  QuantTensor current;
  std::optional<QuantTensor> input;             // kept when a shortcut reads it
  std::vector<std::optional<QuantTensor>> saved;  // outputs read by later shortcuts
};

// Layers whose outputs some shortcut reads; slot 0 is the network input.
std::vector<bool> shortcut_sources(const NetworkSpec& net) {
  std::vector<bool> needed(net.layers.size() + 1, false);
  for (const auto& l : net.layers) {
    if (l.kind() == LayerKind::Shortcut) needed[static_cast<std::size_t>(l.as<ShortcutLayer>().source + 1)] = true;
  }
  return needed;
}

ForwardState start_state(const NetworkSpec& net, const QuantTensor& x, const std::vector<bool>& needed) {
  if (x.shape != net.input_shape) {
    throw Error("input shape " + x.shape.str() + " does not match network input " + net.input_shape.str());
  }
  ForwardState st{x, std::nullopt, std::vector<std::optional<QuantTensor>>(net.layers.size())};
  if (needed[0]) st.input = x;
  return st;
}

void run_range(const Network& net, std::size_t begin, std::size_t end, ForwardState& st,
               BernoulliSampler* sampler, std::size_t first_active, const McdConfig& cfg,
               const std::vector<bool>& needed, std::vector<std::size_t>* runs) {
  const auto& layers = net.spec.layers;
  for (std::size_t i = begin; i < end; ++i) {
    const LayerSpec& layer = layers[i];
    if (runs) ++(*runs)[i];
    if (layer.kind() == LayerKind::DropoutSite) {
      if (i >= first_active) {
        if (!sampler) throw Error(where(i, layer) + ": active dropout site without a sampler");
        const double p = cfg.p.value_or(layer.as<DropoutSite>().p);
        if (p != sampler->drop_prob()) {
          throw Error(where(i, layer) + ": site p=" + std::to_string(p) +
                      " but sampler drops with p=" + std::to_string(sampler->drop_prob()));
        }
        const auto words = sampler->mask_stream_for_layer(st.current.shape[0]);
        st.current = apply_mcd(st.current, words, p);
      }
    } else {
      const QuantTensor* operand = nullptr;
      if (layer.kind() == LayerKind::Shortcut) {
        const int src = layer.as<ShortcutLayer>().source;
        operand = src < 0 ? &*st.input : &*st.saved[static_cast<std::size_t>(src)];
      }
      st.current = run_layer(layer, net.params[i], st.current, operand, i);
    }
    if (needed[i + 1]) st.saved[i] = st.current;
  }
}

SamplePrediction finish(const QuantTensor& out) {
  const FloatTensor logits = dequantize(out);
  return {softmax(logits.data)};
}

void accumulate_mean(PredictiveResult& r, std::size_t classes) {
  r.mean_probs.assign(classes, 0.0);
  for (std::size_t k = 0; k < classes; ++k) {
    double sum = 0.0;
    for (const auto& s : r.per_sample) sum += s.probs[k];
    r.mean_probs[k] = sum / static_cast<double>(r.per_sample.size());
  }
}

}  // namespace

std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

SamplePrediction forward_once(const Network& net, const QuantTensor& x, const McdConfig& cfg,
                              BernoulliSampler& sampler, std::vector<std::size_t>* layer_runs) {
  cfg.validate(net.spec);
  const auto needed = shortcut_sources(net.spec);
  ForwardState st = start_state(net.spec, x, needed);
  run_range(net, 0, net.spec.layers.size(), st, &sampler, active_from(net.spec, cfg.L), cfg, needed,
            layer_runs);
  return finish(st.current);
}

PredictiveResult predict(const Network& net, const QuantTensor& x, const McdConfig& cfg,
                         BernoulliSampler& sampler) {
  cfg.validate(net.spec);
  PredictiveResult r;
  r.layer_runs.assign(net.spec.layers.size(), 0);
  const std::uint64_t drawn_before = sampler.decisions_drawn();
  for (std::size_t s = 0; s < cfg.S; ++s) {
    r.per_sample.push_back(forward_once(net, x, cfg, sampler, &r.layer_runs));
  }
  r.mask_decisions = sampler.decisions_drawn() - drawn_before;
  accumulate_mean(r, net.spec.num_classes());
  return r;
}

std::uint64_t ic_cache_bits(const NetworkSpec& net, std::size_t bayesian_layers) {
  const std::size_t boundary = active_from(net, bayesian_layers);
  const auto elems = [&](int layer) {
    return layer < 0 ? net.input_shape.numel() : net.out_shapes[static_cast<std::size_t>(layer)].numel();
  };
  std::uint64_t bits = elems(static_cast<int>(boundary) - 1) * 8ULL;
  std::vector<int> counted{static_cast<int>(boundary) - 1};
  for (std::size_t i = boundary; i < net.layers.size(); ++i) {
    if (net.layers[i].kind() != LayerKind::Shortcut) continue;
    const int src = net.layers[i].as<ShortcutLayer>().source;
    if (src >= static_cast<int>(boundary) || std::find(counted.begin(), counted.end(), src) != counted.end()) {
      continue;
    }
    counted.push_back(src);
    bits += elems(src) * 8ULL;
  }
  return bits;
}

PredictiveResult predict_with_ic(const Network& net, const QuantTensor& x, const McdConfig& cfg,
                                 BernoulliSampler& sampler, const IcOptions& opts) {
  cfg.validate(net.spec);
  PredictiveResult r;
  r.layer_runs.assign(net.spec.layers.size(), 0);
  const std::size_t boundary = active_from(net.spec, cfg.L);
  const auto needed = shortcut_sources(net.spec);

  const std::uint64_t bits = ic_cache_bits(net.spec, cfg.L);
  if (opts.cache_budget_bits && bits > *opts.cache_budget_bits) {
    const std::string msg = "ic cache needs " + std::to_string(bits) + " bits, budget is " +
                            std::to_string(*opts.cache_budget_bits);
    if (opts.strict_mem) throw Error(msg);
    r.warnings.push_back(msg);
  }

  ForwardState cached = start_state(net.spec, x, needed);
  run_range(net, 0, boundary, cached, nullptr, boundary, cfg, needed, &r.layer_runs);

  const std::uint64_t drawn_before = sampler.decisions_drawn();
  for (std::size_t s = 0; s < cfg.S; ++s) {
    ForwardState st = cached;
    run_range(net, boundary, net.spec.layers.size(), st, &sampler, boundary, cfg, needed, &r.layer_runs);
    r.per_sample.push_back(finish(st.current));
  }
  r.mask_decisions = sampler.decisions_drawn() - drawn_before;
  accumulate_mean(r, net.spec.num_classes());
  return r;
}

double effective_dropout_p(const NetworkSpec& net, std::optional<double> override_p) {
  if (override_p) {
    dropout_chain_count(*override_p);
    return *override_p;
  }
  std::optional<double> p;
  for (const auto& l : net.layers) {
    if (l.kind() != LayerKind::DropoutSite) continue;
    const double site_p = l.as<DropoutSite>().p;
    if (p && *p != site_p) throw Error("dropout sites disagree on p; pass an explicit p");
    p = site_p;
  }
  return p.value_or(0.25);
}

BernoulliSampler make_sampler(double p, std::size_t sipo_width, std::size_t fifo_depth,
                              std::uint64_t seed) {
  SamplerConfig cfg;
  cfg.k = dropout_chain_count(p);
  cfg.sipo_width = sipo_width;
  cfg.fifo_depth = fifo_depth;
  cfg.seed = seed;
  return BernoulliSampler(cfg);
}

QuantTensor quantize_input(const NetworkSpec& net, const FloatTensor& x) {
  if (x.shape != net.input_shape) {
    throw Error("input shape " + x.shape.str() + " does not match network input " + net.input_shape.str());
  }
  return quantize(x, net.input_scale ? *net.input_scale : choose_scale(x));
}

// ---------------------------------------------------------------------------
// Float reference path
// ---------------------------------------------------------------------------

std::vector<FloatTensor> float_forward(const FloatNetwork& net, const FloatTensor& x) {
  const auto& layers = net.spec.layers;
  std::vector<FloatTensor> outs;
  outs.reserve(layers.size());
  FloatTensor cur = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& layer = layers[i];
    const Shape& out_shape = net.spec.out_shapes[i];
    FloatTensor out(out_shape);
    switch (layer.kind()) {
      case LayerKind::Conv: {
        const auto& c = layer.as<ConvLayer>();
        const auto& w = net.params[i].weight->data;
        const std::size_t H = cur.shape[1], W = cur.shape[2], K = c.kernel;
        const std::size_t Ho = out_shape[1], Wo = out_shape[2];
        const auto pad = static_cast<std::ptrdiff_t>(c.padding);
        for (std::size_t f = 0; f < c.filters; ++f) {
          const double b = net.params[i].bias ? net.params[i].bias->data[f] : 0.0;
          for (std::size_t oy = 0; oy < Ho; ++oy) {
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              double sum = b;
              for (std::size_t ch = 0; ch < c.in_channels; ++ch) {
                for (std::size_t ky = 0; ky < K; ++ky) {
                  const auto iy = static_cast<std::ptrdiff_t>(oy * c.stride + ky) - pad;
                  if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                  for (std::size_t kx = 0; kx < K; ++kx) {
                    const auto ix = static_cast<std::ptrdiff_t>(ox * c.stride + kx) - pad;
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                    sum += cur.data[(ch * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix)] *
                           w[((f * c.in_channels + ch) * K + ky) * K + kx];
                  }
                }
              }
              out.data[(f * Ho + oy) * Wo + ox] = sum;
            }
          }
        }
        break;
      }
      case LayerKind::Linear: {
        const auto& l = layer.as<LinearLayer>();
        const auto& w = net.params[i].weight->data;
        for (std::size_t f = 0; f < l.out_features; ++f) {
          double sum = net.params[i].bias ? net.params[i].bias->data[f] : 0.0;
          for (std::size_t c = 0; c < l.in_features; ++c) sum += cur.data[c] * w[f * l.in_features + c];
          out.data[f] = sum;
        }
        break;
      }
      case LayerKind::BatchNorm: {
        const auto& bn = layer.as<BatchNormLayer>();
        const std::size_t spatial = cur.shape.numel() / cur.shape[0];
        for (std::size_t c = 0; c < cur.shape[0]; ++c) {
          for (std::size_t s = 0; s < spatial; ++s) {
            out.data[c * spatial + s] = bn.scale[c] * cur.data[c * spatial + s] + bn.shift[c];
          }
        }
        break;
      }
      case LayerKind::ReLU:
        for (std::size_t k = 0; k < cur.data.size(); ++k) out.data[k] = std::max(0.0, cur.data[k]);
        break;
      case LayerKind::MaxPool:
      case LayerKind::AvgPool: {
        const bool is_max = layer.kind() == LayerKind::MaxPool;
        const std::size_t window = is_max ? layer.as<MaxPoolLayer>().window : layer.as<AvgPoolLayer>().window;
        const std::size_t stride = is_max ? layer.as<MaxPoolLayer>().stride : layer.as<AvgPoolLayer>().stride;
        const std::size_t H = cur.shape[1], W = cur.shape[2], Ho = out_shape[1], Wo = out_shape[2];
        for (std::size_t c = 0; c < cur.shape[0]; ++c) {
          for (std::size_t oy = 0; oy < Ho; ++oy) {
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              double best = -std::numeric_limits<double>::infinity(), sum = 0.0;
              for (std::size_t ky = 0; ky < window; ++ky) {
                for (std::size_t kx = 0; kx < window; ++kx) {
                  const double v = cur.data[(c * H + oy * stride + ky) * W + ox * stride + kx];
                  best = std::max(best, v);
                  sum += v;
                }
              }
              out.data[(c * Ho + oy) * Wo + ox] = is_max ? best : sum / static_cast<double>(window * window);
            }
          }
        }
        break;
      }
      case LayerKind::Shortcut: {
        const int src = layer.as<ShortcutLayer>().source;
        const FloatTensor& other = src < 0 ? x : outs[static_cast<std::size_t>(src)];
        for (std::size_t k = 0; k < cur.data.size(); ++k) out.data[k] = cur.data[k] + other.data[k];
        break;
      }
      case LayerKind::DropoutSite: out = cur; break;
    }
    outs.push_back(out);
    cur = std::move(out);
  }
  return outs;
}

Network quantize_network(const FloatNetwork& fnet, std::span<const FloatTensor> calibration) {
  if (calibration.empty()) throw Error("quantize: calibration data is required");
  Network net;
  net.spec = fnet.spec;
  net.params.resize(fnet.params.size());
  for (std::size_t i = 0; i < fnet.params.size(); ++i) {
    const auto& fp = fnet.params[i];
    if (fp.weight) net.params[i].weight = quantize(*fp.weight, choose_scale(*fp.weight));
    if (fp.bias) net.params[i].bias = quantize(*fp.bias, choose_scale(*fp.bias));
  }

  const std::size_t n = fnet.spec.layers.size();
  std::vector<double> max_abs(n, 0.0);
  double input_max = 0.0;
  for (const FloatTensor& x : calibration) {
    if (x.shape != fnet.spec.input_shape) {
      throw Error("quantize: calibration input shape " + x.shape.str() + " does not match " +
                  fnet.spec.input_shape.str());
    }
    for (double v : x.data) input_max = std::max(input_max, std::abs(v));
    const auto outs = float_forward(fnet, x);
    for (std::size_t i = 0; i < n; ++i) {
      for (double v : outs[i].data) max_abs[i] = std::max(max_abs[i], std::abs(v));
    }
  }
  net.spec.input_scale = input_max == 0.0 ? 1.0 : input_max / kQMax;
  for (std::size_t i = 0; i < n; ++i) {
    const LayerKind k = net.spec.layers[i].kind();
    if (k == LayerKind::Conv || k == LayerKind::Linear || k == LayerKind::BatchNorm) {
      net.spec.layers[i].out_scale = max_abs[i] == 0.0 ? 1.0 : max_abs[i] / kQMax;
    }
  }
  net.validate();
  return net;
}

}  // namespace mcdsim
