#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "mcdsim/engine.hpp"

namespace mcdsim::testing {

inline QuantTensor random_quant(std::mt19937_64& rng, Shape shape, double scale) {
  std::uniform_int_distribution<int> d(-127, 127);
  QuantTensor t(std::move(shape), scale);
  for (auto& v : t.data) v = static_cast<std::int8_t>(d(rng));
  return t;
}

inline FloatTensor random_float(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  FloatTensor t(std::move(shape));
  for (auto& v : t.data) v = d(rng);
  return t;
}

inline LayerSpec make_layer(decltype(LayerSpec::op) op, std::string name,
                            std::optional<double> out_scale = std::nullopt) {
  LayerSpec l;
  l.op = std::move(op);
  l.name = std::move(name);
  l.out_scale = out_scale;
  return l;
}

// Conv blocks (3x3 same-padding or 1x1, optional BN, ReLU, optional shortcut,
// dropout) followed by linear blocks. `weight_layers` is split between them.
inline Network random_network(std::mt19937_64& rng, std::size_t weight_layers, bool shortcuts,
                              double p = 0.25) {
  std::uniform_int_distribution<std::size_t> ch(1, 4), hw(4, 7), filt(2, 6), feat(3, 12);
  std::bernoulli_distribution coin(0.5);

  const std::size_t n_linear = weight_layers == 1 ? 1 : std::uniform_int_distribution<std::size_t>(1, 2)(rng);
  const std::size_t n_conv = weight_layers - std::min(n_linear, weight_layers);

  Network net;
  NetworkSpec& spec = net.spec;
  Shape cur{ch(rng), hw(rng), hw(rng)};
  spec.input_shape = cur;
  spec.input_scale = 1.0 / 127.0;

  auto push = [&](LayerSpec l, LayerParams params = {}) {
    spec.layers.push_back(std::move(l));
    net.params.push_back(std::move(params));
  };
  std::vector<std::pair<int, Shape>> taps;  // candidate shortcut sources
  taps.emplace_back(-1, cur);

  for (std::size_t i = 0; i < n_conv; ++i) {
    const bool same = shortcuts && coin(rng);
    const std::size_t f = same ? cur[0] : filt(rng);
    const std::size_t k = coin(rng) ? 3 : 1;
    ConvLayer conv{cur[0], f, k, 1, k / 2};
    LayerParams params;
    params.weight = random_quant(rng, Shape{f, cur[0], k, k}, 0.02);
    if (coin(rng)) params.bias = random_quant(rng, Shape{f}, 0.01);
    const std::optional<double> out_scale = coin(rng) ? std::optional<double>(0.05) : std::nullopt;
    push(make_layer(conv, "conv" + std::to_string(i), out_scale), std::move(params));
    cur = Shape{f, cur[1], cur[2]};
    if (coin(rng)) {
      BatchNormLayer bn;
      std::uniform_real_distribution<double> s(0.5, 1.5), b(-0.1, 0.1);
      for (std::size_t c = 0; c < f; ++c) {
        bn.scale.push_back(s(rng));
        bn.shift.push_back(b(rng));
      }
      push(make_layer(bn, "bn" + std::to_string(i)));
    }
    push(make_layer(ReluLayer{}, "relu" + std::to_string(i)));
    if (shortcuts) {
      std::vector<int> matching;
      for (const auto& [src, shape] : taps) {
        if (shape == cur) matching.push_back(src);
      }
      if (!matching.empty() && coin(rng)) {
        const int src = matching[std::uniform_int_distribution<std::size_t>(0, matching.size() - 1)(rng)];
        push(make_layer(ShortcutLayer{src}, "add" + std::to_string(i)));
      }
    }
    taps.emplace_back(static_cast<int>(spec.layers.size()) - 1, cur);
    push(make_layer(DropoutSite{p}, "drop" + std::to_string(i)));
  }
  if (n_conv > 0 && cur[1] >= 4 && coin(rng)) {
    push(make_layer(MaxPoolLayer{2, 2}, "pool"));
    cur = Shape{cur[0], cur[1] / 2, cur[2] / 2};
  }
  for (std::size_t i = 0; i < n_linear; ++i) {
    const bool last = i + 1 == n_linear;
    const std::size_t out = last ? std::uniform_int_distribution<std::size_t>(2, 5)(rng) : feat(rng);
    LayerParams params;
    params.weight = random_quant(rng, Shape{out, cur.numel()}, 0.02);
    if (coin(rng)) params.bias = random_quant(rng, Shape{out}, 0.01);
    push(make_layer(LinearLayer{cur.numel(), out}, "fc" + std::to_string(i),
                    coin(rng) ? std::optional<double>(0.05) : std::nullopt),
         std::move(params));
    if (!last) push(make_layer(ReluLayer{}, "fc_relu" + std::to_string(i)));
    push(make_layer(DropoutSite{p}, "fc_drop" + std::to_string(i)));
    cur = Shape{out};
  }
  net.validate();
  return net;
}

// Exact integer convolution by direct nested loops over (f, y, x, c, ky, kx).
inline std::vector<std::int64_t> naive_conv(const std::vector<std::int8_t>& in, std::size_t C, std::size_t H,
                                            std::size_t W, const std::vector<std::int8_t>& w, std::size_t F,
                                            std::size_t K, std::size_t stride, std::size_t pad,
                                            std::size_t* Ho, std::size_t* Wo) {
  *Ho = (H + 2 * pad - K) / stride + 1;
  *Wo = (W + 2 * pad - K) / stride + 1;
  std::vector<std::int64_t> out(F * *Ho * *Wo, 0);
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t y = 0; y < *Ho; ++y)
      for (std::size_t x = 0; x < *Wo; ++x) {
        std::int64_t acc = 0;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t ky = 0; ky < K; ++ky)
            for (std::size_t kx = 0; kx < K; ++kx) {
              const long iy = static_cast<long>(y * stride + ky) - static_cast<long>(pad);
              const long ix = static_cast<long>(x * stride + kx) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
              acc += std::int64_t{in[(c * H + iy) * W + ix]} * w[((f * C + c) * K + ky) * K + kx];
            }
        out[(f * *Ho + y) * *Wo + x] = acc;
      }
  return out;
}

}  // namespace mcdsim::testing
