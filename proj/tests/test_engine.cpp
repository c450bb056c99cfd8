#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "mcdsim/engine.hpp"
#include "mcdsim/error.hpp"
#include "mcdsim/network_io.hpp"
#include "support.hpp"

using namespace mcdsim;
using mcdsim::testing::make_layer;
using mcdsim::testing::random_network;
using mcdsim::testing::random_quant;

namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mcdsim_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

MaskWord word(std::initializer_list<int> bits) {
  MaskWord w;
  for (int b : bits) w.bits.push_back(static_cast<std::uint8_t>(b));
  w.used = w.bits.size();
  return w;
}

// conv 1x28x28 -> 6 -> pool -> 16 -> pool -> fc120 -> fc84 -> fc10
Network lenet5() {
  std::mt19937_64 rng(5);
  Network net;
  auto& L = net.spec.layers;
  net.spec.input_shape = Shape{1, 28, 28};
  net.spec.input_scale = 1.0 / 127.0;
  auto add = [&](LayerSpec l, LayerParams p = {}) {
    L.push_back(std::move(l));
    net.params.push_back(std::move(p));
  };
  auto conv = [&](std::size_t c, std::size_t f, std::size_t k, std::size_t pad, const char* name) {
    LayerParams p;
    p.weight = random_quant(rng, Shape{f, c, k, k}, 0.01);
    p.bias = random_quant(rng, Shape{f}, 0.01);
    add(make_layer(ConvLayer{c, f, k, 1, pad}, name, 0.05), std::move(p));
  };
  auto fc = [&](std::size_t c, std::size_t f, const char* name) {
    LayerParams p;
    p.weight = random_quant(rng, Shape{f, c}, 0.01);
    add(make_layer(LinearLayer{c, f}, name, 0.05), std::move(p));
  };
  conv(1, 6, 5, 2, "conv1");
  add(make_layer(ReluLayer{}, "relu1"));
  add(make_layer(MaxPoolLayer{2, 2}, "pool1"));
  add(make_layer(DropoutSite{}, "drop1"));
  conv(6, 16, 5, 0, "conv2");
  add(make_layer(ReluLayer{}, "relu2"));
  add(make_layer(MaxPoolLayer{2, 2}, "pool2"));
  add(make_layer(DropoutSite{}, "drop2"));
  fc(400, 120, "fc1");
  add(make_layer(ReluLayer{}, "relu3"));
  add(make_layer(DropoutSite{}, "drop3"));
  fc(120, 84, "fc2");
  add(make_layer(ReluLayer{}, "relu4"));
  add(make_layer(DropoutSite{}, "drop4"));
  fc(84, 10, "fc3");
  add(make_layer(DropoutSite{}, "drop5"));
  net.validate();
  return net;
}

}  // namespace

TEST_CASE("conv accumulators equal the nested-loop reference") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    std::uniform_int_distribution<std::size_t> cf(1, 8), hw(3, 9), k(1, 3), st(1, 2), pd(0, 1);
    const std::size_t C = cf(rng), F = cf(rng), H = hw(rng), W = hw(rng), K = std::min({k(rng), H, W});
    const ConvLayer conv{C, F, K, st(rng), pd(rng)};
    const QuantTensor x = random_quant(rng, Shape{C, H, W}, 1.0);
    const QuantTensor w = random_quant(rng, Shape{F, C, K, K}, 1.0);
    std::size_t ho = 0, wo = 0, rho = 0, rwo = 0;
    const auto acc = conv_accumulate(conv, x, w, &ho, &wo);
    const auto ref = mcdsim::testing::naive_conv(x.data, C, H, W, w.data, F, K, conv.stride, conv.padding, &rho, &rwo);
    REQUIRE(ho == rho);
    REQUIRE(wo == rwo);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(acc[i] == ref[i]);
  }
}

TEST_CASE("apply_mcd fixed-point examples") {
  const QuantTensor y(Shape{3, 1, 1}, {3, 30, 100}, 1.0);
  const auto keep_all = word({1, 1, 1, 1});
  CHECK(apply_mcd(y, std::span(&keep_all, 1), 0.5).data == std::vector<std::int8_t>{6, 60, 127});
  CHECK(apply_mcd(y, std::span(&keep_all, 1), 0.25).data == std::vector<std::int8_t>{4, 40, 127});
  const auto drop_mid = word({1, 0, 1, 1});
  CHECK(apply_mcd(y, std::span(&drop_mid, 1), 0.5).data == std::vector<std::int8_t>{6, 0, 127});
  CHECK(mcd_keep_multiplier(0.25) == 341);
  CHECK(mcd_keep_multiplier(0.5) == 512);
  const auto short_word = word({1, 1});
  CHECK_THROWS_AS(apply_mcd(y, std::span(&short_word, 1), 0.5), Error);
}

TEST_CASE("masked filter zeroes its whole map") {
  std::mt19937_64 rng(2);
  const QuantTensor y = random_quant(rng, Shape{2, 4, 4}, 0.1);
  const auto w = word({0, 1});
  const QuantTensor out = apply_mcd(y, std::span(&w, 1), 0.25);
  for (std::size_t i = 0; i < 16; ++i) CHECK(out.data[i] == 0);
  CHECK(out.scale == y.scale);
}

TEST_CASE("MCD preserves the expectation") {
  // E[mask * y / (1 - p)] = y, up to the 8-bit multiplier rounding.
  SamplerConfig cfg;
  cfg.sipo_width = 8;
  cfg.seed = 9;
  BernoulliSampler sampler(cfg);
  const QuantTensor y(Shape{8}, {10, 20, 30, 40, 50, 60, 70, 80}, 1.0);
  std::vector<double> sum(8, 0.0);
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    const auto words = sampler.mask_stream_for_layer(8);
    const auto out = apply_mcd(y, words, 0.25);
    for (std::size_t j = 0; j < 8; ++j) sum[j] += out.data[j];
  }
  for (std::size_t j = 0; j < 8; ++j) CHECK(sum[j] / n == doctest::Approx(y.data[j]).epsilon(0.03));
}

TEST_CASE("active_from selects the trailing weight layers") {
  const Network net = lenet5();
  CHECK(net.spec.weight_layer_count() == 5);
  CHECK(active_from(net.spec, 5) == 0);
  CHECK(active_from(net.spec, 1) == 14);
  CHECK(active_from(net.spec, 3) == 8);
  CHECK_THROWS_AS(active_from(net.spec, 0), Error);
  CHECK_THROWS_AS(active_from(net.spec, 6), Error);
  CHECK(net.spec.out_shapes[7] == Shape{16, 5, 5});
  CHECK(net.spec.num_classes() == 10);
}

TEST_CASE("IC equals naive MCD and runs the prefix once") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const Network net = random_network(rng, 1 + trial % 5, trial % 2 == 1);
    const auto x = random_quant(rng, net.spec.input_shape, *net.spec.input_scale);
    for (std::size_t L = 1; L <= net.spec.weight_layer_count(); ++L) {
      const McdConfig cfg{L, 4, std::nullopt};
      SamplerConfig sc;
      sc.seed = trial;
      sc.sipo_width = 4;
      BernoulliSampler a(sc), b(sc);
      const auto naive = predict(net, x, cfg, a);
      const auto ic = predict_with_ic(net, x, cfg, b);
      REQUIRE(naive.per_sample.size() == ic.per_sample.size());
      for (std::size_t s = 0; s < 4; ++s) CHECK(naive.per_sample[s].probs == ic.per_sample[s].probs);
      CHECK(naive.mask_decisions == ic.mask_decisions);
      const std::size_t boundary = active_from(net.spec, L);
      for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
        CHECK(naive.layer_runs[i] == 4);
        CHECK(ic.layer_runs[i] == (i < boundary ? 1u : 4u));
      }
    }
  }
}

TEST_CASE("mean prediction is a distribution") {
  std::mt19937_64 rng(4);
  const Network net = random_network(rng, 3, true);
  const auto x = random_quant(rng, net.spec.input_shape, *net.spec.input_scale);
  SamplerConfig sc;
  BernoulliSampler s(sc);
  const auto r = predict(net, x, {3, 10, std::nullopt}, s);
  double total = 0.0;
  for (double p : r.mean_probs) {
    CHECK(p >= 0.0);
    total += p;
  }
  CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("sampler p must match the sites") {
  std::mt19937_64 rng(8);
  const Network net = random_network(rng, 2, false, 0.25);
  const auto x = random_quant(rng, net.spec.input_shape, *net.spec.input_scale);
  BernoulliSampler half = make_sampler(0.5, 64, 16, 0);
  CHECK_THROWS_AS(predict(net, x, {2, 2, std::nullopt}, half), Error);
  CHECK_NOTHROW(predict(net, x, {2, 2, 0.5}, half));
  CHECK(effective_dropout_p(net.spec, std::nullopt) == 0.25);
}

TEST_CASE("IC cache budget") {
  const Network net = lenet5();
  std::mt19937_64 rng(1);
  const auto x = random_quant(rng, net.spec.input_shape, *net.spec.input_scale);
  CHECK(ic_cache_bits(net.spec, 3) == 16 * 5 * 5 * 8);
  CHECK(ic_cache_bits(net.spec, 5) == 28 * 28 * 8);
  BernoulliSampler s = make_sampler(0.25, 64, 16, 0);
  const auto warned = predict_with_ic(net, x, {3, 2, std::nullopt}, s, {100, false});
  CHECK(warned.warnings.size() == 1);
  CHECK_THROWS_AS(predict_with_ic(net, x, {3, 2, std::nullopt}, s, {100, true}), Error);
}

TEST_CASE("shortcut cache includes prefix sources") {
  NetworkSpec spec;
  spec.input_shape = Shape{2, 4, 4};
  spec.layers.push_back(make_layer(ConvLayer{2, 2, 3, 1, 1}, "c0"));
  spec.layers.push_back(make_layer(ConvLayer{2, 2, 3, 1, 1}, "c1"));
  spec.layers.push_back(make_layer(ShortcutLayer{-1}, "add"));
  spec.layers.push_back(make_layer(DropoutSite{}, "d"));
  spec.validate();
  CHECK(ic_cache_bits(spec, 1) == 2 * 32 * 8);
  CHECK(ic_cache_bits(spec, 2) == 32 * 8);
}

TEST_CASE("structural validation names the layer") {
  NetworkSpec spec;
  spec.input_shape = Shape{1, 4, 4};
  spec.layers.push_back(make_layer(ReluLayer{}, "r"));
  spec.layers.push_back(make_layer(DropoutSite{}, "d"));
  try {
    spec.validate();
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
  }
  NetworkSpec bad;
  bad.input_shape = Shape{3, 4, 4};
  bad.layers.push_back(make_layer(ConvLayer{2, 4, 3, 1, 0}, "c"));
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("batch norm and pools") {
  const LayerSpec bn = make_layer(BatchNormLayer{{2.0, 0.5}, {0.0, 1.0}}, "bn");
  const QuantTensor x(Shape{2, 1, 2}, {10, -10, 20, 40}, 0.1);
  const QuantTensor y = run_layer(bn, {}, x);
  CHECK(y.data == std::vector<std::int8_t>{20, -20, 20, 30});
  const QuantTensor pm = run_layer(make_layer(MaxPoolLayer{2, 2}, "p"), {},
                                   QuantTensor(Shape{1, 2, 2}, {1, -5, 7, 3}, 1.0));
  CHECK(pm.data == std::vector<std::int8_t>{7});
  const QuantTensor pa = run_layer(make_layer(AvgPoolLayer{2, 2}, "p"), {},
                                   QuantTensor(Shape{1, 2, 2}, {1, 2, 3, 4}, 1.0));
  CHECK(pa.data == std::vector<std::int8_t>{3});
  const QuantTensor r = run_layer(make_layer(ReluLayer{}, "r"), {}, QuantTensor(Shape{3}, {-3, 0, 5}, 1.0));
  CHECK(r.data == std::vector<std::int8_t>{0, 0, 5});
}

TEST_CASE("manifest round trip keeps behavior") {
  const Network net = lenet5();
  const fs::path dir = scratch_dir("lenet");
  const fs::path manifest = save_network(net, dir);
  const Network back = load_network(manifest);
  CHECK(back.spec.weight_layer_count() == 5);
  CHECK(back.spec.layers.size() == net.spec.layers.size());
  for (std::size_t i = 0; i < net.params.size(); ++i) {
    CHECK(back.params[i].weight == net.params[i].weight);
    CHECK(back.params[i].bias == net.params[i].bias);
  }
  std::mt19937_64 rng(3);
  const auto x = random_quant(rng, net.spec.input_shape, *net.spec.input_scale);
  BernoulliSampler a = make_sampler(0.25, 64, 16, 1), b = make_sampler(0.25, 64, 16, 1);
  CHECK(predict(net, x, {5, 3, std::nullopt}, a).mean_probs == predict(back, x, {5, 3, std::nullopt}, b).mean_probs);
}

TEST_CASE("manifest loader errors") {
  const fs::path dir = scratch_dir("bad");
  auto write = [&](const std::string& text) {
    std::ofstream(dir / "manifest.json") << text;
    return dir / "manifest.json";
  };
  auto message = [](const fs::path& p) {
    try {
      load_network(p);
    } catch (const Error& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message(dir / "missing.json").find("missing.json") != std::string::npos);
  CHECK(message(write("{\n  \"format\": \"mcdsim-manifest\",\n  oops\n}")).find("line 3") != std::string::npos);
  CHECK(message(write(R"({"format":"mcdsim-manifest","version":1,"input_shape":[4],"layers":[{"type":"warp"}]})"))
            .find("layer 0") != std::string::npos);
  CHECK(message(write(R"({"format":"mcdsim-manifest","version":1,"input_shape":[4],
      "tensors":[{"name":"w","shape":[2,4],"file":"w.bin"}],
      "layers":[{"type":"linear","in_features":4,"out_features":2,"weight":"w"}]})"))
            .find("w.bin") != std::string::npos);
  {
    std::ofstream(dir / "w.bin", std::ios::binary) << "abc";
  }
  CHECK(message(dir / "manifest.json").find("bytes") != std::string::npos);
}

TEST_CASE("float network quantization") {
  std::mt19937_64 rng(6);
  FloatNetwork fnet;
  fnet.spec.input_shape = Shape{4};
  fnet.spec.layers.push_back(make_layer(LinearLayer{4, 3}, "fc"));
  fnet.spec.layers.push_back(make_layer(DropoutSite{}, "d"));
  FloatLayerParams p;
  p.weight = mcdsim::testing::random_float(rng, Shape{3, 4});
  p.bias = mcdsim::testing::random_float(rng, Shape{3});
  fnet.params = {p, {}};
  fnet.validate();
  CHECK_THROWS_AS(quantize_network(fnet, {}), Error);
  std::vector<FloatTensor> calib;
  for (int i = 0; i < 16; ++i) calib.push_back(mcdsim::testing::random_float(rng, Shape{4}));
  const Network q = quantize_network(fnet, calib);
  REQUIRE(q.spec.input_scale.has_value());
  REQUIRE(q.spec.layers[0].out_scale.has_value());
  // Quantized logits track the float ones.
  const auto ref = float_forward(fnet, calib[0]).front();
  const auto out = dequantize(run_layer(q.spec.layers[0], q.params[0], quantize_input(q.spec, calib[0])));
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(out.data[i] - ref.data[i]) < 0.05);
}

TEST_CASE("quantized weights round trip within half a step") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    FloatNetwork fnet;
    fnet.spec.input_shape = Shape{2, 5, 5};
    fnet.spec.layers.push_back(make_layer(ConvLayer{2, 3, 3, 1, 1}, "c"));
    fnet.spec.layers.push_back(make_layer(LinearLayer{75, 4}, "fc"));
    FloatLayerParams c, f;
    c.weight = mcdsim::testing::random_float(rng, Shape{3, 2, 3, 3}, -2, 2);
    f.weight = mcdsim::testing::random_float(rng, Shape{4, 75}, -0.3, 0.3);
    f.bias = mcdsim::testing::random_float(rng, Shape{4});
    fnet.params = {c, f};
    fnet.validate();
    const Network q = quantize_network(fnet, std::vector{mcdsim::testing::random_float(rng, Shape{2, 5, 5})});
    for (std::size_t i = 0; i < 2; ++i) {
      for (const auto& [orig, quant] : {std::pair{fnet.params[i].weight, q.params[i].weight},
                                        std::pair{fnet.params[i].bias, q.params[i].bias}}) {
        if (!orig) continue;
        const FloatTensor back = dequantize(*quant);
        for (std::size_t k = 0; k < back.data.size(); ++k) {
          CHECK(std::abs(back.data[k] - orig->data[k]) <= quant->scale / 2 + 1e-12);
        }
      }
    }
  }
}

TEST_CASE("all-zero float model quantizes to unit scales") {
  FloatNetwork fnet;
  fnet.spec.input_shape = Shape{3};
  fnet.spec.layers.push_back(make_layer(LinearLayer{3, 2}, "fc"));
  FloatLayerParams p;
  p.weight = FloatTensor(Shape{2, 3});
  p.bias = FloatTensor(Shape{2});
  fnet.params = {p};
  fnet.validate();
  const Network q = quantize_network(fnet, std::vector{FloatTensor(Shape{3})});
  CHECK(q.params[0].weight->scale == 1.0);
  CHECK(q.params[0].bias->scale == 1.0);
  CHECK(*q.spec.input_scale == 1.0);
  CHECK(*q.spec.layers[0].out_scale == 1.0);
  for (auto v : q.params[0].weight->data) CHECK(v == 0);
}
