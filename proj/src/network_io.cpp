#include "mcdsim/network_io.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "mcdsim/error.hpp"
#include "mcdsim/tensor_io.hpp"

namespace mcdsim {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFormat = "mcdsim-manifest";

struct TensorEntry {
  Shape shape;
  double scale = 1.0;
  fs::path file;
};

json parse_manifest(const fs::path& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(path.string() + ": parse error at " + describe_text_position(text, e.byte));
  }
}

std::size_t get_size(const json& j, const char* key, std::size_t fallback, bool required) {
  if (!j.contains(key)) {
    if (required) throw Error(std::string("missing field \"") + key + "\"");
    return fallback;
  }
  const auto v = j.at(key).get<long long>();
  if (v < 0) throw Error(std::string("field \"") + key + "\" must be nonnegative");
  return static_cast<std::size_t>(v);
}

LayerSpec parse_layer(const json& j) {
  LayerSpec layer;
  const std::string type = j.at("type").get<std::string>();
  layer.name = j.value("name", std::string());
  if (j.contains("out_scale")) layer.out_scale = j.at("out_scale").get<double>();
  if (type == "conv") {
    layer.op = ConvLayer{get_size(j, "in_channels", 0, true), get_size(j, "filters", 0, true),
                         get_size(j, "kernel", 0, true), get_size(j, "stride", 1, false),
                         get_size(j, "padding", 0, false)};
  } else if (type == "linear") {
    layer.op = LinearLayer{get_size(j, "in_features", 0, true), get_size(j, "out_features", 0, true)};
  } else if (type == "batchnorm") {
    BatchNormLayer bn;
    if (j.contains("scale")) {
      bn.scale = j.at("scale").get<std::vector<double>>();
      bn.shift = j.at("shift").get<std::vector<double>>();
    } else {
      // Fold inference statistics: y = gamma * (x - mean) / sqrt(var + eps) + beta.
      const auto gamma = j.at("gamma").get<std::vector<double>>();
      const auto beta = j.at("beta").get<std::vector<double>>();
      const auto mean = j.at("mean").get<std::vector<double>>();
      const auto var = j.at("var").get<std::vector<double>>();
      const double eps = j.value("eps", 1e-5);
      if (beta.size() != gamma.size() || mean.size() != gamma.size() || var.size() != gamma.size()) {
        throw Error("batchnorm statistics have mismatched lengths");
      }
      for (std::size_t c = 0; c < gamma.size(); ++c) {
        const double s = gamma[c] / std::sqrt(var[c] + eps);
        bn.scale.push_back(s);
        bn.shift.push_back(beta[c] - s * mean[c]);
      }
    }
    layer.op = std::move(bn);
  } else if (type == "relu") {
    layer.op = ReluLayer{};
  } else if (type == "maxpool") {
    layer.op = MaxPoolLayer{get_size(j, "window", 2, false), get_size(j, "stride", 2, false)};
  } else if (type == "avgpool") {
    layer.op = AvgPoolLayer{get_size(j, "window", 2, false), get_size(j, "stride", 2, false)};
  } else if (type == "shortcut") {
    layer.op = ShortcutLayer{j.at("from").get<int>()};
  } else if (type == "dropout") {
    layer.op = DropoutSite{j.value("p", 0.25)};
  } else {
    throw Error("unknown layer type \"" + type + "\"");
  }
  return layer;
}

json layer_to_json(const LayerSpec& layer) {
  json j;
  j["type"] = to_string(layer.kind());
  if (!layer.name.empty()) j["name"] = layer.name;
  switch (layer.kind()) {
    case LayerKind::Conv: {
      const auto& c = layer.as<ConvLayer>();
      j["in_channels"] = c.in_channels;
      j["filters"] = c.filters;
      j["kernel"] = c.kernel;
      j["stride"] = c.stride;
      j["padding"] = c.padding;
      break;
    }
    case LayerKind::Linear:
      j["in_features"] = layer.as<LinearLayer>().in_features;
      j["out_features"] = layer.as<LinearLayer>().out_features;
      break;
    case LayerKind::BatchNorm:
      j["scale"] = layer.as<BatchNormLayer>().scale;
      j["shift"] = layer.as<BatchNormLayer>().shift;
      break;
    case LayerKind::ReLU: break;
    case LayerKind::MaxPool:
      j["window"] = layer.as<MaxPoolLayer>().window;
      j["stride"] = layer.as<MaxPoolLayer>().stride;
      break;
    case LayerKind::AvgPool:
      j["window"] = layer.as<AvgPoolLayer>().window;
      j["stride"] = layer.as<AvgPoolLayer>().stride;
      break;
    case LayerKind::Shortcut: j["from"] = layer.as<ShortcutLayer>().source; break;
    case LayerKind::DropoutSite: j["p"] = layer.as<DropoutSite>().p; break;
  }
  if (layer.out_scale) j["out_scale"] = *layer.out_scale;
  return j;
}

std::string layer_tensor_name(const LayerSpec& layer, std::size_t index, const char* role) {
  const std::string base = layer.name.empty() ? "layer" + std::to_string(index) : layer.name;
  return base + "." + role;
}

// Shared skeleton of both loaders; `read_tensor` turns an entry into a tensor.
template <class Net, class Params, class ReadTensor>
Net load_generic(const fs::path& manifest, const std::string& expected_dtype, ReadTensor read_tensor) {
  const json j = parse_manifest(manifest);
  const std::string ctx = manifest.string();
  Net net;
  try {
    if (j.value("format", std::string()) != kFormat) throw Error("not an " + std::string(kFormat) + " document");
    const std::string dtype = j.value("dtype", std::string("int8"));
    if (dtype != expected_dtype) throw Error("dtype \"" + dtype + "\", expected \"" + expected_dtype + "\"");
    net.spec.input_shape = Shape(j.at("input_shape").get<std::vector<std::size_t>>());
    if (j.contains("input_scale")) net.spec.input_scale = j.at("input_scale").get<double>();

    std::map<std::string, TensorEntry> tensors;
    for (const auto& t : j.value("tensors", json::array())) {
      const std::string name = t.at("name").get<std::string>();
      TensorEntry e{Shape(t.at("shape").get<std::vector<std::size_t>>()), t.value("scale", 1.0),
                    manifest.parent_path() / t.at("file").get<std::string>()};
      if (!tensors.emplace(name, std::move(e)).second) throw Error("duplicate tensor \"" + name + "\"");
    }

    const auto& layers = j.at("layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      try {
        net.spec.layers.push_back(parse_layer(layers[i]));
        Params p;
        for (const char* role : {"weight", "bias"}) {
          if (!layers[i].contains(role)) continue;
          const std::string name = layers[i].at(role).get<std::string>();
          const auto it = tensors.find(name);
          if (it == tensors.end()) throw Error("references unknown tensor \"" + name + "\"");
          (std::string(role) == "weight" ? p.weight : p.bias) = read_tensor(it->second);
        }
        net.params.push_back(std::move(p));
      } catch (const Error& e) {
        throw Error("layer " + std::to_string(i) + ": " + e.what());
      } catch (const json::exception& e) {
        throw Error("layer " + std::to_string(i) + ": " + e.what());
      }
    }
    net.validate();
  } catch (const json::exception& e) {
    throw Error(ctx + ": " + e.what());
  } catch (const Error& e) {
    throw Error(ctx + ": " + e.what());
  }
  return net;
}

template <class Net, class WriteTensor>
fs::path save_generic(const Net& net, const fs::path& dir, const char* dtype, WriteTensor write_tensor) {
  fs::create_directories(dir);
  json j;
  j["format"] = kFormat;
  j["version"] = 1;
  j["dtype"] = dtype;
  j["input_shape"] = net.spec.input_shape.dims();
  if (net.spec.input_scale) j["input_scale"] = *net.spec.input_scale;
  json tensors = json::array();
  json layers = json::array();
  for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
    json lj = layer_to_json(net.spec.layers[i]);
    const auto emit = [&](const auto& tensor, const char* role) {
      const std::string name = layer_tensor_name(net.spec.layers[i], i, role);
      const std::string file = name + ".bin";
      json tj = {{"name", name}, {"shape", tensor.shape.dims()}, {"file", file}};
      write_tensor(tensor, dir / file, tj);
      tensors.push_back(std::move(tj));
      lj[role] = name;
    };
    if (net.params[i].weight) emit(*net.params[i].weight, "weight");
    if (net.params[i].bias) emit(*net.params[i].bias, "bias");
    layers.push_back(std::move(lj));
  }
  j["tensors"] = std::move(tensors);
  j["layers"] = std::move(layers);
  const fs::path path = dir / "manifest.json";
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  return path;
}

}  // namespace

Network load_network(const fs::path& manifest) {
  return load_generic<Network, LayerParams>(manifest, "int8", [](const TensorEntry& e) {
    if (!(e.scale > 0.0)) throw Error(e.file.string() + ": tensor scale must be positive");
    return QuantTensor(e.shape, read_int8_blob(e.file, e.shape.numel()), e.scale);
  });
}

FloatNetwork load_float_network(const fs::path& manifest) {
  return load_generic<FloatNetwork, FloatLayerParams>(manifest, "float32", [](const TensorEntry& e) {
    return FloatTensor(e.shape, read_float32_blob(e.file, e.shape.numel()));
  });
}

fs::path save_network(const Network& net, const fs::path& dir) {
  return save_generic(net, dir, "int8", [](const QuantTensor& t, const fs::path& file, json& tj) {
    tj["scale"] = t.scale;
    write_int8_blob(file, t.data);
  });
}

fs::path save_float_network(const FloatNetwork& net, const fs::path& dir) {
  return save_generic(net, dir, "float32", [](const FloatTensor& t, const fs::path& file, json&) {
    write_float32_blob(file, t.data);
  });
}

}  // namespace mcdsim
