#pragma once

#include <filesystem>

#include "mcdsim/engine.hpp"

namespace mcdsim {

/// Manifest reader/writer. A manifest is a JSON document:
///
///   {"format": "mcdsim-manifest", "version": 1, "dtype": "int8",
///    "input_shape": [C, H, W], "input_scale": s,
///    "tensors": [{"name", "shape", "scale", "file"}, ...],
///    "layers":  [{"type": "conv", "in_channels", "filters", "kernel",
///                 "stride", "padding", "weight", "bias", "out_scale"}, ...]}
///
/// Payload files are raw little-endian row-major arrays (int8, or float32
/// for "dtype": "float32" models) referenced relative to the manifest.
Network load_network(const std::filesystem::path& manifest);
FloatNetwork load_float_network(const std::filesystem::path& manifest);

/// Writes `<dir>/manifest.json` plus one `.bin` per tensor; returns the manifest path.
std::filesystem::path save_network(const Network& net, const std::filesystem::path& dir);
std::filesystem::path save_float_network(const FloatNetwork& net, const std::filesystem::path& dir);

}  // namespace mcdsim
