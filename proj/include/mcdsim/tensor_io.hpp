#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcdsim/tensor.hpp"

namespace mcdsim {

/// Raw row-major little-endian payloads, one tensor per file.
std::vector<std::int8_t> read_int8_blob(const std::filesystem::path& path, std::size_t count);
void write_int8_blob(const std::filesystem::path& path, std::span<const std::int8_t> data);
std::vector<double> read_float32_blob(const std::filesystem::path& path, std::size_t count);
void write_float32_blob(const std::filesystem::path& path, std::span<const double> data);

/// A list of float input tensors with optional class labels, stored as JSON:
///   {"tensors": [{"shape": [...], "data": [...]}, ...], "targets": [...]}
/// A single bare {"shape", "data"} object is read as a one-element set.
struct TensorSet {
  std::vector<FloatTensor> tensors;
  std::optional<std::vector<int>> targets;
};

TensorSet read_tensor_set(const std::filesystem::path& path);
void write_tensor_set(const std::filesystem::path& path, const TensorSet& set);

/// Turns a JSON parse failure at a byte offset into a "line L, column C" note.
std::string describe_text_position(const std::string& text, std::size_t byte_offset);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace mcdsim
