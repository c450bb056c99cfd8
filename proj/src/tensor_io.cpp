#include "mcdsim/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "mcdsim/error.hpp"

namespace mcdsim {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "blob readers assume a little-endian host");

namespace {

std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const void* data, std::size_t n) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw Error("short write to " + path.string());
}

}  // namespace

std::vector<std::int8_t> read_int8_blob(const fs::path& path, std::size_t count) {
  const auto bytes = read_bytes(path);
  if (bytes.size() != count) {
    throw Error(path.string() + ": expected " + std::to_string(count) + " bytes, found " +
                std::to_string(bytes.size()));
  }
  std::vector<std::int8_t> out(count);
  std::memcpy(out.data(), bytes.data(), count);
  return out;
}

void write_int8_blob(const fs::path& path, std::span<const std::int8_t> data) {
  write_bytes(path, data.data(), data.size());
}

std::vector<double> read_float32_blob(const fs::path& path, std::size_t count) {
  const auto bytes = read_bytes(path);
  if (bytes.size() != count * sizeof(float)) {
    throw Error(path.string() + ": expected " + std::to_string(count * sizeof(float)) +
                " bytes, found " + std::to_string(bytes.size()));
  }
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    float f;
    std::memcpy(&f, bytes.data() + i * sizeof(float), sizeof(float));
    out[i] = f;
  }
  return out;
}

void write_float32_blob(const fs::path& path, std::span<const double> data) {
  std::vector<float> f(data.begin(), data.end());
  write_bytes(path, f.data(), f.size() * sizeof(float));
}

std::string read_text_file(const fs::path& path) {
  const auto bytes = read_bytes(path);
  return {bytes.begin(), bytes.end()};
}

std::string describe_text_position(const std::string& text, std::size_t byte_offset) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < text.size() && i + 1 < byte_offset; ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

namespace {

FloatTensor tensor_from_json(const json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("shape") || !j.contains("data")) {
    throw Error(where + ": tensor needs \"shape\" and \"data\"");
  }
  Shape shape(j.at("shape").get<std::vector<std::size_t>>());
  auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != shape.numel()) {
    throw Error(where + ": data length " + std::to_string(data.size()) + " does not match shape " +
                shape.str());
  }
  return FloatTensor(std::move(shape), std::move(data));
}

}  // namespace

TensorSet read_tensor_set(const fs::path& path) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(path.string() + ": parse error at " + describe_text_position(text, e.byte));
  }
  TensorSet set;
  try {
    if (j.contains("tensors")) {
      const auto& arr = j.at("tensors");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        set.tensors.push_back(tensor_from_json(arr[i], path.string() + " tensor " + std::to_string(i)));
      }
    } else {
      set.tensors.push_back(tensor_from_json(j, path.string()));
    }
    if (j.contains("targets")) {
      set.targets = j.at("targets").get<std::vector<int>>();
      if (set.targets->size() != set.tensors.size()) {
        throw Error(path.string() + ": targets count does not match tensors count");
      }
    }
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
  if (set.tensors.empty()) throw Error(path.string() + ": no tensors");
  return set;
}

void write_tensor_set(const fs::path& path, const TensorSet& set) {
  json arr = json::array();
  for (const auto& t : set.tensors) arr.push_back({{"shape", t.shape.dims()}, {"data", t.data}});
  json j = {{"tensors", arr}};
  if (set.targets) j["targets"] = *set.targets;
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump() << '\n';
}

}  // namespace mcdsim
