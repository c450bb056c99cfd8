#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace mcdsim {

/// Dimensions of a tensor. Feature maps are {C, H, W}, conv weights
/// {F, C, K, K}, linear weights {F, C}, vectors {n}.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t operator[](std::size_t i) const { return dims_.at(i); }
  std::size_t numel() const { return numel_; }

  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  void validate();

  std::vector<std::size_t> dims_;
  std::size_t numel_ = 0;
};

struct FloatTensor {
  Shape shape;
  std::vector<double> data;

  FloatTensor() = default;
  FloatTensor(Shape s, std::vector<double> values);
  explicit FloatTensor(Shape s);
};

/// Symmetric per-tensor int8 tensor: real value = data[i] * scale.
struct QuantTensor {
  Shape shape;
  std::vector<std::int8_t> data;
  double scale = 1.0;
  std::int32_t zero_point = 0;

  QuantTensor() = default;
  QuantTensor(Shape s, std::vector<std::int8_t> values, double scale);
  QuantTensor(Shape s, double scale);

  friend bool operator==(const QuantTensor&, const QuantTensor&) = default;
};

inline constexpr std::int32_t kQMax = 127;
inline constexpr std::int32_t kQMin = -127;

/// Round half away from zero, independent of the floating-point rounding mode.
double round_half_away(double v);

/// Saturate to the symmetric int8 range [-127, 127].
std::int8_t saturate_int8(double v);
std::int8_t saturate_int8(std::int64_t v);

/// q = clamp(round(x / scale), -127, 127). Throws on scale <= 0 or a
/// non-finite element (the message names the flat index).
QuantTensor quantize(const FloatTensor& x, double scale);
FloatTensor dequantize(const QuantTensor& q);

/// max|x| / 127 over the finite elements, or 1.0 when that maximum is zero.
double choose_scale(std::span<const double> values);
double choose_scale(const FloatTensor& x);

}  // namespace mcdsim
