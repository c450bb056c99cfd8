#include "mcdsim/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mcdsim/error.hpp"

namespace mcdsim {

Shape::Shape(std::initializer_list<std::size_t> dims) : dims_(dims) { validate(); }

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) { validate(); }

void Shape::validate() {
  if (dims_.empty()) throw Error("shape must have at least one dimension");
  std::size_t n = 1;
  for (std::size_t d : dims_) {
    if (d == 0) throw Error("shape " + str() + " has a zero dimension");
    if (n > std::numeric_limits<std::size_t>::max() / d) {
      throw Error("shape " + str() + " element count overflows");
    }
    n *= d;
  }
  numel_ = n;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << ',';
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

FloatTensor::FloatTensor(Shape s, std::vector<double> values)
    : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != shape.numel()) {
    throw Error("float tensor data length " + std::to_string(data.size()) +
                " does not match shape " + shape.str());
  }
}

FloatTensor::FloatTensor(Shape s) : shape(std::move(s)), data(shape.numel(), 0.0) {}

QuantTensor::QuantTensor(Shape s, std::vector<std::int8_t> values, double sc)
    : shape(std::move(s)), data(std::move(values)), scale(sc) {
  if (data.size() != shape.numel()) {
    throw Error("quant tensor data length " + std::to_string(data.size()) +
                " does not match shape " + shape.str());
  }
  if (!(scale > 0.0) || !std::isfinite(scale)) throw Error("quant tensor scale must be positive");
}

QuantTensor::QuantTensor(Shape s, double sc)
    : QuantTensor(s, std::vector<std::int8_t>(s.numel(), 0), sc) {}

double round_half_away(double v) { return std::round(v); }

std::int8_t saturate_int8(double v) {
  if (v >= kQMax) return static_cast<std::int8_t>(kQMax);
  if (v <= kQMin) return static_cast<std::int8_t>(kQMin);
  return static_cast<std::int8_t>(v);
}

std::int8_t saturate_int8(std::int64_t v) {
  return static_cast<std::int8_t>(std::clamp<std::int64_t>(v, kQMin, kQMax));
}

QuantTensor quantize(const FloatTensor& x, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw Error("quantize: scale must be positive");
  QuantTensor q(x.shape, scale);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double v = x.data[i];
    if (!std::isfinite(v)) {
      throw Error("quantize: non-finite element at flat index " + std::to_string(i));
    }
    q.data[i] = saturate_int8(round_half_away(v / scale));
  }
  return q;
}

FloatTensor dequantize(const QuantTensor& q) {
  FloatTensor x(q.shape);
  for (std::size_t i = 0; i < q.data.size(); ++i) x.data[i] = q.data[i] * q.scale;
  return x;
}

double choose_scale(std::span<const double> values) {
  if (values.empty()) throw Error("choose_scale: empty tensor");
  double max_abs = 0.0;
  bool any_finite = false;
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    any_finite = true;
    max_abs = std::max(max_abs, std::abs(v));
  }
  if (!any_finite) throw Error("choose_scale: tensor has no finite element");
  return max_abs == 0.0 ? 1.0 : max_abs / kQMax;
}

double choose_scale(const FloatTensor& x) { return choose_scale(std::span<const double>(x.data)); }

}  // namespace mcdsim
