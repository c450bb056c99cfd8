#include <doctest.h>

#include <cmath>
#include <limits>

#include "mcdsim/error.hpp"
#include "mcdsim/tensor.hpp"

using namespace mcdsim;

TEST_CASE("shape numel and validation") {
  CHECK(Shape{2, 3, 4}.numel() == 24);
  CHECK(Shape{7}.str() == "[7]");
  CHECK_THROWS_AS(Shape({2, 0, 4}), Error);
  CHECK_THROWS_AS(Shape(std::vector<std::size_t>{}), Error);
}

TEST_CASE("round half away from zero") {
  CHECK(round_half_away(0.5) == 1.0);
  CHECK(round_half_away(-0.5) == -1.0);
  CHECK(round_half_away(2.5) == 3.0);
  CHECK(round_half_away(-2.5) == -3.0);
  CHECK(round_half_away(1.49) == 1.0);
}

TEST_CASE("quantize saturates symmetrically") {
  const FloatTensor x(Shape{6}, {0.0, 0.05, -0.05, 0.1, 100.0, -100.0});
  const QuantTensor q = quantize(x, 0.1);
  CHECK(q.zero_point == 0);
  CHECK(q.data == std::vector<std::int8_t>{0, 1, -1, 1, 127, -127});
  CHECK(saturate_int8(std::int64_t{-128}) == -127);
  CHECK(saturate_int8(std::int64_t{128}) == 127);
}

TEST_CASE("quantize rejects bad scales and non-finite values") {
  const FloatTensor x(Shape{3}, {0.0, std::numeric_limits<double>::quiet_NaN(), 1.0});
  CHECK_THROWS_AS(quantize(FloatTensor(Shape{1}, {1.0}), 0.0), Error);
  try {
    quantize(x, 1.0);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("index 1") != std::string::npos);
  }
}

TEST_CASE("choose_scale and dequantize round trip") {
  const FloatTensor x(Shape{4}, {-2.54, 1.0, 0.0, 2.0});
  const double s = choose_scale(x);
  CHECK(s == doctest::Approx(2.54 / 127.0));
  const FloatTensor y = dequantize(quantize(x, s));
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(y.data[i] - x.data[i]) <= s / 2 + 1e-12);
  CHECK(choose_scale(FloatTensor(Shape{2}, {0.0, 0.0})) == 1.0);
  CHECK(choose_scale(FloatTensor(Shape{2}, {INFINITY, -3.0})) == doctest::Approx(3.0 / 127.0));
}
