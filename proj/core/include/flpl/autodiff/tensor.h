#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include "flpl/common/error.h"

namespace flpl::ad {

using Shape = std::vector<int64_t>;

int64_t NumElements(const Shape& shape);
std::string ShapeToString(const Shape& shape);

// Raised when an op receives operands of incompatible shapes. The message
// names the op and every operand shape involved.
class ShapeError : public Error {
 public:
  ShapeError(std::string_view op, const Shape& a);
  ShapeError(std::string_view op, const Shape& a, const Shape& b);
  ShapeError(std::string_view op, std::string_view detail);
};

// Dense row-major tensor of doubles. An empty shape denotes a scalar.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() : data(1, 0.0) {}
  explicit Tensor(Shape s);
  Tensor(Shape s, std::vector<double> values);

  static Tensor Scalar(double v);
  static Tensor Zeros(const Shape& s) { return Tensor(s); }
  static Tensor Full(const Shape& s, double v);
  static Tensor Ones(const Shape& s) { return Full(s, 1.0); }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const { return shape.at(static_cast<size_t>(i)); }
  // Value of a single-element tensor.
  double item() const;

  double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  bool AllFinite() const;
};

}  // namespace flpl::ad
