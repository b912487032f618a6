#include "flpl/autodiff/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace flpl::ad {

int64_t NumElements(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string ShapeToString(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

ShapeError::ShapeError(std::string_view op, const Shape& a)
    : Error(std::string(op) + ": invalid shape " + ShapeToString(a)) {}

ShapeError::ShapeError(std::string_view op, const Shape& a, const Shape& b)
    : Error(std::string(op) + ": shape mismatch " + ShapeToString(a) + " vs " +
            ShapeToString(b)) {}

ShapeError::ShapeError(std::string_view op, std::string_view detail)
    : Error(std::string(op) + ": " + std::string(detail)) {}

Tensor::Tensor(Shape s) : shape(std::move(s)) {
  for (int64_t d : shape) {
    if (d < 0) throw ShapeError("Tensor", shape);
  }
  data.assign(static_cast<size_t>(NumElements(shape)), 0.0);
}

Tensor::Tensor(Shape s, std::vector<double> values)
    : shape(std::move(s)), data(std::move(values)) {
  if (NumElements(shape) != static_cast<int64_t>(data.size())) {
    throw ShapeError("Tensor", "shape " + ShapeToString(shape) + " holds " +
                                   std::to_string(NumElements(shape)) +
                                   " elements but " +
                                   std::to_string(data.size()) + " given");
  }
}

Tensor Tensor::Scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::Full(const Shape& s, double v) {
  Tensor t(s);
  std::fill(t.data.begin(), t.data.end(), v);
  return t;
}

double Tensor::item() const {
  if (data.size() != 1) throw ShapeError("item", shape);
  return data[0];
}

bool Tensor::AllFinite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace flpl::ad
