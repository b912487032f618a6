#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "flpl/autodiff/tensor.h"

namespace flpl {

struct ParamEntry {
  std::string name;
  ad::Shape shape;
  int64_t offset = 0;

  int64_t size() const { return ad::NumElements(shape); }
  bool operator==(const ParamEntry&) const = default;
};

// Ordered (name, shape, offset) records describing how a flat vector splits
// into parameter tensors. Offsets are contiguous and non-overlapping.
class ParamLayout {
 public:
  void Add(std::string name, ad::Shape shape);

  const std::vector<ParamEntry>& entries() const { return entries_; }
  int64_t size() const { return size_; }
  bool operator==(const ParamLayout&) const = default;

 private:
  std::vector<ParamEntry> entries_;
  int64_t size_ = 0;
};

// Flattened concatenation of all parameter gradients.
struct GradientVector {
  ParamLayout layout;
  std::vector<double> values;

  GradientVector() = default;
  GradientVector(ParamLayout l, std::vector<double> v);
  explicit GradientVector(std::vector<double> v);  // single anonymous entry

  int64_t size() const { return static_cast<int64_t>(values.size()); }
};

// Splits a flat vector into one tensor per layout entry.
std::vector<ad::Tensor> Unflatten(std::span<const double> values, const ParamLayout& layout);
std::vector<double> FlattenTensors(std::span<const ad::Tensor> tensors);

}  // namespace flpl
