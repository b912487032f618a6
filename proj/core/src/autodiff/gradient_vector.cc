#include "flpl/autodiff/gradient_vector.h"

namespace flpl {

void ParamLayout::Add(std::string name, ad::Shape shape) {
  ParamEntry e{std::move(name), std::move(shape), size_};
  size_ += e.size();
  entries_.push_back(std::move(e));
}

GradientVector::GradientVector(ParamLayout l, std::vector<double> v)
    : layout(std::move(l)), values(std::move(v)) {
  if (layout.size() != static_cast<int64_t>(values.size())) {
    throw ad::ShapeError("GradientVector", "layout describes " + std::to_string(layout.size()) +
                                               " values but " + std::to_string(values.size()) +
                                               " given");
  }
}

GradientVector::GradientVector(std::vector<double> v) : values(std::move(v)) {
  layout.Add("g", {static_cast<int64_t>(values.size())});
}

std::vector<ad::Tensor> Unflatten(std::span<const double> values, const ParamLayout& layout) {
  if (static_cast<int64_t>(values.size()) != layout.size()) {
    throw ad::ShapeError("Unflatten", "layout describes " + std::to_string(layout.size()) +
                                          " values but " + std::to_string(values.size()) +
                                          " given");
  }
  std::vector<ad::Tensor> out;
  out.reserve(layout.entries().size());
  for (const ParamEntry& e : layout.entries()) {
    auto first = values.begin() + e.offset;
    out.emplace_back(e.shape, std::vector<double>(first, first + e.size()));
  }
  return out;
}

std::vector<double> FlattenTensors(std::span<const ad::Tensor> tensors) {
  std::vector<double> out;
  for (const ad::Tensor& t : tensors) out.insert(out.end(), t.data.begin(), t.data.end());
  return out;
}

}  // namespace flpl
