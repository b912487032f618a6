#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "flpl/autodiff/tensor.h"
#include "flpl/common/error.h"

namespace flpl::models {

enum class ModelKind { kClassifier, kSegmenter };

class ModelError : public Error {
 public:
  using Error::Error;
};

// Inputs [n, C, H, W] with either class indices [n] (classifier) or binary
// masks [n, 1, H, W] (segmenter). A batch is a small dataset.
struct Dataset {
  ModelKind kind = ModelKind::kClassifier;
  ad::Tensor inputs;
  ad::Tensor labels;

  int64_t size() const { return inputs.shape.empty() ? 0 : inputs.shape[0]; }
  Dataset Subset(std::span<const int64_t> indices) const;
  Dataset Slice(int64_t first, int64_t count) const;
  // Throws ModelError when leading dims disagree or masks are not binary.
  void Validate() const;
};
using Batch = Dataset;

// Hermetic stand-ins for image data.
//
// Classifier: 10 classes, each a Gaussian blob at a class-specific position on
// a ring, with small positional jitter and pixel noise, values in [0, 1].
// Labels are drawn uniformly.
//
// Segmenter: "normal maps" made of 2-4 Voronoi regions, each filled with the
// RGB encoding (n + 1) / 2 of a random upward-facing unit normal n. The mask
// marks region boundaries (a pixel whose right or lower neighbour lies in a
// different region).
Dataset SynthDataset(ModelKind kind, int64_t n, int size, uint64_t seed, int channels = 0);

// Splits into `count` disjoint equal-size shards; the remainder is dropped.
std::vector<Dataset> SplitShards(const Dataset& data, int count);

// Reads a CIFAR-10 binary batch (records of 1 label byte followed by 3072
// pixel bytes as R, G, B planes of 32x32). Pixels are scaled to [0, 1].
Dataset ReadCifar10Batch(const std::filesystem::path& path, int64_t max_records = -1);

}  // namespace flpl::models
