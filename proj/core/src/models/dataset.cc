#include "flpl/models/dataset.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "flpl/common/rng.h"

namespace flpl::models {
namespace {

int64_t PerExample(const ad::Tensor& t) {
  return t.shape.empty() || t.shape[0] == 0 ? 0 : t.numel() / t.shape[0];
}

ad::Tensor Gather(const ad::Tensor& t, std::span<const int64_t> indices) {
  ad::Shape shape = t.shape;
  shape[0] = static_cast<int64_t>(indices.size());
  ad::Tensor out(shape);
  const int64_t per = PerExample(t);
  for (size_t k = 0; k < indices.size(); ++k) {
    const int64_t i = indices[k];
    if (i < 0 || i >= t.shape[0]) throw ModelError("Dataset: index out of range");
    std::copy_n(t.data.begin() + i * per, per, out.data.begin() + static_cast<int64_t>(k) * per);
  }
  return out;
}

Dataset MakeClassifierData(int64_t n, int size, int channels, Rng& rng) {
  Dataset d;
  d.kind = ModelKind::kClassifier;
  d.inputs = ad::Tensor({n, channels, size, size});
  d.labels = ad::Tensor({n});
  const double sigma = size / 8.0;
  const double radius = 0.3 * size;
  const double mid = size / 2.0;
  for (int64_t k = 0; k < n; ++k) {
    const int label = static_cast<int>(rng.UniformInt(10));
    d.labels[k] = label;
    const double angle = 2.0 * std::numbers::pi * label / 10.0;
    const double cx = mid + radius * std::cos(angle) + rng.Uniform(-1.0, 1.0);
    const double cy = mid + radius * std::sin(angle) + rng.Uniform(-1.0, 1.0);
    for (int c = 0; c < channels; ++c) {
      for (int i = 0; i < size; ++i) {
        for (int j = 0; j < size; ++j) {
          const double dy = i + 0.5 - cy, dx = j + 0.5 - cx;
          double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
          v += rng.Normal(0.0, 0.05);
          d.inputs[((k * channels + c) * size + i) * size + j] = std::clamp(v, 0.0, 1.0);
        }
      }
    }
  }
  return d;
}

using Normal3 = std::array<double, 3>;

Normal3 RandomUpwardNormal(Rng& rng) {
  for (;;) {
    Normal3 v{rng.Normal(), rng.Normal(), std::abs(rng.Normal())};
    const double len = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (len < 1e-6) continue;
    for (double& x : v) x /= len;
    return v;
  }
}

// Fills one segmenter example; returns false when the mask came out constant.
bool FillSegmenterExample(Dataset& d, int64_t k, int size, int channels, Rng& rng) {
  const int regions = 2 + static_cast<int>(rng.UniformInt(3));
  std::vector<std::pair<int, int>> seeds;
  while (static_cast<int>(seeds.size()) < regions) {
    std::pair<int, int> p{static_cast<int>(rng.UniformInt(size)),
                          static_cast<int>(rng.UniformInt(size))};
    if (std::find(seeds.begin(), seeds.end(), p) == seeds.end()) seeds.push_back(p);
  }
  std::vector<Normal3> normals;
  while (static_cast<int>(normals.size()) < regions) {
    Normal3 n = RandomUpwardNormal(rng);
    bool distinct = true;
    for (const Normal3& m : normals) {
      if (n[0] * m[0] + n[1] * m[1] + n[2] * m[2] > 0.95) distinct = false;
    }
    if (distinct) normals.push_back(n);
  }
  std::vector<int> region(static_cast<size_t>(size) * size);
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      int best = 0;
      int best_d = 1 << 30;
      for (int r = 0; r < regions; ++r) {
        const int di = i - seeds[r].first, dj = j - seeds[r].second;
        const int dist = di * di + dj * dj;
        if (dist < best_d) {
          best_d = dist;
          best = r;
        }
      }
      region[i * size + j] = best;
    }
  }
  int64_t ones = 0;
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      const int r = region[i * size + j];
      for (int c = 0; c < channels; ++c) {
        d.inputs[((k * channels + c) * size + i) * size + j] = 0.5 * (normals[r][c % 3] + 1.0);
      }
      const bool edge = (j + 1 < size && region[i * size + j + 1] != r) ||
                        (i + 1 < size && region[(i + 1) * size + j] != r);
      d.labels[(k * size + i) * size + j] = edge ? 1.0 : 0.0;
      ones += edge;
    }
  }
  return ones > 0 && ones < static_cast<int64_t>(size) * size;
}

}  // namespace

Dataset Dataset::Subset(std::span<const int64_t> indices) const {
  Dataset d;
  d.kind = kind;
  d.inputs = Gather(inputs, indices);
  d.labels = Gather(labels, indices);
  return d;
}

Dataset Dataset::Slice(int64_t first, int64_t count) const {
  std::vector<int64_t> idx(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) idx[i] = first + i;
  return Subset(idx);
}

void Dataset::Validate() const {
  if (inputs.rank() != 4) throw ModelError("Dataset: inputs must be [n, C, H, W], got " +
                                           ad::ShapeToString(inputs.shape));
  if (labels.shape.empty() || labels.shape[0] != inputs.shape[0]) {
    throw ModelError("Dataset: leading dims disagree: " + ad::ShapeToString(inputs.shape) +
                     " vs " + ad::ShapeToString(labels.shape));
  }
  if (kind == ModelKind::kSegmenter) {
    for (double v : labels.data) {
      if (v != 0.0 && v != 1.0) throw ModelError("Dataset: mask values must be 0 or 1");
    }
  }
}

Dataset SynthDataset(ModelKind kind, int64_t n, int size, uint64_t seed, int channels) {
  if (n < 1) throw ModelError("SynthDataset: n must be >= 1");
  if (size < 2) throw ModelError("SynthDataset: size must be >= 2");
  Rng rng(DeriveSeed(seed, 0x5e7d));
  if (kind == ModelKind::kClassifier) {
    return MakeClassifierData(n, size, channels > 0 ? channels : 1, rng);
  }
  const int ch = channels > 0 ? channels : 3;
  Dataset d;
  d.kind = ModelKind::kSegmenter;
  d.inputs = ad::Tensor({n, ch, size, size});
  d.labels = ad::Tensor({n, 1, size, size});
  for (int64_t k = 0; k < n; ++k) {
    while (!FillSegmenterExample(d, k, size, ch, rng)) {
    }
  }
  return d;
}

std::vector<Dataset> SplitShards(const Dataset& data, int count) {
  if (count < 1) throw ModelError("SplitShards: count must be >= 1");
  const int64_t per = data.size() / count;
  if (per < 1) throw ModelError("SplitShards: not enough examples for " + std::to_string(count) +
                                " shards");
  std::vector<Dataset> shards;
  for (int s = 0; s < count; ++s) shards.push_back(data.Slice(s * per, per));
  return shards;
}

Dataset ReadCifar10Batch(const std::filesystem::path& path, int64_t max_records) {
  constexpr int64_t kRecord = 3073;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("ReadCifar10Batch: cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() % kRecord != 0) {
    throw ModelError("ReadCifar10Batch: file size " + std::to_string(bytes.size()) +
                     " is not a multiple of 3073");
  }
  int64_t n = static_cast<int64_t>(bytes.size()) / kRecord;
  if (max_records >= 0) n = std::min(n, max_records);
  Dataset d;
  d.kind = ModelKind::kClassifier;
  d.inputs = ad::Tensor({n, 3, 32, 32});
  d.labels = ad::Tensor({n});
  for (int64_t k = 0; k < n; ++k) {
    const unsigned char* rec = bytes.data() + k * kRecord;
    if (rec[0] > 9) throw ModelError("ReadCifar10Batch: label out of range in record " +
                                     std::to_string(k));
    d.labels[k] = rec[0];
    for (int64_t p = 0; p < 3072; ++p) d.inputs[k * 3072 + p] = rec[1 + p] / 255.0;
  }
  return d;
}

}  // namespace flpl::models
