#pragma once

// Test-only oracles. Nothing here calls into the autodiff engine's gradient
// path; values are computed from forward evaluations only.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "flpl/common/rng.h"
#include "flpl/models/model.h"

namespace flpl::testing {

// Central differences of a scalar function of a flat vector.
inline std::vector<double> CentralDifference(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
    double h = 1e-5) {
  std::vector<double> g(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double fp = f(x);
    x[i] = saved - h;
    const double fm = f(x);
    x[i] = saved;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Largest elementwise |a - b| / max(|a|, |b|, floor). The floor keeps entries
// that are zero up to finite-difference noise from dominating.
inline double MaxRelativeError(const std::vector<double>& a, const std::vector<double>& b,
                               double floor = 1e-5) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

// A random small sequential classifier (at most `max_params` parameters) and
// a random batch for it.
struct RandomModelCase {
  models::ModelSpec spec;
  models::ModelParams params;
  models::Dataset batch;
};

inline RandomModelCase MakeRandomModelCase(uint64_t seed, int64_t max_params = 500) {
  Rng rng(seed);
  for (;;) {
    models::ModelSpec spec;
    spec.kind = models::ModelKind::kClassifier;
    const int channels = 1 + static_cast<int>(rng.UniformInt(2));
    const int size = 4 + static_cast<int>(rng.UniformInt(4));
    spec.input = {channels, size, size};
    spec.num_classes = 2 + static_cast<int>(rng.UniformInt(3));
    spec.init_std = 0.5;
    if (rng.UniformInt(2)) {
      const int kernel = 2 + static_cast<int>(rng.UniformInt(2));
      const int pad = static_cast<int>(rng.UniformInt(2));
      spec.layers.push_back(models::ConvLayer{1 + static_cast<int>(rng.UniformInt(3)), kernel, pad});
      spec.layers.push_back(models::SigmoidLayer{});
    }
    spec.layers.push_back(models::DenseLayer{2 + static_cast<int>(rng.UniformInt(5))});
    spec.layers.push_back(models::SigmoidLayer{});
    spec.layers.push_back(models::DenseLayer{spec.num_classes});
    if (spec.Layout().size() > max_params) continue;

    RandomModelCase c;
    c.params = models::InitParams(spec, rng.NextU64());
    const int64_t n = 1 + static_cast<int64_t>(rng.UniformInt(3));
    c.batch.kind = models::ModelKind::kClassifier;
    c.batch.inputs = ad::Tensor({n, channels, size, size});
    for (double& v : c.batch.inputs.data) v = rng.Uniform();
    c.batch.labels = ad::Tensor({n});
    for (double& v : c.batch.labels.data) v = static_cast<double>(rng.UniformInt(spec.num_classes));
    c.spec = std::move(spec);
    return c;
  }
}

}  // namespace flpl::testing
