#include "flpl/defenses/defenses.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "flpl/common/rng.h"

namespace flpl::defenses {

GradientVector Compress(const GradientVector& g, double epsilon) {
  if (!(epsilon >= 0.0)) throw DefenseError("Compress: epsilon must be >= 0");
  GradientVector out = g;
  for (double& v : out.values) {
    if (!(std::abs(v) > epsilon)) v = 0.0;
  }
  return out;
}

double PruneRatio(const GradientVector& g) {
  if (g.values.empty()) throw DefenseError("PruneRatio: empty gradient");
  const auto zeros = std::count(g.values.begin(), g.values.end(), 0.0);
  return static_cast<double>(zeros) / static_cast<double>(g.values.size());
}

double EpsilonForRatio(const GradientVector& g, double target_ratio) {
  if (!(target_ratio >= 0.0 && target_ratio <= 1.0)) {
    throw DefenseError("EpsilonForRatio: target ratio must lie in [0, 1]");
  }
  const size_t n = g.values.size();
  const auto k = static_cast<size_t>(std::ceil(target_ratio * static_cast<double>(n)));
  if (k == 0 || n == 0) return 0.0;
  std::vector<double> mags(n);
  std::transform(g.values.begin(), g.values.end(), mags.begin(),
                 [](double v) { return std::abs(v); });
  std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(k - 1), mags.end());
  return mags[k - 1];
}

GradientVector AddNoise(const GradientVector& g, double variance, uint64_t seed) {
  if (!(variance >= 0.0)) throw DefenseError("AddNoise: variance must be >= 0");
  GradientVector out = g;
  if (variance == 0.0) return out;
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, std::sqrt(variance));
  for (double& v : out.values) v += noise(rng.engine());
  return out;
}

void DefenseConfig::Validate() const {
  switch (mode) {
    case DefenseMode::kNone:
      return;
    case DefenseMode::kCompressEpsilon:
      if (!(epsilon >= 0.0)) throw DefenseError("defense: epsilon must be >= 0");
      return;
    case DefenseMode::kCompressRatio:
      if (!(target_ratio >= 0.0 && target_ratio <= 1.0)) {
        throw DefenseError("defense: target_ratio must lie in [0, 1]");
      }
      return;
    case DefenseMode::kNoise:
      if (!(variance >= 0.0)) throw DefenseError("defense: variance must be >= 0");
      return;
  }
}

std::string DefenseConfig::Label() const {
  std::ostringstream os;
  switch (mode) {
    case DefenseMode::kNone:
      return "none";
    case DefenseMode::kCompressEpsilon:
      os << "eps:" << epsilon;
      break;
    case DefenseMode::kCompressRatio:
      os << "prune:" << target_ratio;
      break;
    case DefenseMode::kNoise:
      os << "noise:" << variance;
      break;
  }
  return os.str();
}

GradientVector ApplyDefense(const GradientVector& g, const DefenseConfig& config) {
  config.Validate();
  switch (config.mode) {
    case DefenseMode::kNone:
      return g;
    case DefenseMode::kCompressEpsilon:
      return Compress(g, config.epsilon);
    case DefenseMode::kCompressRatio:
      return Compress(g, EpsilonForRatio(g, config.target_ratio));
    case DefenseMode::kNoise:
      return AddNoise(g, config.variance, config.seed);
  }
  return g;
}

DefenseMode ParseDefenseMode(const std::string& name) {
  if (name == "none") return DefenseMode::kNone;
  if (name == "compress_eps") return DefenseMode::kCompressEpsilon;
  if (name == "compress_ratio") return DefenseMode::kCompressRatio;
  if (name == "noise") return DefenseMode::kNoise;
  throw DefenseError("unknown defense mode '" + name +
                     "' (expected none, compress_eps, compress_ratio or noise)");
}

std::string DefenseModeName(DefenseMode mode) {
  switch (mode) {
    case DefenseMode::kNone:
      return "none";
    case DefenseMode::kCompressEpsilon:
      return "compress_eps";
    case DefenseMode::kCompressRatio:
      return "compress_ratio";
    case DefenseMode::kNoise:
      return "noise";
  }
  return "none";
}

}  // namespace flpl::defenses
