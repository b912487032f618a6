#pragma once

#include <cstdint>
#include <string>

#include "flpl/autodiff/gradient_vector.h"
#include "flpl/common/error.h"

namespace flpl::defenses {

class DefenseError : public Error {
 public:
  using Error::Error;
};

// Threshold compression: keeps g_i where |g_i| > epsilon and zeroes the rest.
// Boundary values (|g_i| == epsilon) are pruned.
GradientVector Compress(const GradientVector& g, double epsilon);

// Fraction of coordinates that are exactly zero.
double PruneRatio(const GradientVector& g);

// Smallest threshold whose compression prunes at least ceil(target * n)
// coordinates: the k-th smallest magnitude. Equal magnitudes at the cut all
// fall on the pruned side, so ties may overshoot the target.
double EpsilonForRatio(const GradientVector& g, double target_ratio);

// Adds i.i.d. N(0, variance) noise drawn from a generator seeded by `seed`.
GradientVector AddNoise(const GradientVector& g, double variance, uint64_t seed);

enum class DefenseMode { kNone, kCompressEpsilon, kCompressRatio, kNoise };

// One defense at a time; combining compression and noise is not supported.
struct DefenseConfig {
  DefenseMode mode = DefenseMode::kNone;
  double epsilon = 0.0;
  double target_ratio = 0.0;
  double variance = 0.0;
  uint64_t seed = 0;

  // Throws DefenseError when the parameters of the selected mode are invalid.
  void Validate() const;
  // Short label for logs and CSV output, e.g. "prune:0.87" or "noise:0.001".
  std::string Label() const;
};

GradientVector ApplyDefense(const GradientVector& g, const DefenseConfig& config);

DefenseMode ParseDefenseMode(const std::string& name);
std::string DefenseModeName(DefenseMode mode);

}  // namespace flpl::defenses
