#pragma once

#include <functional>
#include <span>
#include <vector>

namespace flpl::attack {

// Value of a smooth objective at x; writes the gradient into `grad`, which
// has the size of x.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct LbfgsOptions {
  double lr = 1.0;
  int max_iter = 20;  // inner iterations per Step
  int max_eval = 25;  // objective evaluations per Step
  int history = 10;
  double tolerance_grad = 1e-7;
  double tolerance_change = 1e-9;
};

// Limited-memory BFGS with a strong-Wolfe line search. Curvature history and
// the last direction persist across Step calls, so repeated calls continue a
// single optimization.
class Lbfgs {
 public:
  explicit Lbfgs(LbfgsOptions opts = {});

  // Runs up to max_iter iterations from x, updating it in place, and returns
  // the objective at the final x.
  double Step(std::vector<double>& x, const Objective& f);
  int evaluations() const { return evaluations_; }

 private:
  LbfgsOptions opts_;
  int iterations_ = 0;
  int evaluations_ = 0;
  std::vector<double> d_, prev_grad_;
  double t_ = 0;
  std::vector<std::vector<double>> old_s_, old_y_;
  std::vector<double> rho_;
  double h_diag_ = 1.0;
};

struct StrongWolfeResult {
  double f = 0;
  std::vector<double> grad;
  double t = 0;
  int evaluations = 0;
};

// Step length along d satisfying the strong Wolfe conditions with constants
// c1 and c2, found by bracketing and cubic-interpolation zoom. `f0`, `g0` and
// `gtd` describe x itself; gtd = g0 . d must be negative.
StrongWolfeResult StrongWolfe(const Objective& f, std::span<const double> x, double t,
                              std::span<const double> d, double f0, std::span<const double> g0,
                              double gtd, double c1 = 1e-4, double c2 = 0.9,
                              double tolerance_change = 1e-9, int max_ls = 25);

// Minimizer of the cubic through (x1, f1, g1) and (x2, f2, g2), clamped to
// [lo, hi]; the midpoint when the cubic has no real minimizer.
double CubicInterpolate(double x1, double f1, double g1, double x2, double f2, double g2,
                        double lo, double hi);

struct AdamOptions {
  double lr = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamOptions opts = {}) : opts_(opts) {}
  // One update of x from its gradient.
  void Update(std::vector<double>& x, std::span<const double> grad);

 private:
  AdamOptions opts_;
  int step_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace flpl::attack
