#include "flpl/attack/optim.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

namespace flpl::attack {
namespace {

double Dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double MaxAbs(std::span<const double> a) {
  double m = 0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

double CubicInterpolate(double x1, double f1, double g1, double x2, double f2, double g2,
                        double lo, double hi) {
  const double d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
  const double d2_square = d1 * d1 - g1 * g2;
  if (d2_square >= 0) {
    const double d2 = std::sqrt(d2_square);
    const double pos = x1 <= x2 ? x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2 * d2))
                                : x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2 * d2));
    if (std::isfinite(pos)) return std::clamp(pos, lo, hi);
  }
  return (lo + hi) / 2;
}

StrongWolfeResult StrongWolfe(const Objective& f, std::span<const double> x, double t,
                              std::span<const double> d, double f0, std::span<const double> g0,
                              double gtd, double c1, double c2, double tolerance_change,
                              int max_ls) {
  const size_t n = x.size();
  const double d_norm = MaxAbs(d);
  std::vector<double> point(n);
  StrongWolfeResult out;
  auto eval = [&](double step, std::vector<double>& g) {
    for (size_t i = 0; i < n; ++i) point[i] = x[i] + step * d[i];
    g.assign(n, 0.0);
    ++out.evaluations;
    return f(point, g);
  };

  std::vector<double> g_new;
  double f_new = eval(t, g_new);
  double gtd_new = Dot(g_new, d);
  double t_prev = 0, f_prev = f0, gtd_prev = gtd;
  std::vector<double> g_prev(g0.begin(), g0.end());

  // Bracket endpoints; a single accepted point is stored twice.
  std::array<double, 2> bt{}, bf{}, bgtd{};
  std::array<std::vector<double>, 2> bg;
  bool done = false;
  bool bracketed = false;
  int ls = 0;
  while (ls < max_ls) {
    if (f_new > f0 + c1 * t * gtd || (ls > 1 && f_new >= f_prev) || gtd_new >= 0) {
      bt = {t_prev, t};
      bf = {f_prev, f_new};
      bgtd = {gtd_prev, gtd_new};
      bg = {g_prev, g_new};
      bracketed = true;
      break;
    }
    if (std::abs(gtd_new) <= -c2 * gtd) {
      bt = {t, t};
      bf = {f_new, f_new};
      bgtd = {gtd_new, gtd_new};
      bg = {g_new, g_new};
      done = true;
      break;
    }
    const double min_step = t + 0.01 * (t - t_prev);
    const double max_step = t * 10;
    const double tmp = t;
    t = CubicInterpolate(t_prev, f_prev, gtd_prev, t, f_new, gtd_new, min_step, max_step);
    t_prev = tmp;
    f_prev = f_new;
    g_prev = g_new;
    gtd_prev = gtd_new;
    f_new = eval(t, g_new);
    gtd_new = Dot(g_new, d);
    ++ls;
  }
  if (!done && !bracketed) {
    bt = {0, t};
    bf = {f0, f_new};
    bgtd = {gtd, gtd_new};
    bg = {std::vector<double>(g0.begin(), g0.end()), g_new};
  }

  bool insufficient_progress = false;
  int low = bf[0] <= bf[1] ? 0 : 1;
  int high = 1 - low;
  while (!done && ls < max_ls) {
    if (std::abs(bt[1] - bt[0]) * d_norm < tolerance_change) break;
    const double lo = std::min(bt[0], bt[1]), hi = std::max(bt[0], bt[1]);
    t = CubicInterpolate(bt[0], bf[0], bgtd[0], bt[1], bf[1], bgtd[1], lo, hi);
    const double eps = 0.1 * (hi - lo);
    if (std::min(hi - t, t - lo) < eps) {
      if (insufficient_progress || t >= hi || t <= lo) {
        t = std::abs(t - hi) < std::abs(t - lo) ? hi - eps : lo + eps;
        insufficient_progress = false;
      } else {
        insufficient_progress = true;
      }
    } else {
      insufficient_progress = false;
    }
    f_new = eval(t, g_new);
    gtd_new = Dot(g_new, d);
    ++ls;
    if (f_new > f0 + c1 * t * gtd || f_new >= bf[low]) {
      bt[high] = t;
      bf[high] = f_new;
      bg[high] = g_new;
      bgtd[high] = gtd_new;
      low = bf[0] <= bf[1] ? 0 : 1;
      high = 1 - low;
    } else {
      if (std::abs(gtd_new) <= -c2 * gtd) {
        done = true;
      } else if (gtd_new * (bt[high] - bt[low]) >= 0) {
        bt[high] = bt[low];
        bf[high] = bf[low];
        bg[high] = bg[low];
        bgtd[high] = bgtd[low];
      }
      bt[low] = t;
      bf[low] = f_new;
      bg[low] = g_new;
      bgtd[low] = gtd_new;
    }
  }
  out.t = bt[low];
  out.f = bf[low];
  out.grad = std::move(bg[low]);
  return out;
}

Lbfgs::Lbfgs(LbfgsOptions opts) : opts_(opts) {}

double Lbfgs::Step(std::vector<double>& x, const Objective& f) {
  const size_t n = x.size();
  std::vector<double> g(n, 0.0);
  double loss = f(x, g);
  int evals = 1;
  ++evaluations_;
  if (MaxAbs(g) <= opts_.tolerance_grad) return loss;

  for (int it = 0; it < opts_.max_iter; ++it) {
    ++iterations_;
    if (iterations_ == 1) {
      d_.resize(n);
      for (size_t i = 0; i < n; ++i) d_[i] = -g[i];
      old_s_.clear();
      old_y_.clear();
      rho_.clear();
      h_diag_ = 1.0;
    } else {
      std::vector<double> y(n), s(n);
      for (size_t i = 0; i < n; ++i) {
        y[i] = g[i] - prev_grad_[i];
        s[i] = d_[i] * t_;
      }
      const double ys = Dot(y, s);
      if (ys > 1e-10) {
        if (static_cast<int>(old_s_.size()) == opts_.history) {
          old_s_.erase(old_s_.begin());
          old_y_.erase(old_y_.begin());
          rho_.erase(rho_.begin());
        }
        h_diag_ = ys / Dot(y, y);
        old_s_.push_back(std::move(s));
        old_y_.push_back(std::move(y));
        rho_.push_back(1.0 / ys);
      }
      // Two-loop recursion for d = -H g.
      const size_t k = old_s_.size();
      std::vector<double> alpha(k);
      std::vector<double> q(n);
      for (size_t i = 0; i < n; ++i) q[i] = -g[i];
      for (size_t j = k; j-- > 0;) {
        alpha[j] = Dot(old_s_[j], q) * rho_[j];
        for (size_t i = 0; i < n; ++i) q[i] -= alpha[j] * old_y_[j][i];
      }
      for (size_t i = 0; i < n; ++i) d_[i] = q[i] * h_diag_;
      for (size_t j = 0; j < k; ++j) {
        const double beta = Dot(old_y_[j], d_) * rho_[j];
        for (size_t i = 0; i < n; ++i) d_[i] += old_s_[j][i] * (alpha[j] - beta);
      }
    }
    prev_grad_ = g;
    const double prev_loss = loss;

    if (iterations_ == 1) {
      double l1 = 0;
      for (double v : g) l1 += std::abs(v);
      t_ = std::min(1.0, 1.0 / l1) * opts_.lr;
    } else {
      t_ = opts_.lr;
    }
    const double gtd = Dot(g, d_);
    if (gtd > -opts_.tolerance_change) break;

    StrongWolfeResult ls = StrongWolfe(f, x, t_, d_, loss, g, gtd);
    t_ = ls.t;
    for (size_t i = 0; i < n; ++i) x[i] += t_ * d_[i];
    loss = ls.f;
    g = std::move(ls.grad);
    evals += ls.evaluations;
    evaluations_ += ls.evaluations;

    if (evals >= opts_.max_eval) break;
    if (MaxAbs(g) <= opts_.tolerance_grad) break;
    if (MaxAbs(d_) * std::abs(t_) <= opts_.tolerance_change) break;
    if (std::abs(loss - prev_loss) < opts_.tolerance_change) break;
  }
  return loss;
}

void Adam::Update(std::vector<double>& x, std::span<const double> grad) {
  if (m_.empty()) {
    m_.assign(x.size(), 0.0);
    v_.assign(x.size(), 0.0);
  }
  ++step_;
  const double c1 = 1.0 - std::pow(opts_.beta1, step_);
  const double c2 = 1.0 - std::pow(opts_.beta2, step_);
  for (size_t i = 0; i < x.size(); ++i) {
    m_[i] = opts_.beta1 * m_[i] + (1 - opts_.beta1) * grad[i];
    v_[i] = opts_.beta2 * v_[i] + (1 - opts_.beta2) * grad[i] * grad[i];
    x[i] -= opts_.lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + opts_.eps);
  }
}

}  // namespace flpl::attack
