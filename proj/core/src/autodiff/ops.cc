#include "flpl/autodiff/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace flpl::ad {
namespace {

void RequireSameShape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) throw ShapeError(op, a.shape(), b.shape());
}

void RequireRank(const char* op, const Var& a, int rank) {
  if (static_cast<int>(a.shape().size()) != rank) throw ShapeError(op, a.shape());
}

template <typename F>
Tensor Map(const Tensor& a, F f) {
  Tensor out(a.shape);
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = f(a.data[i]);
  return out;
}

template <typename F>
Tensor Zip(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.shape);
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = f(a.data[i], b.data[i]);
  return out;
}

bool Wants(const Var& out, size_t i) { return out.input(i).requires_grad(); }

struct Dims4 {
  int64_t b, c, h, w;
};

Dims4 D4(const Shape& s) { return {s[0], s[1], s[2], s[3]}; }

// Number of elements per channel slice for a rank-2 or rank-4 tensor.
int64_t InnerSize(const Shape& s) { return s.size() == 4 ? s[2] * s[3] : 1; }

void RequireChannelTensor(const char* op, const Shape& s) {
  if (s.size() != 2 && s.size() != 4) throw ShapeError(op, s);
}

}  // namespace

// ---------------------------------------------------------------- elementwise

Var Add(const Var& a, const Var& b) {
  RequireSameShape("Add", a, b);
  return MakeOpResult(
      Zip(a.value(), b.value(), [](double x, double y) { return x + y; }), {a, b},
      [](const Var&, const Var& g) { return std::vector<Var>{g, g}; }, "Add");
}

Var Sub(const Var& a, const Var& b) {
  RequireSameShape("Sub", a, b);
  return MakeOpResult(
      Zip(a.value(), b.value(), [](double x, double y) { return x - y; }), {a, b},
      [](const Var& out, const Var& g) {
        return std::vector<Var>{g, Wants(out, 1) ? Neg(g) : Var()};
      },
      "Sub");
}

Var Mul(const Var& a, const Var& b) {
  RequireSameShape("Mul", a, b);
  return MakeOpResult(
      Zip(a.value(), b.value(), [](double x, double y) { return x * y; }), {a, b},
      [](const Var& out, const Var& g) {
        const Var& x = out.input(0);
        const Var& y = out.input(1);
        return std::vector<Var>{Wants(out, 0) ? Mul(g, y) : Var(),
                                Wants(out, 1) ? Mul(g, x) : Var()};
      },
      "Mul");
}

Var Neg(const Var& a) {
  return MakeOpResult(
      Map(a.value(), [](double x) { return -x; }), {a},
      [](const Var&, const Var& g) { return std::vector<Var>{Neg(g)}; }, "Neg");
}

Var Scale(const Var& a, double k) {
  return MakeOpResult(
      Map(a.value(), [k](double x) { return k * x; }), {a},
      [k](const Var&, const Var& g) { return std::vector<Var>{Scale(g, k)}; },
      "Scale");
}

Var AddScalar(const Var& a, double k) {
  return MakeOpResult(
      Map(a.value(), [k](double x) { return x + k; }), {a},
      [](const Var&, const Var& g) { return std::vector<Var>{g}; }, "AddScalar");
}

Var Exp(const Var& a) {
  return MakeOpResult(
      Map(a.value(), [](double x) { return std::exp(x); }), {a},
      [](const Var& out, const Var& g) { return std::vector<Var>{Mul(g, out)}; },
      "Exp");
}

Var Log(const Var& a) {
  return MakeOpResult(
      Map(a.value(), [](double x) { return std::log(x); }), {a},
      [](const Var& out, const Var& g) {
        return std::vector<Var>{Mul(g, Reciprocal(out.input(0)))};
      },
      "Log");
}

Var Sqrt(const Var& a) {
  return MakeOpResult(
      Map(a.value(), [](double x) { return std::sqrt(x); }), {a},
      [](const Var& out, const Var& g) {
        return std::vector<Var>{Mul(g, Scale(Reciprocal(out), 0.5))};
      },
      "Sqrt");
}

Var Reciprocal(const Var& a) {
  return MakeOpResult(
      Map(a.value(), [](double x) { return 1.0 / x; }), {a},
      [](const Var& out, const Var& g) {
        return std::vector<Var>{Neg(Mul(g, Mul(out, out)))};
      },
      "Reciprocal");
}

Var Sigmoid(const Var& a) {
  return MakeOpResult(
      Map(a.value(),
          [](double x) {
            if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
          }),
      {a},
      [](const Var& out, const Var& g) {
        // s' = s (1 - s), written against the output node.
        return std::vector<Var>{Mul(g, Mul(out, AddScalar(Neg(out), 1.0)))};
      },
      "Sigmoid");
}

Var Clamp(const Var& a, double lo, double hi) {
  return MakeOpResult(
      Map(a.value(), [lo, hi](double x) { return std::clamp(x, lo, hi); }), {a},
      [lo, hi](const Var& out, const Var& g) {
        Var mask(Map(out.input(0).value(),
                     [lo, hi](double x) { return (x >= lo && x <= hi) ? 1.0 : 0.0; }));
        return std::vector<Var>{Mul(g, mask)};
      },
      "Clamp");
}

// ---------------------------------------------------------------- reductions

Var Sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data) s += v;
  return MakeOpResult(
      Tensor::Scalar(s), {a},
      [](const Var& out, const Var& g) {
        return std::vector<Var>{BroadcastScalar(g, out.input(0).shape())};
      },
      "Sum");
}

Var Mean(const Var& a) {
  return Scale(Sum(a), 1.0 / static_cast<double>(a.numel()));
}

Var BroadcastScalar(const Var& s, const Shape& shape) {
  if (s.numel() != 1) throw ShapeError("BroadcastScalar", s.shape());
  return MakeOpResult(
      Tensor::Full(shape, s.value().data[0]), {s},
      [](const Var& out, const Var& g) {
        return std::vector<Var>{Reshape(Sum(g), out.input(0).shape())};
      },
      "BroadcastScalar");
}

// ---------------------------------------------------------------- shapes

Var Reshape(const Var& a, const Shape& shape) {
  if (NumElements(shape) != a.numel()) throw ShapeError("Reshape", a.shape(), shape);
  if (shape == a.shape()) return a;
  return MakeOpResult(
      Tensor(shape, a.value().data), {a},
      [](const Var& out, const Var& g) {
        return std::vector<Var>{Reshape(g, out.input(0).shape())};
      },
      "Reshape");
}

Var Flatten(const Var& a) {
  if (a.shape().empty()) throw ShapeError("Flatten", a.shape());
  const int64_t batch = a.shape()[0];
  return Reshape(a, {batch, batch == 0 ? 0 : a.numel() / batch});
}

Var Transpose(const Var& a) {
  RequireRank("Transpose", a, 2);
  const int64_t m = a.shape()[0], n = a.shape()[1];
  Tensor out({n, m});
  const auto& in = a.value().data;
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out.data[j * m + i] = in[i * n + j];
  return MakeOpResult(
      std::move(out), {a},
      [](const Var&, const Var& g) { return std::vector<Var>{Transpose(g)}; },
      "Transpose");
}

Var MatMul(const Var& a, const Var& b) {
  RequireRank("MatMul", a, 2);
  RequireRank("MatMul", b, 2);
  const int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) throw ShapeError("MatMul", a.shape(), b.shape());
  Tensor out({m, n});
  const auto& x = a.value().data;
  const auto& y = b.value().data;
  for (int64_t i = 0; i < m; ++i) {
    double* row = out.data.data() + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const double xv = x[i * k + p];
      if (xv == 0.0) continue;
      const double* yrow = y.data() + p * n;
      for (int64_t j = 0; j < n; ++j) row[j] += xv * yrow[j];
    }
  }
  return MakeOpResult(
      std::move(out), {a, b},
      [](const Var& out, const Var& g) {
        const Var& x = out.input(0);
        const Var& y = out.input(1);
        return std::vector<Var>{Wants(out, 0) ? MatMul(g, Transpose(y)) : Var(),
                                Wants(out, 1) ? MatMul(Transpose(x), g) : Var()};
      },
      "MatMul");
}

Var Linear(const Var& x, const Var& w, const Var& b) {
  return AddBias(MatMul(x, Transpose(w)), b);
}

// ---------------------------------------------------------------- channels

Var AddBias(const Var& x, const Var& b) {
  RequireChannelTensor("AddBias", x.shape());
  RequireRank("AddBias", b, 1);
  const Shape& s = x.shape();
  if (b.shape()[0] != s[1]) throw ShapeError("AddBias", s, b.shape());
  const int64_t inner = InnerSize(s);
  Tensor out = x.value();
  const auto& bias = b.value().data;
  for (int64_t n = 0; n < s[0]; ++n)
    for (int64_t c = 0; c < s[1]; ++c) {
      double* p = out.data.data() + (n * s[1] + c) * inner;
      for (int64_t i = 0; i < inner; ++i) p[i] += bias[c];
    }
  return MakeOpResult(
      std::move(out), {x, b},
      [](const Var& out, const Var& g) {
        return std::vector<Var>{g, Wants(out, 1) ? SumToChannels(g) : Var()};
      },
      "AddBias");
}

Var SumToChannels(const Var& x) {
  RequireChannelTensor("SumToChannels", x.shape());
  const Shape& s = x.shape();
  const int64_t inner = InnerSize(s);
  Tensor out({s[1]});
  const auto& in = x.value().data;
  for (int64_t n = 0; n < s[0]; ++n)
    for (int64_t c = 0; c < s[1]; ++c) {
      const double* p = in.data() + (n * s[1] + c) * inner;
      double acc = 0.0;
      for (int64_t i = 0; i < inner; ++i) acc += p[i];
      out.data[c] += acc;
    }
  return MakeOpResult(
      std::move(out), {x},
      [](const Var& out, const Var& g) {
        return std::vector<Var>{BroadcastChannels(g, out.input(0).shape())};
      },
      "SumToChannels");
}

Var BroadcastChannels(const Var& b, const Shape& shape) {
  RequireChannelTensor("BroadcastChannels", shape);
  RequireRank("BroadcastChannels", b, 1);
  if (b.shape()[0] != shape[1]) throw ShapeError("BroadcastChannels", shape, b.shape());
  const int64_t inner = InnerSize(shape);
  Tensor out(shape);
  const auto& bias = b.value().data;
  for (int64_t n = 0; n < shape[0]; ++n)
    for (int64_t c = 0; c < shape[1]; ++c) {
      double* p = out.data.data() + (n * shape[1] + c) * inner;
      std::fill(p, p + inner, bias[c]);
    }
  return MakeOpResult(
      std::move(out), {b},
      [](const Var&, const Var& g) { return std::vector<Var>{SumToChannels(g)}; },
      "BroadcastChannels");
}

// ---------------------------------------------------------------- convolution

namespace {

void CheckConvShapes(const char* op, const Shape& x, const Shape& w) {
  if (x.size() != 4 || w.size() != 4) throw ShapeError(op, x, w);
  if (x[1] != w[1] || x[2] < w[2] || x[3] < w[3]) throw ShapeError(op, x, w);
}

}  // namespace

Var Conv2d(const Var& x, const Var& w) {
  CheckConvShapes("Conv2d", x.shape(), w.shape());
  const auto [B, C, H, W] = D4(x.shape());
  const auto [O, C2, KH, KW] = D4(w.shape());
  (void)C2;
  const int64_t HO = H - KH + 1, WO = W - KW + 1;
  Tensor out({B, O, HO, WO});
  const double* X = x.value().data.data();
  const double* Wt = w.value().data.data();
  double* Y = out.data.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t o = 0; o < O; ++o) {
      double* ybo = Y + (b * O + o) * HO * WO;
      for (int64_t c = 0; c < C; ++c)
        for (int64_t p = 0; p < KH; ++p)
          for (int64_t q = 0; q < KW; ++q) {
            const double wv = Wt[((o * C + c) * KH + p) * KW + q];
            const double* xbase = X + ((b * C + c) * H + p) * W + q;
            for (int64_t i = 0; i < HO; ++i) {
              double* yrow = ybo + i * WO;
              const double* xrow = xbase + i * W;
              for (int64_t j = 0; j < WO; ++j) yrow[j] += wv * xrow[j];
            }
          }
    }
  return MakeOpResult(
      std::move(out), {x, w},
      [](const Var& out, const Var& g) {
        const Var& xi = out.input(0);
        const Var& wi = out.input(1);
        return std::vector<Var>{
            Wants(out, 0) ? Conv2dGradInput(g, wi, xi.shape()) : Var(),
            Wants(out, 1) ? Conv2dGradWeight(xi, g, wi.shape()) : Var()};
      },
      "Conv2d");
}

Var Conv2dGradInput(const Var& grad_out, const Var& w, const Shape& input_shape) {
  const Shape& gs = grad_out.shape();
  const Shape& ws = w.shape();
  if (gs.size() != 4 || ws.size() != 4 || input_shape.size() != 4 || gs[1] != ws[0] ||
      input_shape[0] != gs[0] || input_shape[1] != ws[1] ||
      input_shape[2] != gs[2] + ws[2] - 1 || input_shape[3] != gs[3] + ws[3] - 1) {
    throw ShapeError("Conv2dGradInput", gs, ws);
  }
  const auto [B, C, H, W] = D4(input_shape);
  const auto [O, C2, KH, KW] = D4(ws);
  (void)C2;
  const int64_t HO = gs[2], WO = gs[3];
  Tensor out(input_shape);
  const double* G = grad_out.value().data.data();
  const double* Wt = w.value().data.data();
  double* DX = out.data.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t o = 0; o < O; ++o) {
      const double* gbo = G + (b * O + o) * HO * WO;
      for (int64_t c = 0; c < C; ++c)
        for (int64_t p = 0; p < KH; ++p)
          for (int64_t q = 0; q < KW; ++q) {
            const double wv = Wt[((o * C + c) * KH + p) * KW + q];
            double* dbase = DX + ((b * C + c) * H + p) * W + q;
            for (int64_t i = 0; i < HO; ++i) {
              double* drow = dbase + i * W;
              const double* grow = gbo + i * WO;
              for (int64_t j = 0; j < WO; ++j) drow[j] += wv * grow[j];
            }
          }
    }
  return MakeOpResult(
      std::move(out), {grad_out, w},
      [](const Var& out, const Var& h) {
        const Var& gi = out.input(0);
        const Var& wi = out.input(1);
        return std::vector<Var>{Wants(out, 0) ? Conv2d(h, wi) : Var(),
                                Wants(out, 1) ? Conv2dGradWeight(h, gi, wi.shape()) : Var()};
      },
      "Conv2dGradInput");
}

Var Conv2dGradWeight(const Var& x, const Var& grad_out, const Shape& weight_shape) {
  const Shape& xs = x.shape();
  const Shape& gs = grad_out.shape();
  if (xs.size() != 4 || gs.size() != 4 || weight_shape.size() != 4 || xs[0] != gs[0] ||
      weight_shape[0] != gs[1] || weight_shape[1] != xs[1] ||
      xs[2] != gs[2] + weight_shape[2] - 1 || xs[3] != gs[3] + weight_shape[3] - 1) {
    throw ShapeError("Conv2dGradWeight", xs, gs);
  }
  const auto [B, C, H, W] = D4(xs);
  const auto [O, C2, KH, KW] = D4(weight_shape);
  (void)C2;
  const int64_t HO = gs[2], WO = gs[3];
  Tensor out(weight_shape);
  const double* X = x.value().data.data();
  const double* G = grad_out.value().data.data();
  double* DW = out.data.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t o = 0; o < O; ++o) {
      const double* gbo = G + (b * O + o) * HO * WO;
      for (int64_t c = 0; c < C; ++c)
        for (int64_t p = 0; p < KH; ++p)
          for (int64_t q = 0; q < KW; ++q) {
            const double* xbase = X + ((b * C + c) * H + p) * W + q;
            double acc = 0.0;
            for (int64_t i = 0; i < HO; ++i) {
              const double* xrow = xbase + i * W;
              const double* grow = gbo + i * WO;
              for (int64_t j = 0; j < WO; ++j) acc += xrow[j] * grow[j];
            }
            DW[((o * C + c) * KH + p) * KW + q] += acc;
          }
    }
  return MakeOpResult(
      std::move(out), {x, grad_out},
      [](const Var& out, const Var& k) {
        const Var& xi = out.input(0);
        const Var& gi = out.input(1);
        return std::vector<Var>{Wants(out, 0) ? Conv2dGradInput(gi, k, xi.shape()) : Var(),
                                Wants(out, 1) ? Conv2d(xi, k) : Var()};
      },
      "Conv2dGradWeight");
}

// ---------------------------------------------------------------- spatial

Var Pad2d(const Var& x, int pad) {
  RequireRank("Pad2d", x, 4);
  if (pad < 0) throw ShapeError("Pad2d", "negative padding");
  if (pad == 0) return x;
  const auto [B, C, H, W] = D4(x.shape());
  const int64_t HP = H + 2 * pad, WP = W + 2 * pad;
  Tensor out({B, C, HP, WP});
  const double* in = x.value().data.data();
  for (int64_t bc = 0; bc < B * C; ++bc)
    for (int64_t i = 0; i < H; ++i)
      std::copy_n(in + (bc * H + i) * W, W, out.data.data() + (bc * HP + i + pad) * WP + pad);
  return MakeOpResult(
      std::move(out), {x},
      [pad](const Var&, const Var& g) { return std::vector<Var>{Crop2d(g, pad)}; },
      "Pad2d");
}

Var Crop2d(const Var& x, int pad) {
  RequireRank("Crop2d", x, 4);
  const auto [B, C, H, W] = D4(x.shape());
  if (pad < 0 || H < 2 * pad || W < 2 * pad) throw ShapeError("Crop2d", x.shape());
  if (pad == 0) return x;
  const int64_t HC = H - 2 * pad, WC = W - 2 * pad;
  Tensor out({B, C, HC, WC});
  const double* in = x.value().data.data();
  for (int64_t bc = 0; bc < B * C; ++bc)
    for (int64_t i = 0; i < HC; ++i)
      std::copy_n(in + (bc * H + i + pad) * W + pad, WC, out.data.data() + (bc * HC + i) * WC);
  return MakeOpResult(
      std::move(out), {x},
      [pad](const Var&, const Var& g) { return std::vector<Var>{Pad2d(g, pad)}; },
      "Crop2d");
}

Var AvgPool2(const Var& x) {
  RequireRank("AvgPool2", x, 4);
  const auto [B, C, H, W] = D4(x.shape());
  if (H % 2 || W % 2) throw ShapeError("AvgPool2", x.shape());
  const int64_t HO = H / 2, WO = W / 2;
  Tensor out({B, C, HO, WO});
  const double* in = x.value().data.data();
  for (int64_t bc = 0; bc < B * C; ++bc)
    for (int64_t i = 0; i < HO; ++i)
      for (int64_t j = 0; j < WO; ++j) {
        const double* p = in + (bc * H + 2 * i) * W + 2 * j;
        out.data[(bc * HO + i) * WO + j] = 0.25 * (p[0] + p[1] + p[W] + p[W + 1]);
      }
  return MakeOpResult(
      std::move(out), {x},
      [](const Var&, const Var& g) { return std::vector<Var>{Scale(Upsample2(g), 0.25)}; },
      "AvgPool2");
}

Var Upsample2(const Var& x) {
  RequireRank("Upsample2", x, 4);
  const auto [B, C, H, W] = D4(x.shape());
  const int64_t HO = 2 * H, WO = 2 * W;
  Tensor out({B, C, HO, WO});
  const double* in = x.value().data.data();
  for (int64_t bc = 0; bc < B * C; ++bc)
    for (int64_t i = 0; i < HO; ++i)
      for (int64_t j = 0; j < WO; ++j)
        out.data[(bc * HO + i) * WO + j] = in[(bc * H + i / 2) * W + j / 2];
  return MakeOpResult(
      std::move(out), {x},
      [](const Var&, const Var& g) { return std::vector<Var>{Scale(AvgPool2(g), 4.0)}; },
      "Upsample2");
}

Var ConcatChannels(const Var& a, const Var& b) {
  RequireRank("ConcatChannels", a, 4);
  RequireRank("ConcatChannels", b, 4);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3]) throw ShapeError("ConcatChannels", sa, sb);
  const int64_t inner = sa[2] * sa[3];
  const int64_t ca = sa[1], cb = sb[1];
  Tensor out({sa[0], ca + cb, sa[2], sa[3]});
  for (int64_t n = 0; n < sa[0]; ++n) {
    std::copy_n(a.value().data.data() + n * ca * inner, ca * inner,
                out.data.data() + n * (ca + cb) * inner);
    std::copy_n(b.value().data.data() + n * cb * inner, cb * inner,
                out.data.data() + (n * (ca + cb) + ca) * inner);
  }
  return MakeOpResult(
      std::move(out), {a, b},
      [ca, cb](const Var& out, const Var& g) {
        return std::vector<Var>{Wants(out, 0) ? SliceChannels(g, 0, ca) : Var(),
                                Wants(out, 1) ? SliceChannels(g, ca, cb) : Var()};
      },
      "ConcatChannels");
}

Var SliceChannels(const Var& x, int64_t start, int64_t count) {
  RequireRank("SliceChannels", x, 4);
  const auto [B, C, H, W] = D4(x.shape());
  if (start < 0 || count < 0 || start + count > C) throw ShapeError("SliceChannels", x.shape());
  const int64_t inner = H * W;
  Tensor out({B, count, H, W});
  for (int64_t n = 0; n < B; ++n)
    std::copy_n(x.value().data.data() + (n * C + start) * inner, count * inner,
                out.data.data() + n * count * inner);
  return MakeOpResult(
      std::move(out), {x},
      [start, C](const Var&, const Var& g) {
        return std::vector<Var>{EmbedChannels(g, start, C)};
      },
      "SliceChannels");
}

Var EmbedChannels(const Var& x, int64_t start, int64_t total) {
  RequireRank("EmbedChannels", x, 4);
  const auto [B, C, H, W] = D4(x.shape());
  if (start < 0 || start + C > total) throw ShapeError("EmbedChannels", x.shape());
  const int64_t inner = H * W;
  Tensor out({B, total, H, W});
  for (int64_t n = 0; n < B; ++n)
    std::copy_n(x.value().data.data() + n * C * inner, C * inner,
                out.data.data() + (n * total + start) * inner);
  return MakeOpResult(
      std::move(out), {x},
      [start, C](const Var&, const Var& g) {
        return std::vector<Var>{SliceChannels(g, start, C)};
      },
      "EmbedChannels");
}

// ---------------------------------------------------------------- softmax

Var RowSumBroadcast(const Var& x) {
  RequireRank("RowSumBroadcast", x, 2);
  const int64_t m = x.shape()[0], n = x.shape()[1];
  Tensor out(x.shape());
  const auto& in = x.value().data;
  for (int64_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < n; ++j) s += in[i * n + j];
    std::fill(out.data.begin() + i * n, out.data.begin() + (i + 1) * n, s);
  }
  return MakeOpResult(
      std::move(out), {x},
      [](const Var&, const Var& g) { return std::vector<Var>{RowSumBroadcast(g)}; },
      "RowSumBroadcast");
}

namespace {

Tensor LogSoftmaxValue(const Tensor& x) {
  const int64_t m = x.shape[0], n = x.shape[1];
  Tensor out(x.shape);
  for (int64_t i = 0; i < m; ++i) {
    const double* row = x.data.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double s = 0.0;
    for (int64_t j = 0; j < n; ++j) s += std::exp(row[j] - mx);
    const double lse = mx + std::log(s);
    for (int64_t j = 0; j < n; ++j) out.data[i * n + j] = row[j] - lse;
  }
  return out;
}

}  // namespace

Var Softmax(const Var& x) {
  RequireRank("Softmax", x, 2);
  Tensor out = LogSoftmaxValue(x.value());
  for (double& v : out.data) v = std::exp(v);
  return MakeOpResult(
      std::move(out), {x},
      [](const Var& out, const Var& g) {
        return std::vector<Var>{Mul(out, Sub(g, RowSumBroadcast(Mul(g, out))))};
      },
      "Softmax");
}

Var LogSoftmax(const Var& x) {
  RequireRank("LogSoftmax", x, 2);
  return MakeOpResult(
      LogSoftmaxValue(x.value()), {x},
      [](const Var& out, const Var& g) {
        return std::vector<Var>{Sub(g, Mul(Softmax(out.input(0)), RowSumBroadcast(g)))};
      },
      "LogSoftmax");
}

// ---------------------------------------------------------------- losses

Var CrossEntropyLoss(const Var& logits, const Var& targets) {
  RequireRank("CrossEntropyLoss", logits, 2);
  RequireSameShape("CrossEntropyLoss", logits, targets);
  const double batch = static_cast<double>(logits.shape()[0]);
  return Scale(Sum(Mul(targets, LogSoftmax(logits))), -1.0 / batch);
}

Var BinaryCrossEntropyLoss(const Var& probs, const Var& targets) {
  RequireSameShape("BinaryCrossEntropyLoss", probs, targets);
  constexpr double kEps = 1e-12;
  Var log_p = Log(Clamp(probs, kEps, 1.0));
  Var log_q = Log(Clamp(AddScalar(Neg(probs), 1.0), kEps, 1.0));
  Var ll = Add(Mul(targets, log_p), Mul(AddScalar(Neg(targets), 1.0), log_q));
  return Scale(Sum(ll), -1.0 / static_cast<double>(probs.numel()));
}

Var Dot(const Var& a, const Var& b) { return Sum(Mul(a, Reshape(b, a.shape()))); }

Var CosineSimilarity(const Var& a, const Var& b) {
  if (a.numel() != b.numel()) throw ShapeError("CosineSimilarity", a.shape(), b.shape());
  Var fa = Reshape(a, {a.numel()});
  Var fb = Reshape(b, {b.numel()});
  Var norms = Mul(Dot(fa, fa), Dot(fb, fb));
  return Mul(Dot(fa, fb), Reciprocal(Sqrt(AddScalar(norms, 1e-30))));
}

}  // namespace flpl::ad
