#pragma once

#include "flpl/autodiff/tensor.h"
#include "flpl/autodiff/var.h"

// Differentiable tensor ops. Every op's backward pass is expressed with ops
// from this header, so gradients can be differentiated again.
//
// Layout conventions: images are [batch, channels, height, width]; conv
// weights are [out_channels, in_channels, kh, kw]; dense weights are
// [out_features, in_features].
namespace flpl::ad {

// Elementwise, operands of identical shape.
Var Add(const Var& a, const Var& b);
Var Sub(const Var& a, const Var& b);
Var Mul(const Var& a, const Var& b);
Var Neg(const Var& a);
Var Scale(const Var& a, double k);
Var AddScalar(const Var& a, double k);
Var Exp(const Var& a);
Var Log(const Var& a);
Var Sqrt(const Var& a);
Var Reciprocal(const Var& a);
Var Sigmoid(const Var& a);
// Clamps to [lo, hi]; the gradient is zero outside the interval.
Var Clamp(const Var& a, double lo, double hi);

inline Var operator+(const Var& a, const Var& b) { return Add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return Sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return Mul(a, b); }
inline Var operator-(const Var& a) { return Neg(a); }

// Reductions and their adjoints.
Var Sum(const Var& a);  // -> scalar
Var Mean(const Var& a);
Var BroadcastScalar(const Var& s, const Shape& shape);

// Shape manipulation.
Var Reshape(const Var& a, const Shape& shape);
// [B, ...] -> [B, prod(...)]
Var Flatten(const Var& a);
Var Transpose(const Var& a);  // rank 2

Var MatMul(const Var& a, const Var& b);  // [m,k] x [k,n]
// x [B, in] times w [out, in] transposed, plus bias [out].
Var Linear(const Var& x, const Var& w, const Var& b);

// Adds a per-channel bias b[C] along dim 1 of a rank-2 or rank-4 tensor.
Var AddBias(const Var& x, const Var& b);
// Sums a rank-2 or rank-4 tensor down to its dim-1 channels.
Var SumToChannels(const Var& x);
Var BroadcastChannels(const Var& b, const Shape& shape);

// Stride-1 valid cross-correlation and the two bilinear maps that form its
// adjoints.
Var Conv2d(const Var& x, const Var& w);
Var Conv2dGradInput(const Var& grad_out, const Var& w, const Shape& input_shape);
Var Conv2dGradWeight(const Var& x, const Var& grad_out, const Shape& weight_shape);

// Zero padding of the two spatial dims and its adjoint.
Var Pad2d(const Var& x, int pad);
Var Crop2d(const Var& x, int pad);

// 2x2 average pooling (stride 2) and nearest-neighbour 2x upsampling.
Var AvgPool2(const Var& x);
Var Upsample2(const Var& x);

// Channel concatenation of rank-4 tensors and its adjoints.
Var ConcatChannels(const Var& a, const Var& b);
Var SliceChannels(const Var& x, int64_t start, int64_t count);
Var EmbedChannels(const Var& x, int64_t start, int64_t total);

// Row-wise (last dim of a rank-2 tensor) softmax helpers.
Var Softmax(const Var& x);
Var LogSoftmax(const Var& x);
Var RowSumBroadcast(const Var& x);

// Mean over the batch of -sum(target * log_softmax(logits)). Targets may be
// soft (any row-stochastic matrix).
Var CrossEntropyLoss(const Var& logits, const Var& targets);
// Mean binary cross-entropy of probabilities against targets in [0, 1].
// Log arguments are clamped to [1e-12, 1].
Var BinaryCrossEntropyLoss(const Var& probs, const Var& targets);

Var Dot(const Var& a, const Var& b);  // -> scalar, any equal shapes
Var CosineSimilarity(const Var& a, const Var& b);

}  // namespace flpl::ad
