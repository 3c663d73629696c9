#pragma once

// Differentiable primitives. Every op validates shapes, computes its forward
// value eagerly and registers a gradient rule with the output node.

#include <cstddef>
#include <span>
#include <vector>

#include "dbm/tensor.hpp"

namespace dbm {

enum class Activation { sigmoid, silu, softplus, exp, relu };

// [m x k] * [k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Same-shape elementwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// alpha * a + beta
Tensor affine(const Tensor& a, double alpha, double beta = 0.0);

// Row broadcasts: a is [m x n], v has n elements.
Tensor add_rowwise(const Tensor& a, const Tensor& v);
Tensor mul_rowwise(const Tensor& a, const Tensor& v);

Tensor activation(const Tensor& x, Activation kind);
inline Tensor sigmoid(const Tensor& x) { return activation(x, Activation::sigmoid); }
inline Tensor silu(const Tensor& x) { return activation(x, Activation::silu); }
inline Tensor softplus(const Tensor& x) { return activation(x, Activation::softplus); }
inline Tensor exp(const Tensor& x) { return activation(x, Activation::exp); }
inline Tensor relu(const Tensor& x) { return activation(x, Activation::relu); }

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const Tensor& a, const Tensor& b);
// out[i] = a[index[i]]; indices may repeat (gradients add up).
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index);
Tensor reverse_rows(const Tensor& a);

// Scale-only RMS normalization of each row, then multiplied by scale [n].
Tensor rms_norm(const Tensor& x, const Tensor& scale, double eps = 1e-5);
Tensor softmax_rows(const Tensor& x);

// ---------------------------------------------------------------------------
// Convolutions

// x [L x D], kernel [D x K], bias [D]. Left zero padding of K-1 so the output
// keeps length L; tap K-1 multiplies the current position.
Tensor depthwise_conv1d_causal(const Tensor& x, const Tensor& kernel,
                               const Tensor& bias);

struct PatchSize {
  std::size_t t = 1, h = 16, w = 16;
  std::size_t volume() const { return t * h * w; }
};

// video [Cin x T x H x W], kernel [Cout x (Cin*pt*ph*pw)], bias [Cout].
// Emits [(T/pt)*(H/ph)*(W/pw) x Cout], tokens ordered frame-major then
// row-major within a frame. Throws ShapeError on indivisible dims.
Tensor patchify3d(const Tensor& video, const Tensor& kernel, const Tensor& bias,
                  PatchSize patch);

// -log softmax(logits)[label]; logits holds the class scores.
Tensor cross_entropy(const Tensor& logits, std::size_t label);

}  // namespace dbm
