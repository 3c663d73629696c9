#include "dbm/ops.hpp"

#include <algorithm>
#include <cmath>

#include "dbm/kernels.hpp"

namespace dbm {

namespace {

using detail::Node;

// Gradient buffer of input i, or nullptr when that input is a constant.
std::vector<double>* grad_of(Node& self, std::size_t i) {
  auto& in = *self.inputs[i];
  return in.requires_grad ? &in.ensure_grad() : nullptr;
}

const std::vector<double>& value_of(const Node& self, std::size_t i) {
  return self.inputs[i]->value;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
}

void require_matrix(const Tensor& a, const char* op) {
  if (a.rank() != 2)
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_scalar(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw ShapeError("matmul: inner dimensions differ " + shape_string(a.shape()) + " * " +
                     shape_string(b.shape()));
  std::vector<double> out(m * n, 0.0);
  kernels::gemm(false, false, m, n, k, a.values(), b.values(), out);
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    if (auto* ga = grad_of(self, 0))  // dA += dC * B^T
      kernels::gemm(false, true, m, k, n, self.grad, value_of(self, 1), *ga);
    if (auto* gb = grad_of(self, 1))  // dB += A^T * dC
      kernels::gemm(true, false, k, n, m, value_of(self, 0), self.grad, *gb);
  });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.values()[i * n + j];
  return make_result({n, m}, std::move(out), {a}, [m, n](Node& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*g)[i * n + j] += self.grad[j * m + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k)
      if (auto* g = grad_of(self, k))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = grad_of(self, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& va = value_of(self, 0);
    const auto& vb = value_of(self, 1);
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * vb[i];
    if (auto* g = grad_of(self, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * va[i];
  });
}

Tensor affine(const Tensor& a, double alpha, double beta) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * a[i] + beta;
  return make_result(a.shape(), std::move(out), {a}, [alpha](Node& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += alpha * self.grad[i];
  });
}

Tensor add_rowwise(const Tensor& a, const Tensor& v) {
  require_matrix(a, "add_rowwise");
  const std::size_t m = a.rows(), n = a.cols();
  if (v.numel() != n)
    throw ShapeError("add_rowwise: vector of " + std::to_string(v.numel()) +
                     " for rows of " + std::to_string(n));
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a[i * n + j] + v[j];
  return make_result({m, n}, std::move(out), {a, v}, [m, n](Node& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < m * n; ++i) (*g)[i] += self.grad[i];
    if (auto* g = grad_of(self, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*g)[j] += self.grad[i * n + j];
  });
}

Tensor mul_rowwise(const Tensor& a, const Tensor& v) {
  require_matrix(a, "mul_rowwise");
  const std::size_t m = a.rows(), n = a.cols();
  if (v.numel() != n)
    throw ShapeError("mul_rowwise: vector of " + std::to_string(v.numel()) +
                     " for rows of " + std::to_string(n));
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a[i * n + j] * v[j];
  return make_result({m, n}, std::move(out), {a, v}, [m, n](Node& self) {
    const auto& va = value_of(self, 0);
    const auto& vv = value_of(self, 1);
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*g)[i * n + j] += self.grad[i * n + j] * vv[j];
    if (auto* g = grad_of(self, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*g)[j] += self.grad[i * n + j] * va[i * n + j];
  });
}

Tensor activation(const Tensor& x, Activation kind) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x[i];
    switch (kind) {
      case Activation::sigmoid: out[i] = sigmoid_scalar(v); break;
      case Activation::silu: out[i] = v * sigmoid_scalar(v); break;
      case Activation::softplus: out[i] = softplus_scalar(v); break;
      case Activation::exp: out[i] = std::exp(v); break;
      case Activation::relu: out[i] = v > 0 ? v : 0.0; break;
    }
  }
  return make_result(x.shape(), std::move(out), {x}, [kind](Node& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    const auto& xv = value_of(self, 0);
    for (std::size_t i = 0; i < g->size(); ++i) {
      const double v = xv[i], y = self.value[i];
      double dy;
      switch (kind) {
        case Activation::sigmoid: dy = y * (1.0 - y); break;
        case Activation::silu: {
          const double s = sigmoid_scalar(v);
          dy = s * (1.0 + v * (1.0 - s));
          break;
        }
        case Activation::softplus: dy = sigmoid_scalar(v); break;
        case Activation::exp: dy = y; break;
        case Activation::relu: dy = v > 0 ? 1.0 : 0.0; break;
        default: dy = 0.0;
      }
      (*g)[i] += self.grad[i] * dy;
    }
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return make_result({1}, {s}, {a}, [](Node& self) {
    if (auto* g = grad_of(self, 0))
      for (auto& v : *g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) { return affine(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: " + shape_string(a.shape()) + " -> " + shape_string(shape));
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_result(std::move(shape), std::move(out), {a}, [](Node& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  require_matrix(a, "slice_rows");
  if (begin >= end || end > a.rows())
    throw ShapeError("slice_rows: bad range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") of " + shape_string(a.shape()));
  const std::size_t n = a.cols();
  std::vector<double> out(a.values().begin() + begin * n, a.values().begin() + end * n);
  return make_result({end - begin, n}, std::move(out), {a}, [begin, n](Node& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[begin * n + i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_matrix(a, "slice_cols");
  if (begin >= end || end > a.cols())
    throw ShapeError("slice_cols: bad range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") of " + shape_string(a.shape()));
  const std::size_t m = a.rows(), n = a.cols(), w = end - begin;
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = a[i * n + begin + j];
  return make_result({m, w}, std::move(out), {a}, [m, n, w, begin](Node& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) (*g)[i * n + begin + j] += self.grad[i * w + j];
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: nothing to concatenate");
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.cols() != n) throw ShapeError("concat_rows: column count mismatch");
    offsets.push_back(m);
    m += p.rows();
  }
  std::vector<double> out;
  out.reserve(m * n);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return make_result({m, n}, std::move(out), parts, [offsets, n](Node& self) {
    for (std::size_t k = 0; k < offsets.size(); ++k)
      if (auto* g = grad_of(self, k))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[offsets[k] * n + i];
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_matrix(a, "concat_cols");
  require_matrix(b, "concat_cols");
  if (a.rows() != b.rows())
    throw ShapeError("concat_cols: row count mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  const std::size_t m = a.rows(), na = a.cols(), nb = b.cols(), n = na + nb;
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < na; ++j) out[i * n + j] = a[i * na + j];
    for (std::size_t j = 0; j < nb; ++j) out[i * n + na + j] = b[i * nb + j];
  }
  return make_result({m, n}, std::move(out), {a, b}, [m, na, nb, n](Node& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < na; ++j) (*g)[i * na + j] += self.grad[i * n + j];
    if (auto* g = grad_of(self, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < nb; ++j) (*g)[i * nb + j] += self.grad[i * n + na + j];
  });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index) {
  require_matrix(a, "gather_rows");
  if (index.empty()) throw ShapeError("gather_rows: empty index");
  const std::size_t n = a.cols();
  std::vector<double> out(index.size() * n);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= a.rows()) throw ShapeError("gather_rows: index out of range");
    std::copy_n(a.values().begin() + index[i] * n, n, out.begin() + i * n);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_result({idx.size(), n}, std::move(out), {a}, [idx, n](Node& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < n; ++j) (*g)[idx[i] * n + j] += self.grad[i * n + j];
  });
}

Tensor reverse_rows(const Tensor& a) {
  require_matrix(a, "reverse_rows");
  std::vector<std::size_t> idx(a.rows());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = idx.size() - 1 - i;
  return gather_rows(a, idx);
}

Tensor rms_norm(const Tensor& x, const Tensor& scale, double eps) {
  require_matrix(x, "rms_norm");
  const std::size_t m = x.rows(), n = x.cols();
  if (scale.numel() != n) throw ShapeError("rms_norm: scale size mismatch");
  std::vector<double> out(m * n), inv(m);
  for (std::size_t i = 0; i < m; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) ss += x[i * n + j] * x[i * n + j];
    inv[i] = 1.0 / std::sqrt(ss / static_cast<double>(n) + eps);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] * inv[i] * scale[j];
  }
  return make_result({m, n}, std::move(out), {x, scale}, [m, n, inv](Node& self) {
    const auto& xv = value_of(self, 0);
    const auto& sv = value_of(self, 1);
    auto* gx = grad_of(self, 0);
    auto* gs = grad_of(self, 1);
    for (std::size_t i = 0; i < m; ++i) {
      const double r = inv[i];
      // y_j = x_j r s_j, dr/dx_j = -x_j r^3 / n
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += self.grad[i * n + j] * sv[j] * xv[i * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        const double gy = self.grad[i * n + j];
        if (gx)
          (*gx)[i * n + j] +=
              gy * sv[j] * r - xv[i * n + j] * r * r * r * dot / static_cast<double>(n);
        if (gs) (*gs)[j] += gy * xv[i * n + j] * r;
      }
    }
  });
}

Tensor softmax_rows(const Tensor& x) {
  require_matrix(x, "softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    double mx = x[i * n];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[i * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (out[i * n + j] = std::exp(x[i * n + j] - mx));
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  return make_result({m, n}, std::move(out), {x}, [m, n](Node& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += self.grad[i * n + j] * self.value[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        (*g)[i * n + j] += self.value[i * n + j] * (self.grad[i * n + j] - dot);
    }
  });
}

Tensor depthwise_conv1d_causal(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  require_matrix(x, "depthwise_conv1d_causal");
  require_matrix(kernel, "depthwise_conv1d_causal");
  const std::size_t L = x.rows(), D = x.cols(), K = kernel.cols();
  if (kernel.rows() != D || bias.numel() != D)
    throw ShapeError("depthwise_conv1d_causal: kernel " + shape_string(kernel.shape()) +
                     " / bias incompatible with input " + shape_string(x.shape()));
  std::vector<double> out(L * D);
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t d = 0; d < D; ++d) {
      double acc = bias[d];
      for (std::size_t j = 0; j < K; ++j) {
        // tap j reads position t - (K - 1 - j)
        const std::size_t back = K - 1 - j;
        if (t >= back) acc += kernel[d * K + j] * x[(t - back) * D + d];
      }
      out[t * D + d] = acc;
    }
  return make_result({L, D}, std::move(out), {x, kernel, bias}, [L, D, K](Node& self) {
    const auto& xv = value_of(self, 0);
    const auto& kv = value_of(self, 1);
    auto* gx = grad_of(self, 0);
    auto* gk = grad_of(self, 1);
    auto* gb = grad_of(self, 2);
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t d = 0; d < D; ++d) {
        const double gy = self.grad[t * D + d];
        if (gb) (*gb)[d] += gy;
        for (std::size_t j = 0; j < K; ++j) {
          const std::size_t back = K - 1 - j;
          if (t < back) continue;
          if (gx) (*gx)[(t - back) * D + d] += gy * kv[d * K + j];
          if (gk) (*gk)[d * K + j] += gy * xv[(t - back) * D + d];
        }
      }
  });
}

Tensor patchify3d(const Tensor& video, const Tensor& kernel, const Tensor& bias,
                  PatchSize patch) {
  if (video.rank() != 4) throw ShapeError("patchify3d: video must be [C x T x H x W]");
  const std::size_t Cin = video.dim(0), T = video.dim(1), H = video.dim(2), W = video.dim(3);
  if (patch.t == 0 || patch.h == 0 || patch.w == 0 || T % patch.t || H % patch.h || W % patch.w)
    throw ShapeError("patchify3d: video " + shape_string(video.shape()) +
                     " not divisible by patch " + std::to_string(patch.t) + "x" +
                     std::to_string(patch.h) + "x" + std::to_string(patch.w));
  require_matrix(kernel, "patchify3d");
  const std::size_t Cout = kernel.rows(), P = Cin * patch.volume();
  if (kernel.cols() != P || bias.numel() != Cout)
    throw ShapeError("patchify3d: kernel " + shape_string(kernel.shape()) +
                     " does not match patch volume " + std::to_string(P));
  const std::size_t t = T / patch.t, h = H / patch.h, w = W / patch.w, L = t * h * w;
  // im2col: column order (c, dt, dy, dx)
  std::vector<double> cols(L * P);
  std::vector<std::size_t> src(L * P);
  for (std::size_t ti = 0; ti < t; ++ti)
    for (std::size_t hi = 0; hi < h; ++hi)
      for (std::size_t wi = 0; wi < w; ++wi) {
        const std::size_t token = (ti * h + hi) * w + wi;
        std::size_t col = 0;
        for (std::size_t c = 0; c < Cin; ++c)
          for (std::size_t dt = 0; dt < patch.t; ++dt)
            for (std::size_t dy = 0; dy < patch.h; ++dy)
              for (std::size_t dx = 0; dx < patch.w; ++dx, ++col) {
                const std::size_t idx =
                    ((c * T + ti * patch.t + dt) * H + hi * patch.h + dy) * W + wi * patch.w + dx;
                src[token * P + col] = idx;
                cols[token * P + col] = video[idx];
              }
      }
  std::vector<double> out(L * Cout, 0.0);
  kernels::gemm(false, true, L, Cout, P, cols, kernel.values(), out);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t o = 0; o < Cout; ++o) out[i * Cout + o] += bias[o];
  return make_result({L, Cout}, std::move(out), {video, kernel, bias},
                     [L, Cout, P, cols = std::move(cols), src = std::move(src)](Node& self) {
                       if (auto* gk = grad_of(self, 1))  // dK += dOut^T * cols
                         kernels::gemm(true, false, Cout, P, L, self.grad, cols, *gk);
                       if (auto* gb = grad_of(self, 2))
                         for (std::size_t i = 0; i < L; ++i)
                           for (std::size_t o = 0; o < Cout; ++o) (*gb)[o] += self.grad[i * Cout + o];
                       if (auto* gv = grad_of(self, 0)) {
                         std::vector<double> dcols(L * P, 0.0);
                         kernels::gemm(false, false, L, P, Cout, self.grad, value_of(self, 1), dcols);
                         for (std::size_t i = 0; i < L * P; ++i) (*gv)[src[i]] += dcols[i];
                       }
                     });
}

Tensor cross_entropy(const Tensor& logits, std::size_t label) {
  const std::size_t n = logits.numel();
  if (label >= n) throw ShapeError("cross_entropy: label out of range");
  double mx = logits[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += std::exp(logits[i] - mx);
  const double loss = std::log(z) + mx - logits[label];
  return make_result({1}, {loss}, {logits}, [n, label, mx, z](Node& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    const auto& lv = value_of(self, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double p = std::exp(lv[i] - mx) / z;
      (*g)[i] += self.grad[0] * (p - (i == label ? 1.0 : 0.0));
    }
  });
}

}  // namespace dbm
