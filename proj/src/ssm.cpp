#include "dbm/ssm.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "dbm/ops.hpp"

namespace dbm::ssm {

using detail::Node;

Discretized discretize(double a, double b, double delta, Discretization mode) {
  if (!(delta > 0.0)) throw std::invalid_argument("discretize: timescale must be positive");
  const double z = delta * a;
  const double coef = mode == Discretization::zoh ? delta * kernels::zoh_phi(z) : delta;
  return {std::exp(z), coef * b};
}

DiscretizedDiag discretize(std::span<const double> a, std::span<const double> b,
                           double delta, Discretization mode) {
  if (a.size() != b.size()) throw ShapeError("discretize: A and B sizes differ");
  DiscretizedDiag out;
  for (std::size_t n = 0; n < a.size(); ++n) {
    const auto d = discretize(a[n], b[n], delta, mode);
    out.a_bar.push_back(d.a_bar);
    out.b_bar.push_back(d.b_bar);
  }
  return out;
}

std::vector<double> recurrence(const DiscreteSystem& sys, std::span<const double> x,
                               std::size_t length) {
  const std::size_t D = sys.channels, N = sys.state;
  if (x.size() != length * D) throw ShapeError("recurrence: input is not [L x D]");
  if (sys.a_bar.size() != D * N || sys.b_bar.size() != D * N || sys.c.size() != D * N)
    throw ShapeError("recurrence: system matrices are not [D x N]");
  std::vector<double> h(D * N, 0.0), y(length * D, 0.0);
  for (std::size_t t = 0; t < length; ++t)
    for (std::size_t d = 0; d < D; ++d) {
      double acc = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        auto& s = h[d * N + n];
        s = sys.a_bar[d * N + n] * s + sys.b_bar[d * N + n] * x[t * D + d];
        acc += sys.c[d * N + n] * s;
      }
      y[t * D + d] = acc;
    }
  return y;
}

std::vector<double> ode_reference(const ContinuousSystem& sys, std::span<const double> x,
                                  std::size_t length, double delta, std::size_t substeps) {
  const std::size_t N = sys.state, M = sys.inputs, P = sys.outputs;
  if (sys.a.size() != N * N || sys.b.size() != N * M || sys.c.size() != P * N)
    throw ShapeError("ode_reference: system matrices have wrong sizes");
  if (x.size() != length * M) throw ShapeError("ode_reference: input is not [L x M]");
  if (!(delta > 0.0) || substeps == 0) throw std::invalid_argument("ode_reference: bad step");

  std::vector<double> h(N, 0.0), drive(N), k1(N), k2(N), k3(N), k4(N), tmp(N);
  auto deriv = [&](const std::vector<double>& s, std::vector<double>& out) {
    for (std::size_t i = 0; i < N; ++i) {
      double acc = drive[i];
      for (std::size_t j = 0; j < N; ++j) acc += sys.a[i * N + j] * s[j];
      out[i] = acc;
    }
  };
  const double dt = delta / static_cast<double>(substeps);
  std::vector<double> y(length * P, 0.0);
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t i = 0; i < N; ++i) {
      double acc = 0.0;
      for (std::size_t m = 0; m < M; ++m) acc += sys.b[i * M + m] * x[t * M + m];
      drive[i] = acc;
    }
    for (std::size_t s = 0; s < substeps; ++s) {
      deriv(h, k1);
      for (std::size_t i = 0; i < N; ++i) tmp[i] = h[i] + 0.5 * dt * k1[i];
      deriv(tmp, k2);
      for (std::size_t i = 0; i < N; ++i) tmp[i] = h[i] + 0.5 * dt * k2[i];
      deriv(tmp, k3);
      for (std::size_t i = 0; i < N; ++i) tmp[i] = h[i] + dt * k3[i];
      deriv(tmp, k4);
      for (std::size_t i = 0; i < N; ++i)
        h[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    for (std::size_t p = 0; p < P; ++p) {
      double acc = 0.0;
      for (std::size_t i = 0; i < N; ++i) acc += sys.c[p * N + i] * h[i];
      y[t * P + p] = acc;
    }
  }
  return y;
}

Tensor scan(const Tensor& u, const Tensor& delta, const Tensor& a, const Tensor& b,
            const Tensor& c, Discretization mode) {
  if (u.rank() != 2 || delta.shape() != u.shape())
    throw ShapeError("scan: u and delta must both be [L x D]");
  const std::size_t L = u.rows(), D = u.cols();
  if (a.rank() != 2 || a.rows() != D)
    throw ShapeError("scan: A must be [D x N], got " + shape_string(a.shape()));
  const std::size_t N = a.cols();
  if (b.shape() != Shape{L, N} || c.shape() != Shape{L, N})
    throw ShapeError("scan: B and C must be [L x N]; length mismatch with input");
  for (double dt : delta.values())
    if (!(dt > 0.0)) throw NumericError("scan: non-positive timescale");

  const kernels::ScanDims dims{L, D, N};
  auto states = std::make_shared<std::vector<double>>(D * L * N);
  std::vector<double> y(L * D, 0.0);
  kernels::scan_forward(dims, {u.values(), delta.values(), a.values(), b.values(), c.values()},
                        mode, y, *states);
  return make_result({L, D}, std::move(y), {u, delta, a, b, c}, [dims, mode, states](Node& self) {
    std::vector<std::vector<double>> sinks(5);
    for (std::size_t i = 0; i < 5; ++i) sinks[i].assign(self.inputs[i]->value.size(), 0.0);
    const kernels::ScanInputs in{self.inputs[0]->value, self.inputs[1]->value,
                                 self.inputs[2]->value, self.inputs[3]->value,
                                 self.inputs[4]->value};
    kernels::scan_backward(dims, in, mode, *states, self.grad,
                           {sinks[0], sinks[1], sinks[2], sinks[3], sinks[4]});
    for (std::size_t i = 0; i < 5; ++i) {
      auto& node = *self.inputs[i];
      if (!node.requires_grad) continue;
      auto& g = node.ensure_grad();
      for (std::size_t j = 0; j < g.size(); ++j) g[j] += sinks[i][j];
    }
  });
}

SelectiveTerms selective_terms(const Tensor& x, const SelectiveParams& p) {
  const std::size_t R = p.rank(), N = p.state();
  if (x.rank() != 2 || x.cols() != p.a_log.rows())
    throw ShapeError("selective_scan: input channels do not match parameters");
  if (p.x_proj.shape() != Shape{x.cols(), R + 2 * N})
    throw ShapeError("selective_scan: x_proj must be [D x (R + 2N)]");
  Tensor proj = matmul(x, p.x_proj);
  Tensor dt_low = slice_cols(proj, 0, R);
  Tensor b = slice_cols(proj, R, R + N);
  Tensor c = slice_cols(proj, R + N, R + 2 * N);
  Tensor delta = softplus(add_rowwise(matmul(dt_low, p.dt_proj), p.dt_bias));
  Tensor a = affine(exp(p.a_log), -1.0);
  return {delta, a, b, c};
}

Tensor selective_scan(const Tensor& x, const SelectiveParams& params, Discretization mode) {
  auto terms = selective_terms(x, params);
  return scan(x, terms.delta, terms.a, terms.b, terms.c, mode);
}

double inverse_softplus(double dt) { return dt + std::log(-std::expm1(-dt)); }

}  // namespace dbm::ssm
