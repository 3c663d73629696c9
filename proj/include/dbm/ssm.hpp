#pragma once

// State-space core: zero-order-hold discretization, the linear recurrence,
// the input-dependent selective scan, and a continuous-time integrator used
// to check the discrete forms.

#include <cstddef>
#include <span>
#include <vector>

#include "dbm/kernels.hpp"
#include "dbm/tensor.hpp"

namespace dbm::ssm {

using kernels::Discretization;

struct Discretized {
  double a_bar = 0.0;
  double b_bar = 0.0;
};

// A_bar = exp(delta A); B_bar = (delta A)^-1 (exp(delta A) - 1) delta B,
// falling back to the series around delta A = 0. Euler mode: B_bar = delta B.
// Throws std::invalid_argument for delta <= 0.
Discretized discretize(double a, double b, double delta,
                       Discretization mode = Discretization::zoh);

// Diagonal A[N] and B[N] at one timescale.
struct DiscretizedDiag {
  std::vector<double> a_bar;
  std::vector<double> b_bar;
};
DiscretizedDiag discretize(std::span<const double> a, std::span<const double> b,
                           double delta, Discretization mode = Discretization::zoh);

// Time-invariant discretized system with independent diagonal states per
// channel: a_bar, b_bar, c are [D x N].
struct DiscreteSystem {
  std::size_t channels = 0;
  std::size_t state = 0;
  std::vector<double> a_bar, b_bar, c;
};

// h_t = A_bar h_{t-1} + B_bar x_t, y_t = C h_t with h_0 = 0. x is [L x D].
std::vector<double> recurrence(const DiscreteSystem& sys, std::span<const double> x,
                               std::size_t length);

// Continuous MIMO system h' = A h + B x, y = C h with full matrices
// A [N x N], B [N x M], C [P x N]; x is [L x M], held constant over each step
// of width delta and integrated with classical RK4 at delta / substeps.
// Returns y sampled at the end of every step, [L x P].
struct ContinuousSystem {
  std::size_t state = 0, inputs = 0, outputs = 0;
  std::vector<double> a, b, c;
};
std::vector<double> ode_reference(const ContinuousSystem& sys,
                                  std::span<const double> x, std::size_t length,
                                  double delta, std::size_t substeps = 100);

// Fused differentiable scan: u, delta [L x D], a [D x N], b, c [L x N] -> y [L x D].
Tensor scan(const Tensor& u, const Tensor& delta, const Tensor& a, const Tensor& b,
            const Tensor& c, Discretization mode = Discretization::zoh);

// Input-dependent projections for one scan direction over D channels with
// state size N and timescale rank R.
struct SelectiveParams {
  Tensor a_log;    // [D x N], A = -exp(a_log)
  Tensor x_proj;   // [D x (R + 2N)] -> (delta_low, B, C)
  Tensor dt_proj;  // [R x D]
  Tensor dt_bias;  // [D]
  std::size_t rank() const { return dt_proj.dim(0); }
  std::size_t state() const { return a_log.dim(1); }
};

// Computes B_t, C_t, delta_t = softplus(x_t W_low W_up + bias) from x, then
// runs scan(). x is [L x D].
Tensor selective_scan(const Tensor& x, const SelectiveParams& params,
                      Discretization mode = Discretization::zoh);

// Per-position quantities selective_scan derives, exposed for inspection.
struct SelectiveTerms {
  Tensor delta, a, b, c;
};
SelectiveTerms selective_terms(const Tensor& x, const SelectiveParams& params);

// Bias such that softplus(bias) == dt.
double inverse_softplus(double dt);

}  // namespace dbm::ssm
