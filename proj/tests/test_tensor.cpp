#include <cmath>
#include <functional>

#include "doctest.h"
#include "dbm/ops.hpp"
#include "helpers.hpp"

using namespace dbm;
using doctest::Approx;

TEST_CASE("matmul examples") {
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto b = Tensor::from({2, 2}, {5, 6, 7, 8});
  auto a = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto r = matmul(eye, b);
  CHECK(std::vector<double>(r.values().begin(), r.values().end()) == std::vector<double>{5, 6, 7, 8});
  r = matmul(a, b);
  CHECK(std::vector<double>(r.values().begin(), r.values().end()) ==
        std::vector<double>{19, 22, 43, 50});
  auto z = matmul(Tensor::zeros({2, 3}), Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6}));
  CHECK(z.shape() == Shape{2, 2});
  for (double v : z.values()) CHECK(v == 0.0);
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
}

TEST_CASE("activation values") {
  CHECK(sigmoid(Tensor::scalar(0)).item() == 0.5);
  CHECK(silu(Tensor::scalar(0)).item() == 0.0);
  CHECK(softplus(Tensor::scalar(0)).item() == Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(exp(Tensor::scalar(1)).item() == Approx(std::exp(1.0)));
  CHECK(relu(Tensor::from({2}, {-1, 2}))[0] == 0.0);
  CHECK(relu(Tensor::from({2}, {-1, 2}))[1] == 2.0);
  // large arguments stay finite
  CHECK(softplus(Tensor::scalar(800)).item() == 800.0);
  CHECK(sigmoid(Tensor::scalar(-800)).item() >= 0.0);
}

TEST_CASE("depthwise causal conv") {
  auto x = Tensor::from({3, 1}, {1, 2, 3});
  // kernel width 1: identity
  auto id = depthwise_conv1d_causal(x, Tensor::from({1, 1}, {1}), Tensor::zeros({1}));
  CHECK(testing::max_abs_diff(id.values(), x.values()) == 0.0);
  // width 2, last tap is the current position: [0, 1] passes input through
  auto delta = depthwise_conv1d_causal(x, Tensor::from({1, 2}, {0, 1}), Tensor::zeros({1}));
  CHECK(testing::max_abs_diff(delta.values(), x.values()) == 0.0);
  // [1, 0] reads the previous position with zero left padding
  auto shift = depthwise_conv1d_causal(x, Tensor::from({1, 2}, {1, 0}), Tensor::zeros({1}));
  CHECK(shift[0] == 0.0);
  CHECK(shift[1] == 1.0);
  CHECK(shift[2] == 2.0);
  CHECK_THROWS_AS(depthwise_conv1d_causal(x, Tensor::from({2, 1}, {1, 1}), Tensor::zeros({2})),
                  ShapeError);
}

TEST_CASE("patchify sums a constant patch") {
  const double v = 0.3;
  auto video = Tensor::full({3, 1, 2, 2}, v);
  auto kernel = Tensor::full({2, 12}, 1.0);
  auto out = patchify3d(video, kernel, Tensor::zeros({2}), {1, 2, 2});
  REQUIRE(out.shape() == Shape{1, 2});
  // 3 channels x 4 pixels
  CHECK(out[0] == Approx(12 * v));
  // single-channel version of the same oracle: one channel lit gives 4v
  auto one = Tensor::zeros({3, 1, 2, 2});
  std::vector<double> vals(12, 0.0);
  for (int i = 0; i < 4; ++i) vals[i] = v;
  auto out1 = patchify3d(Tensor::from({3, 1, 2, 2}, vals), kernel, Tensor::zeros({2}), {1, 2, 2});
  CHECK(out1[1] == Approx(4 * v));
  CHECK_THROWS_AS(patchify3d(Tensor::zeros({3, 1, 3, 2}), kernel, Tensor::zeros({2}), {1, 2, 2}),
                  ShapeError);
}

TEST_CASE("backward examples") {
  auto theta = Tensor::variable({2, 3}, {1, 2, 3, 4, 5, 6});
  backward(sum(theta));
  for (double g : theta.grad()) CHECK(g == 1.0);

  auto t2 = Tensor::variable({2}, {1, -2});
  backward(sum(mul(t2, t2)));
  CHECK(t2.grad()[0] == 2.0);
  CHECK(t2.grad()[1] == -4.0);

  auto t3 = Tensor::variable({2}, {1, 2});
  backward(Tensor::scalar(3.0));
  for (double g : t3.grad()) CHECK(g == 0.0);

  CHECK_THROWS_AS(backward(t2), ShapeError);
}

TEST_CASE("gradients accumulate until zero_grad") {
  auto t = Tensor::variable({2}, {1, 2});
  backward(sum(t));
  backward(sum(t));
  CHECK(t.grad()[0] == 2.0);
  t.zero_grad();
  CHECK(t.grad()[0] == 0.0);
}

TEST_CASE("backward is linear in the loss") {
  std::mt19937_64 rng(4);
  auto a = testing::param({3, 4}, rng);
  auto b = testing::param({4, 2}, rng);
  auto l1 = [&] { return testing::weighted_sum(silu(matmul(a, b)), 1); };
  auto l2 = [&] { return testing::weighted_sum(sigmoid(matmul(a, b)), 2); };
  backward(l1());
  std::vector<double> g1(a.grad().begin(), a.grad().end());
  a.zero_grad();
  b.zero_grad();
  backward(l2());
  std::vector<double> g2(a.grad().begin(), a.grad().end());
  a.zero_grad();
  b.zero_grad();
  backward(add(l1(), l2()));
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(a.grad()[i] == Approx(g1[i] + g2[i]).epsilon(1e-14));
}

TEST_CASE("matmul associativity") {
  std::mt19937_64 rng(5);
  auto a = Tensor::from({3, 4}, testing::randn(12, rng));
  auto b = Tensor::from({4, 5}, testing::randn(20, rng));
  auto c = Tensor::from({5, 2}, testing::randn(10, rng));
  auto l = matmul(matmul(a, b), c);
  auto r = matmul(a, matmul(b, c));
  CHECK(testing::max_abs_diff(l.values(), r.values()) < 1e-10);
}

TEST_CASE("finite_diff_check examples") {
  auto theta = Tensor::variable({3}, {0.5, -1.5, 2.0});
  std::vector<Parameter> ps{{"theta", theta}};
  auto quad = finite_diff_check([&] { return sum(mul(theta, theta)); }, ps, 1e-5);
  CHECK(quad.max_relative_error < 1e-8);
  CHECK(quad.coordinates == 3);
  auto lin = finite_diff_check([&] { return sum(affine(theta, 3.0, 1.0)); }, ps, 1e-5);
  CHECK(lin.max_relative_error < 1e-10);
  CHECK_THROWS(finite_diff_check([&] { return sum(theta); }, ps, 0.0));
  auto t32 = Tensor::variable({1}, {1.0}, Precision::f32);
  std::vector<Parameter> p32{{"t", t32}};
  CHECK_THROWS(finite_diff_check([&] { return sum(t32); }, p32, 1e-5));
}

TEST_CASE("finite_diff_check catches a wrong gradient") {
  // relu at exactly 0 has a one-sided derivative, so a kink shows up as a
  // mismatch rather than silently passing
  auto theta = Tensor::variable({1}, {0.0});
  std::vector<Parameter> ps{{"theta", theta}};
  auto r = finite_diff_check([&] { return sum(relu(theta)); }, ps, 1e-5);
  CHECK(r.max_relative_error > 0.1);
}

namespace {

void check_op(const char* name, std::vector<Tensor> inputs, const std::function<Tensor()>& f,
              double tol = 1e-6) {
  std::vector<Parameter> ps;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    ps.push_back({std::string(name) + std::to_string(i), inputs[i]});
  auto r = finite_diff_check(f, ps, 1e-6);
  INFO(name << " worst " << r.worst_parameter << "[" << r.worst_index << "]");
  CHECK(r.max_relative_error < tol);
}

}  // namespace

TEST_CASE("every primitive passes a gradient check") {
  std::mt19937_64 rng(11);
  using testing::param;
  using testing::weighted_sum;
  auto a = param({3, 4}, rng), b = param({4, 2}, rng), c = param({3, 4}, rng);
  auto v = param({4}, rng);
  check_op("matmul", {a, b}, [&] { return weighted_sum(matmul(a, b)); });
  check_op("transpose", {a}, [&] { return weighted_sum(transpose(a)); });
  check_op("add", {a, c}, [&] { return weighted_sum(add(a, c)); });
  check_op("sub", {a, c}, [&] { return weighted_sum(sub(a, c)); });
  check_op("mul", {a, c}, [&] { return weighted_sum(mul(a, c)); });
  check_op("affine", {a}, [&] { return weighted_sum(affine(a, -1.7, 0.3)); });
  check_op("add_rowwise", {a, v}, [&] { return weighted_sum(add_rowwise(a, v)); });
  check_op("mul_rowwise", {a, v}, [&] { return weighted_sum(mul_rowwise(a, v)); });
  for (auto kind : {Activation::sigmoid, Activation::silu, Activation::softplus, Activation::exp}) {
    check_op("activation", {a}, [&] { return weighted_sum(activation(a, kind)); });
  }
  // relu away from its kink
  auto away = Tensor::variable({5}, {-2.0, -0.5, 0.4, 1.0, 3.0});
  check_op("relu", {away}, [&] { return weighted_sum(relu(away)); });
  check_op("sum", {a}, [&] { return sum(mul(a, a)); });
  check_op("mean", {a}, [&] { return mean(mul(a, a)); });
  check_op("reshape", {a}, [&] { return weighted_sum(reshape(a, {2, 6})); });
  check_op("slice_rows", {a}, [&] { return weighted_sum(slice_rows(a, 1, 3)); });
  check_op("slice_cols", {a}, [&] { return weighted_sum(slice_cols(a, 1, 3)); });
  check_op("concat_rows", {a, c}, [&] { return weighted_sum(concat_rows({a, c, a})); });
  check_op("concat_cols", {a, c}, [&] { return weighted_sum(concat_cols(a, c)); });
  std::vector<std::size_t> idx{2, 0, 2, 1};
  check_op("gather_rows", {a}, [&] { return weighted_sum(gather_rows(a, idx)); });
  check_op("reverse_rows", {a}, [&] { return weighted_sum(reverse_rows(a)); });
  check_op("rms_norm", {a, v}, [&] { return weighted_sum(rms_norm(a, v)); });
  check_op("softmax_rows", {a}, [&] { return weighted_sum(softmax_rows(a)); });
  auto x = param({6, 3}, rng), k = param({3, 4}, rng), kb = param({3}, rng);
  check_op("conv1d", {x, k, kb}, [&] { return weighted_sum(depthwise_conv1d_causal(x, k, kb)); });
  auto video = param({3, 2, 4, 4}, rng), pk = param({5, 12}, rng), pb = param({5}, rng);
  check_op("patchify3d", {video, pk, pb},
           [&] { return weighted_sum(patchify3d(video, pk, pb, {1, 2, 2})); });
  auto logits = param({3}, rng);
  check_op("cross_entropy", {logits}, [&] { return cross_entropy(logits, 1); });
}

TEST_CASE("non-finite values are an error state") {
  CHECK_THROWS_AS(Tensor::from({1}, {std::nan("")}), NumericError);
  auto big = Tensor::variable({1}, {800.0});
  CHECK_THROWS_AS(exp(big), NumericError);
}

TEST_CASE("shape invariants") {
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);
  auto t = Tensor::variable({2, 3}, {1, 2, 3, 4, 5, 6});
  backward(sum(t));
  CHECK(t.grad().size() == t.numel());
}

TEST_CASE("parameter names are unique") {
  ParameterSet ps;
  ps.add("branch1.block0.gate", Tensor::zeros({2}));
  CHECK_THROWS_AS(ps.add("branch1.block0.gate", Tensor::zeros({2})), ConfigError);
  CHECK_THROWS_AS(ps.add("has space", Tensor::zeros({2})), ConfigError);
  CHECK(ps.at("branch1.block0.gate").tensor.requires_grad());
  CHECK(ps.scalar_count() == 2);
}

TEST_CASE("f32 mode rounds stored values") {
  auto t = Tensor::from({1}, {0.1}, Precision::f32);
  CHECK(t[0] == static_cast<double>(0.1f));
  auto y = affine(t, 3.0);
  CHECK(y.precision() == Precision::f32);
  CHECK(y[0] == static_cast<double>(static_cast<float>(3.0 * static_cast<double>(0.1f))));
}
