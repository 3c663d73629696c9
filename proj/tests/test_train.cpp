#include <cmath>
#include <numbers>

#include "doctest.h"
#include "dbm/cost.hpp"
#include "dbm/train.hpp"

using namespace dbm;

TEST_CASE("lr_at examples") {
  Schedule s;  // 55 epochs, 5 warmup, 1e-4, 1e-6
  CHECK(lr_at(s, 5) == doctest::Approx(1e-4).epsilon(1e-15));
  CHECK(lr_at(s, 55) == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK(lr_at(s, 0) == 1e-6);
  const double mid = 1e-6 + 0.5 * (1e-4 - 1e-6) * (1 + std::cos(std::numbers::pi * 25.0 / 50.0));
  CHECK(std::abs(lr_at(s, 30) - mid) < 1e-18);
  CHECK_THROWS_AS(lr_at(s, -0.1), std::out_of_range);
  CHECK_THROWS_AS(lr_at(s, 55.5), std::out_of_range);
}

TEST_CASE("lr_at is continuous at the warmup boundary") {
  Schedule s;
  const double below = lr_at(s, 5 - 1e-9), at = lr_at(s, 5), above = lr_at(s, 5 + 1e-9);
  CHECK(std::abs(below - at) < 1e-12);
  CHECK(std::abs(above - at) < 1e-12);
  for (double e = 0; e <= 55; e += 0.25) {
    CHECK(lr_at(s, e) >= s.min_lr - 1e-18);
    CHECK(lr_at(s, e) <= s.base_lr + 1e-18);
  }
}

TEST_CASE("schedule validation") {
  Schedule s;
  s.warmup_epochs = 55;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = Schedule{};
  s.min_lr = 1.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

namespace {

struct Single {
  ParameterSet set;
  Tensor& theta;
  explicit Single(std::vector<double> v, bool decay = true)
      : theta(set.add("theta", Tensor::variable({v.size()}, v), true, decay)) {}
  void grad(std::vector<double> g) {
    auto dst = theta.mutable_grad();
    std::copy(g.begin(), g.end(), dst.begin());
  }
};

}  // namespace

TEST_CASE("AdamW examples") {
  {
    Single s({1.5, -2.0});
    AdamW opt(s.set, {0.9, 0.999, 1e-8, 0.0});
    s.grad({0, 0});
    opt.step(1e-3);
    CHECK(s.theta[0] == 1.5);
    CHECK(s.theta[1] == -2.0);
  }
  {
    Single s({1.5, -2.0});
    AdamW opt(s.set, {0.9, 0.999, 1e-8, 0.05});
    s.grad({0, 0});
    opt.step(1e-3);
    CHECK(s.theta[0] == 1.5 * (1 - 1e-3 * 0.05));
    CHECK(s.theta[1] == -2.0 * (1 - 1e-3 * 0.05));
  }
  {
    Single s({0.0});
    AdamW opt(s.set, {0.9, 0.999, 1e-8, 0.0});
    s.grad({1.0});
    opt.step(1e-3);
    // mhat = vhat = 1: step = lr / (1 + eps)
    CHECK(std::abs(s.theta[0] + 1e-3 / (1 + 1e-8)) < 1e-18);
  }
  {
    Single s({2.0}, false);
    AdamW opt(s.set, {0.9, 0.999, 1e-8, 0.5});
    s.grad({0.0});
    opt.step(1e-2);
    CHECK(s.theta[0] == 2.0);
  }
}

TEST_CASE("AdamW is pure given identical state") {
  Single a({0.3, -0.7}), b({0.3, -0.7});
  AdamW oa(a.set, {}), ob(b.set, {});
  for (int i = 0; i < 5; ++i) {
    a.grad({0.2, -1.1});
    b.grad({0.2, -1.1});
    oa.step(1e-3);
    ob.step(1e-3);
    CHECK(a.theta[0] == b.theta[0]);
    CHECK(a.theta[1] == b.theta[1]);
  }
  CHECK(oa.steps() == 5);
}

TEST_CASE("cross_entropy examples") {
  CHECK(cross_entropy(Tensor::from({2}, {0, 0}), 0).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const double big = cross_entropy(Tensor::from({2}, {30, -30}), 0).item();
  CHECK(std::isfinite(big));
  CHECK(big < 1e-25);
  CHECK(std::abs(cross_entropy(Tensor::from({2}, {1, 0}), 0).item() - std::log1p(std::exp(-1.0))) < 1e-15);
  CHECK(std::abs(cross_entropy(Tensor::from({2}, {1, 0}), 0).item() - 0.313262) < 1e-6);
  CHECK_THROWS_AS(cross_entropy(Tensor::from({2}, {1, 0}), 2), ShapeError);
}

TEST_CASE("cross_entropy is shift invariant") {
  for (double c : {-100.0, -1.0, 0.5, 40.0}) {
    for (std::size_t label : {0u, 1u, 2u}) {
      auto base = cross_entropy(Tensor::from({3}, {0.3, -1.2, 2.0}), label).item();
      auto moved = cross_entropy(Tensor::from({3}, {0.3 + c, -1.2 + c, 2.0 + c}), label).item();
      CHECK(std::abs(base - moved) < 1e-12);
    }
  }
}

TEST_CASE("evaluation metrics") {
  auto all = evaluate_predictions({0, 1, 0, 1}, {0, 1, 0, 1});
  CHECK(all.top1 == 100.0);
  CHECK(all.f1_violent == 1.0);
  CHECK(all.f1_nonviolent == 1.0);

  auto violent = evaluate_predictions({0, 0, 1, 1}, {0, 0, 0, 0});
  CHECK(violent.f1_violent == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(violent.f1_nonviolent == 0.0);
  CHECK(violent.top1 == 50.0);
  CHECK(violent.confusion[1][0] == 2);

  auto one = evaluate_predictions({1}, {0});
  CHECK(one.top1 == 0.0);
  CHECK(evaluate_predictions({1}, {1}).top1 == 100.0);

  std::size_t sum = 0;
  for (auto& row : violent.confusion)
    for (auto v : row) sum += v;
  CHECK(sum == 4);

  CHECK_THROWS_AS(evaluate_predictions({}, {}), InputError);
  CHECK_THROWS_AS(evaluate_predictions({0}, {0, 1}), InputError);
}

TEST_CASE("McNemar examples") {
  auto a = mcnemar_exact(15, 46);
  CHECK(std::abs(a.p - 8.84e-5) < 0.005e-5);
  auto b = mcnemar_exact(32, 52);
  CHECK(std::abs(b.p - 0.0375) < 0.00005);
  for (std::size_t n : {1u, 5u, 40u}) CHECK(mcnemar_exact(n, n).p == 1.0);
  auto z = mcnemar_exact(0, 0);
  CHECK(z.undefined);
  CHECK(z.p == 1.0);
  // (0, 3): 2 * 1/8
  CHECK(mcnemar_exact(0, 3).p == 0.25);
}

TEST_CASE("McNemar symmetry and range") {
  for (std::size_t x = 0; x <= 30; ++x)
    for (std::size_t y = 0; y <= 30; ++y) {
      if (x == 0 && y == 0) continue;
      auto p = mcnemar_exact(x, y).p;
      CHECK(p == mcnemar_exact(y, x).p);
      CHECK(p > 0.0);
      CHECK(p <= 1.0);
    }
  // big-integer tails keep tiny p-values positive until double underflow
  auto far = mcnemar_exact(10, 900).p;
  CHECK(far > 0.0);
  CHECK(far < 1e-200);
}

TEST_CASE("paired disagreement counts") {
  auto d = paired_disagreement({0, 1, 0, 1}, {1, 1, 0, 0}, {0, 1, 1, 1});
  CHECK(d.n01 == 2);
  CHECK(d.n10 == 1);
}

namespace {

ModelConfig desk_model() {
  ModelConfig c = tiny_dual_branch();
  c.frames_branch1 = c.frames_branch2 = 4;
  c.image_height = c.image_width = 16;
  c.dim = 8;
  return c;
}

}  // namespace

TEST_CASE("zero learning rate leaves parameters unchanged") {
  auto clips = synth_corpus(1, 8, {4, 16, 16});
  DualBranchModel m(desk_model(), 3);
  auto before = m.parameters().snapshot();
  TrainOptions opt;
  opt.schedule = {3, 1, 0.0, 0.0};
  opt.batch_size = 4;
  auto r = train_loop(m, clips, {}, opt);
  CHECK(r.trace.size() == 3);
  CHECK(m.parameters().snapshot() == before);
}

TEST_CASE("same seed gives bit-identical traces") {
  auto train = synth_corpus(2, 12, {4, 16, 16});
  auto val = synth_corpus(3, 6, {4, 16, 16}, "val");
  TrainOptions opt;
  opt.schedule = {3, 1, 1e-3, 1e-5};
  opt.batch_size = 4;
  opt.seed = 9;
  DualBranchModel a(desk_model(), 5), b(desk_model(), 5);
  auto ra = train_loop(a, train, val, opt);
  auto rb = train_loop(b, train, val, opt);
  CHECK(metrics_csv(ra.trace) == metrics_csv(rb.trace));
  CHECK(a.parameters().snapshot() == b.parameters().snapshot());
  CHECK(ra.best_epoch == rb.best_epoch);
  CHECK(ra.best_epoch >= 1);
}

TEST_CASE("training reduces loss on the synthetic task") {
  auto train = synth_corpus(4, 16, {4, 16, 16});
  TrainOptions opt;
  opt.schedule = {8, 1, 1e-3, 1e-5};
  opt.batch_size = 4;
  DualBranchModel m(desk_model(), 6);
  auto r = train_loop(m, train, {}, opt);
  REQUIRE(r.trace.size() == 8);
  CHECK(r.trace.back().train_loss < r.trace.front().train_loss);
  CHECK_FALSE(r.diverged);
}

TEST_CASE("metrics csv layout") {
  std::vector<EpochMetrics> t{{1, 1e-4, 0.5, 50, 60, 0.5, 0.7}};
  auto s = metrics_csv(t);
  CHECK(s.rfind("epoch,lr,train_loss,train_acc,val_acc,f1_v,f1_nv\n", 0) == 0);
  CHECK(s.find("1,0.0001") != std::string::npos);
}
