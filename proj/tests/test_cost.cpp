#include <cmath>

#include "doctest.h"
#include "dbm/cost.hpp"

using namespace dbm;

namespace {

double rel(double got, double want) { return std::abs(got - want) / want; }

ModelConfig head_only(std::size_t d, std::size_t classes) {
  ModelConfig c;
  c.architecture = Architecture::head_only;
  c.dim = d;
  c.num_classes = classes;
  return c;
}

ModelConfig tiny_variant(std::size_t layers = 4) {
  ModelConfig c = tiny_dual_branch();
  c.layers = layers;
  c.image_height = c.image_width = 16;
  return c;
}

}  // namespace

TEST_CASE("linear head 4 -> 2 with bias has 10 parameters") {
  CHECK(count_params(head_only(4, 2)) == 10);
  DualBranchModel m(head_only(4, 2), 1);
  CHECK(m.parameters().scalar_count() == 10);
}

TEST_CASE("single d -> d linear on one token costs 2d^2 + 2d") {
  for (std::size_t d : {2, 4, 16, 576}) {
    auto r = count_flops(head_only(d, d));
    CHECK(r.flops == 2.0 * d * d + 2.0 * d);
    CHECK(r.macs == 1.0 * d * d + d);
  }
}

TEST_CASE("tiny config counts by hand") {
  // d=8, E=16, N=4, K=4, R=1, 2 layers, 2 tokens + CLS, 192 values per patch
  const std::uint64_t embedding = 8 * 192 + 8 + 8 + 2 * 8 + 2 * 8;
  const std::uint64_t block = 8 + 8 * 32 + 2 * (16 * 4 + 16) + 2 * 16 * 4 + 2 * 16 * 9 +
                              2 * (16 + 16) + 16 * 8;
  const std::uint64_t params = 2 * (embedding + 2 * block) + 8 + (16 * 2 + 2);
  CHECK(count_params(tiny_dual_branch()) == params);

  const double len = 3;
  const double per_block = len * 8 * 32 + 2 * len * 16 * 5 + 2 * len * 16 * 9 + 2 * len * 16 * 2 +
                           2 * len * 16 * 4 + len * 16 * 8;
  const double macs = 2 * (2 * 8 * 193 + 2 * per_block) + 2 * 17;
  CHECK(count_flops(tiny_dual_branch()).macs == macs);
}

TEST_CASE("analytic count equals the instantiated count") {
  for (auto arch : {Architecture::dual, Architecture::spatial, Architecture::temporal})
    for (auto variant : kAllFusionVariants)
      for (auto fin : kAllFinalFusions)
        for (auto bank : {GateBank::scheduled, GateBank::full}) {
          ModelConfig c = tiny_variant();
          c.architecture = arch;
          c.fusion = variant;
          c.final_fusion = fin;
          c.gate_bank = bank;
          c.placement = LateralPlacement::even;
          DualBranchModel m(c, 1);
          INFO(to_string(arch) << " " << to_string(variant) << " " << to_string(fin));
          CHECK(count_params(c) == m.parameters().scalar_count());
        }
  for (auto placement : kAllPlacements) {
    ModelConfig c = tiny_variant(5);
    c.placement = placement;
    c.frames_branch2 = 4;
    c.fusion = FusionVariant::cross_attention;
    DualBranchModel m(c, 1);
    CHECK(count_params(c) == m.parameters().scalar_count());
  }
}

TEST_CASE("breakdown sums to the total") {
  auto p = param_report(full_scale_dual_branch());
  std::uint64_t s = 0;
  for (const auto& [name, v] : p.breakdown) s += v;
  CHECK(s == p.total);
  auto f = count_flops(full_scale_dual_branch());
  double m = 0;
  for (const auto& [name, v] : f.breakdown) m += v;
  CHECK(m == doctest::Approx(f.macs).epsilon(1e-15));
  CHECK(f.flops == 2 * f.macs);
}

TEST_CASE("placement selects gates from a full bank") {
  ModelConfig a = tiny_variant(6), b = tiny_variant(6);
  a.gate_bank = b.gate_bank = GateBank::full;
  a.placement = LateralPlacement::continuous;
  b.placement = LateralPlacement::even;
  CHECK(count_params(a) == count_params(b));
  a.gate_bank = b.gate_bank = GateBank::scheduled;
  CHECK(count_params(a) == count_params(b) + 2 * 8);
}

TEST_CASE("skips are parameter free") {
  ModelConfig a = tiny_variant(), b = tiny_variant();
  b.skips = false;
  CHECK(count_params(a) == count_params(b));
  CHECK(count_flops(a).macs == count_flops(b).macs);
}

TEST_CASE("compute grows linearly with depth") {
  ModelConfig a = tiny_variant(2), b = tiny_variant(4), c = tiny_variant(6);
  a.lateral = b.lateral = c.lateral = false;
  const double fa = count_flops(a).macs, fb = count_flops(b).macs, fc = count_flops(c).macs;
  CHECK(fc - fb == doctest::Approx(fb - fa));
}

TEST_CASE("full-scale single branch against the published size") {
  auto c = full_scale_single_branch();
  auto ref = reference_figures(c);
  REQUIRE(ref);
  CHECK(ref->params == 74e6);
  CHECK(ref->compute == 806e9);
  CHECK(rel(static_cast<double>(count_params(c)), 74e6) <= 0.05);
  CHECK(rel(count_flops(c).macs, 806e9) <= 0.15);
}

TEST_CASE("full-scale dual branch against the published size") {
  auto c = full_scale_dual_branch();
  auto ref = reference_figures(c);
  REQUIRE(ref);
  CHECK(ref->params == 154.3e6);
  CHECK(ref->compute == 1830e9);
  CHECK(rel(static_cast<double>(count_params(c)), 154.3e6) <= 0.05);
  CHECK(rel(count_flops(c).macs, 1830e9) <= 0.15);
}

TEST_CASE("reference figures only for the full-scale layouts") {
  CHECK_FALSE(reference_figures(tiny_dual_branch()));
  auto c = full_scale_dual_branch();
  c.layers = 24;
  CHECK_FALSE(reference_figures(c));
}
