#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "dbm/checkpoint.hpp"
#include "dbm/cost.hpp"
#include "dbm/model.hpp"

using namespace dbm;

TEST_CASE("checkpoint round trip is bit-exact") {
  DualBranchModel a(tiny_dual_branch(), 1), b(tiny_dual_branch(), 2);
  CHECK(a.parameters().snapshot() != b.parameters().snapshot());
  std::stringstream ss;
  write_checkpoint(ss, a.parameters());
  apply_checkpoint(read_checkpoint(ss), b.parameters());
  CHECK(a.parameters().snapshot() == b.parameters().snapshot());
}

TEST_CASE("checkpoint header lists every tensor") {
  ParameterSet ps;
  ps.add("w", Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}));
  ps.add("h", Tensor::from({1}, {0.1}, Precision::f32));
  std::stringstream ss;
  write_checkpoint(ss, ps);
  const std::string s = ss.str();
  CHECK(s.rfind("DBMCKPT\nversion 1\ncount 2\nw 2x3 f64\nh 1 f32\nend\n", 0) == 0);
  const std::size_t header = std::string("DBMCKPT\nversion 1\ncount 2\nw 2x3 f64\nh 1 f32\nend\n").size();
  CHECK(s.size() == header + 6 * 8 + 4);
  // little-endian: first f64 is 1.0 = 0x3FF0000000000000
  CHECK(static_cast<unsigned char>(s[header + 7]) == 0x3F);
  CHECK(static_cast<unsigned char>(s[header + 6]) == 0xF0);
  auto entries = read_checkpoint(ss);
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].shape == Shape{2, 3});
  CHECK(entries[1].precision == Precision::f32);
  CHECK(entries[1].values[0] == static_cast<double>(0.1f));
}

TEST_CASE("checkpoint rejects mismatches and damage") {
  DualBranchModel a(tiny_dual_branch(), 1);
  std::stringstream ss;
  write_checkpoint(ss, a.parameters());
  const std::string full = ss.str();

  std::istringstream truncated(full.substr(0, full.size() - 3));
  CHECK_THROWS_AS(read_checkpoint(truncated), InputError);

  std::string bad = full;
  bad[0] = 'X';
  std::istringstream magic(bad);
  CHECK_THROWS_AS(read_checkpoint(magic), InputError);

  std::string future = full;
  future.replace(future.find("version 1"), 9, "version 9");
  std::istringstream ver(future);
  CHECK_THROWS_AS(read_checkpoint(ver), InputError);

  ModelConfig other = tiny_dual_branch();
  other.dim = 16;
  DualBranchModel b(other, 1);
  std::istringstream again(full);
  CHECK_THROWS_AS(apply_checkpoint(read_checkpoint(again), b.parameters()), InputError);
}

TEST_CASE("checkpoint files") {
  auto path = std::filesystem::temp_directory_path() / "dbm_test_checkpoint.ckpt";
  DualBranchModel a(tiny_dual_branch(), 3), b(tiny_dual_branch(), 4);
  save_checkpoint(path.string(), a.parameters());
  load_checkpoint(path.string(), b.parameters());
  CHECK(a.parameters().snapshot() == b.parameters().snapshot());
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path.string(), b.parameters()), InputError);
}
