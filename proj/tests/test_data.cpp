#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "dbm/data.hpp"
#include "helpers.hpp"

using namespace dbm;
namespace fs = std::filesystem;

namespace {

Detection det(double x0, double y0, double x1, double y1, std::size_t frame = 0) {
  return {frame, {x0, y0, x1, y1}, 0.9};
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("dbm_test_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("crop_union examples") {
  CHECK(crop_union(224, 224, {}) == BBox{0, 0, 224, 224});
  CHECK(crop_union(224, 224, {det(10, 20, 50, 60), det(40, 10, 80, 70)}) == BBox{10, 10, 80, 70});
  CHECK(crop_union(224, 224, {det(3, 4, 5, 6)}) == BBox{3, 4, 5, 6});
  CHECK_THROWS_AS(crop_union(224, 224, {det(50, 20, 10, 60)}), InputError);
  CHECK_THROWS_AS(crop_union(100, 100, {det(10, 20, 150, 60)}), InputError);
}

TEST_CASE("crop_union is monotone") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 90);
  std::vector<Detection> dets;
  BBox prev{};
  for (int i = 0; i < 30; ++i) {
    const double x = u(rng), y = u(rng);
    dets.push_back(det(x, y, x + 1 + u(rng) / 10, y + 1 + u(rng) / 10));
    auto box = crop_union(100, 100, dets);
    if (i > 0) {
      CHECK(box.x_min <= prev.x_min);
      CHECK(box.y_min <= prev.y_min);
      CHECK(box.x_max >= prev.x_max);
      CHECK(box.y_max >= prev.y_max);
    }
    prev = box;
  }
}

TEST_CASE("clip crop takes the union over frames") {
  auto box = clip_crop(64, 64, {det(10, 10, 20, 20, 0), det(30, 5, 40, 15, 3)});
  CHECK(box == BBox{10, 5, 40, 20});
  Video v(2, 8, 8);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) v.at(0, 1, y, x) = x / 7.0;
  auto same = apply_crop(v, {0, 0, 8, 8}, 8, 8);
  CHECK(testing::max_abs_diff(same.data, v.data) < 1e-12);
  auto cropped = apply_crop(v, {4, 0, 8, 8}, 8, 4);
  CHECK(cropped.width == 4);
  CHECK(cropped.at(0, 1, 0, 0) == doctest::Approx(4 / 7.0));
}

TEST_CASE("build_manifest examples") {
  auto m = build_manifest({0, 0, 1, 1, -1, 0}, 1.0);
  REQUIRE(m.size() == 3);
  CHECK(m[0].start_s == 0);
  CHECK(m[0].end_s == 2);
  CHECK(m[0].label == kViolent);
  CHECK(m[1].start_s == 2);
  CHECK(m[1].end_s == 4);
  CHECK(m[1].label == kNonViolent);
  CHECK(m[2].start_s == 5);
  CHECK(m[2].end_s == 6);
  CHECK(m[2].label == kViolent);

  CHECK(build_manifest({-1, -1, -1}, 30.0).empty());
  CHECK(build_manifest({}, 30.0).empty());
  auto one = build_manifest({0}, 25.0);
  REQUIRE(one.size() == 1);
  CHECK(one[0].end_s == doctest::Approx(0.04).epsilon(1e-15));
  CHECK_THROWS_AS(build_manifest({0}, 0.0), InputError);
}

TEST_CASE("manifest re-expansion reproduces the label stream") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> pick(-1, 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> labels(1 + rng() % 60);
    // runs rather than white noise
    int cur = pick(rng);
    for (auto& l : labels) {
      if (rng() % 4 == 0) cur = pick(rng);
      l = cur;
    }
    const double fps = 1 + (rng() % 30);
    auto m = build_manifest(labels, fps);
    CHECK(expand_manifest(m, fps, labels.size()) == labels);
    for (std::size_t i = 1; i < m.size(); ++i) CHECK(m[i].start_s >= m[i - 1].end_s);
    for (const auto& r : m) CHECK(r.start_s < r.end_s);
  }
}

TEST_CASE("cosine similarity examples and properties") {
  CHECK(cosine_similarity({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_similarity({1, 0}, {0, 1}) == 0.0);
  CHECK(std::abs(cosine_similarity({1, 1}, {1, 0}) - 0.70710678) < 1e-8);
  CHECK_THROWS_AS(cosine_similarity({0, 0}, {1, 0}), InputError);
  CHECK_THROWS_AS(cosine_similarity({1, 0, 0}, {1, 0}), InputError);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    auto a = testing::randn(8, rng), b = testing::randn(8, rng);
    auto la = a;
    for (auto& v : la) v *= 3.7;
    const double s = cosine_similarity(a, b);
    CHECK(std::abs(s - cosine_similarity(b, a)) < 1e-12);
    CHECK(std::abs(s - cosine_similarity(la, b)) < 1e-12);
    CHECK(std::abs(s) <= 1.0);
  }
}

TEST_CASE("leakage scan") {
  auto fv = [](std::string id, std::string split, std::vector<double> v) {
    return FeatureVector{id, split, "synthetic", v};
  };
  std::vector<FeatureVector> train{fv("a", "train", {1, 0, 0}), fv("b", "train", {0, 1, 0})};
  std::vector<FeatureVector> test{fv("c", "test", {0, 0, 1})};
  CHECK(leakage_scan(train, test).empty());

  test.push_back(fv("d", "test", {0, 2, 0}));
  auto flags = leakage_scan(train, test);
  REQUIRE(flags.size() == 1);
  CHECK(flags[0].train_id == "b");
  CHECK(flags[0].test_id == "d");
  CHECK(flags[0].similarity == doctest::Approx(1.0));

  // 3x3 with exactly one pair at 0.8, the rest below 0.5
  std::vector<FeatureVector> tr{fv("t0", "train", {1, 0, 0, 0}), fv("t1", "train", {0, 1, 0, 0}),
                                fv("t2", "train", {0, 0, 1, 0})};
  std::vector<FeatureVector> te{fv("s0", "test", {0.8, 0.6, 0, 0}),
                                fv("s1", "test", {0, 0, 0.3, 1}), fv("s2", "test", {0, 0, 0, 1})};
  std::size_t brute = 0;
  for (auto& a : tr)
    for (auto& b : te) brute += cosine_similarity(a, b) >= 0.75;
  REQUIRE(brute == 1);
  flags = leakage_scan(tr, te);
  REQUIRE(flags.size() == 1);
  CHECK(flags[0].train_id == "t0");
  CHECK(flags[0].similarity == doctest::Approx(0.8));

  CHECK_THROWS_AS(leakage_scan({}, te), InputError);
  CHECK_THROWS_AS(leakage_scan(tr, te, 0.0), InputError);
}

TEST_CASE("leakage scan is monotone in threshold") {
  std::mt19937_64 rng(4);
  std::vector<FeatureVector> tr, te;
  for (int i = 0; i < 12; ++i) tr.push_back({"tr" + std::to_string(i), "train", "x", testing::randn(6, rng)});
  for (int i = 0; i < 9; ++i) te.push_back({"te" + std::to_string(i), "test", "x", testing::randn(6, rng)});
  CHECK(leakage_scan(tr, te, 1.0 + 1e-9).empty());
  std::size_t prev = 0;
  for (double t = 1.0; t > 0.0; t -= 0.05) {
    auto n = leakage_scan(tr, te, t).size();
    CHECK(n >= prev);
    prev = n;
  }
  // all pairs once every similarity clears the threshold: shift vectors positive
  for (auto& f : tr)
    for (auto& v : f.values) v = std::abs(v) + 0.1;
  for (auto& f : te)
    for (auto& v : f.values) v = std::abs(v) + 0.1;
  CHECK(leakage_scan(tr, te, 1e-9).size() == 12 * 9);
  auto flags = leakage_scan(tr, te, 0.5);
  for (std::size_t i = 1; i < flags.size(); ++i) CHECK(flags[i - 1].similarity >= flags[i].similarity);
}

TEST_CASE("combined stats reproduce the published split table") {
  std::vector<std::pair<std::string, std::vector<ClipRecord>>> ds{
      {"RWF-2000", expand_counts("RWF-2000", {800, 800, 200, 200})},
      {"RLVS", expand_counts("RLVS", {800, 800, 200, 200})},
      {"SURV", expand_counts("SURV", {120, 120, 30, 30})},
      {"VioPeru", expand_counts("VioPeru", {112, 112, 28, 28})}};
  auto t = combined_stats(ds, {"RLVS:test:violent:0"});
  CHECK(t.total.train_violent == 1832);
  CHECK(t.total.train_nonviolent == 1832);
  CHECK(t.total.test_violent == 457);
  CHECK(t.total.test_nonviolent == 458);
  CHECK(t.rows[1].second.test_violent == 199);

  auto ident = combined_stats({ds[2]}, {});
  CHECK(ident.total == SplitCounts{120, 120, 30, 30});

  std::vector<std::string> all_test;
  for (const auto& r : ds[3].second)
    if (r.split == "test") all_test.push_back(r.id);
  auto no_test = combined_stats({ds[3]}, all_test);
  CHECK(no_test.total.test_violent == 0);
  CHECK(no_test.total.test_nonviolent == 0);

  CHECK_THROWS_AS(combined_stats(ds, {"RLVS:test:violent:9999"}), InputError);
}

TEST_CASE("synthetic corpus") {
  SynthDims dims{4, 32, 32};
  auto a = synth_corpus(7, 10, dims), b = synth_corpus(7, 10, dims);
  REQUIRE(a.size() == 10);
  int violent = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == b[i].id);
    CHECK(a[i].video.data == b[i].video.data);
    violent += a[i].label == kViolent;
  }
  CHECK(violent == 5);
  CHECK(synth_corpus(8, 10, dims)[0].video.data != a[0].video.data);

  for (const auto& clip : synth_corpus(9, 40, dims)) {
    bool any = false;
    for (std::size_t f = 0; f < dims.frames; ++f) {
      std::vector<BBox> boxes;
      for (const auto& d : clip.detections) {
        validate_detection(d, dims.width, dims.height);
        if (d.frame == f) boxes.push_back(d.box);
      }
      REQUIRE(boxes.size() == 2);
      any |= boxes_overlap(boxes[0], boxes[1]);
    }
    if (clip.label == kViolent) CHECK(any);
    else CHECK_FALSE(any);
    auto [lo, hi] = std::minmax_element(clip.video.data.begin(), clip.video.data.end());
    CHECK(*lo >= 0.0);
    CHECK(*hi <= 1.0);
  }
  CHECK_THROWS_AS(synth_corpus(1, 2, {4, 8, 8}), ConfigError);
}

TEST_CASE("clip features are centred with 256 entries") {
  auto clip = synth_corpus(1, 1, {4, 32, 32})[0];
  auto f = clip_features(clip.video);
  REQUIRE(f.size() == 256);
  double s = 0;
  for (double v : f) s += v;
  CHECK(std::abs(s) < 1e-10);
}

TEST_CASE("file round trips") {
  auto dir = scratch("io");
  auto clips = synth_corpus(11, 4, {4, 16, 16}, "val", "x");
  write_corpus(dir / "corpus", clips);
  auto back = read_corpus(dir / "corpus");
  REQUIRE(back.size() == clips.size());
  for (std::size_t i = 0; i < clips.size(); ++i) {
    CHECK(back[i].id == clips[i].id);
    CHECK(back[i].split == "val");
    CHECK(back[i].label == clips[i].label);
    CHECK(back[i].video.data == clips[i].video.data);  // values already on the /255 grid
    CHECK(back[i].detections.size() == clips[i].detections.size());
  }

  auto m = build_manifest({0, 0, 1, -1, 1}, 2.0, "src", 320, 240);
  write_manifest(dir / "m.csv", m);
  auto mb = read_manifest(dir / "m.csv");
  REQUIRE(mb.size() == m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    CHECK(mb[i].start_s == m[i].start_s);
    CHECK(mb[i].end_s == m[i].end_s);
    CHECK(mb[i].label == m[i].label);
    CHECK(mb[i].width == 320);
  }

  std::vector<FeatureVector> fvs{{"a", "train", "d", {0.1, -2, 3.5}}, {"b", "test", "d", {1, 1, 1}}};
  write_features(dir / "f.csv", fvs);
  auto fb = read_features(dir / "f.csv");
  REQUIRE(fb.size() == 2);
  CHECK(fb[0].values == fvs[0].values);
  CHECK(fb[1].split == "test");

  {
    std::ofstream out(dir / "labels.txt");
    out << "fps=25\n0\n0\n-1\n1\n";
  }
  auto ls = read_label_stream(dir / "labels.txt");
  CHECK(ls.fps == 25.0);
  CHECK(ls.labels == std::vector<int>{0, 0, -1, 1});
  {
    std::ofstream out(dir / "bad.txt");
    out << "fps=25\n0\n7\n";
  }
  CHECK_THROWS_WITH_AS(read_label_stream(dir / "bad.txt"), doctest::Contains(":3:"), InputError);
  CHECK_THROWS_AS(read_corpus(dir / "missing"), InputError);
  fs::remove_all(dir);
}
