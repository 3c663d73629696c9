#include "dbm/data.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "dbm/error.hpp"
#include "dbm/kernels.hpp"

namespace fs = std::filesystem;

namespace dbm {

std::string label_name(int label) {
  if (label == kViolent) return "violent";
  if (label == kNonViolent) return "non-violent";
  throw InputError("unknown label " + std::to_string(label));
}

int parse_label(const std::string& s) {
  if (s == "violent" || s == "0") return kViolent;
  if (s == "non-violent" || s == "nonviolent" || s == "1") return kNonViolent;
  throw InputError("unknown label '" + s + "'");
}

bool boxes_overlap(const BBox& a, const BBox& b) {
  return a.x_min < b.x_max && b.x_min < a.x_max && a.y_min < b.y_max && b.y_min < a.y_max;
}

void validate_detection(const Detection& d, std::size_t width, std::size_t height) {
  const auto& b = d.box;
  const bool finite = std::isfinite(b.x_min) && std::isfinite(b.y_min) && std::isfinite(b.x_max) &&
                      std::isfinite(b.y_max);
  if (!finite || !(b.x_min < b.x_max) || !(b.y_min < b.y_max))
    throw InputError("malformed box in frame " + std::to_string(d.frame));
  if (b.x_min < 0 || b.y_min < 0 || b.x_max > static_cast<double>(width) ||
      b.y_max > static_cast<double>(height))
    throw InputError("box outside the " + std::to_string(width) + "x" + std::to_string(height) +
                     " frame in frame " + std::to_string(d.frame));
  if (!(d.confidence >= 0 && d.confidence <= 1))
    throw InputError("confidence outside [0, 1] in frame " + std::to_string(d.frame));
}

BBox crop_union(std::size_t width, std::size_t height, const std::vector<Detection>& dets) {
  if (dets.empty()) return {0, 0, static_cast<double>(width), static_cast<double>(height)};
  BBox u = dets.front().box;
  for (const auto& d : dets) {
    validate_detection(d, width, height);
    u.x_min = std::min(u.x_min, d.box.x_min);
    u.y_min = std::min(u.y_min, d.box.y_min);
    u.x_max = std::max(u.x_max, d.box.x_max);
    u.y_max = std::max(u.y_max, d.box.y_max);
  }
  return u;
}

BBox clip_crop(std::size_t width, std::size_t height, const std::vector<Detection>& dets) {
  // the per-frame unions nest inside the overall union, so one pass suffices
  return crop_union(width, height, dets);
}

namespace {

double sample_bilinear(const Video& v, std::size_t c, std::size_t t, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(v.height - 1));
  x = std::clamp(x, 0.0, static_cast<double>(v.width - 1));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, v.height - 1), x1 = std::min(x0 + 1, v.width - 1);
  const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
  const double top = v.at(c, t, y0, x0) * (1 - fx) + v.at(c, t, y0, x1) * fx;
  const double bot = v.at(c, t, y1, x0) * (1 - fx) + v.at(c, t, y1, x1) * fx;
  return top * (1 - fy) + bot * fy;
}

}  // namespace

Video apply_crop(const Video& v, const BBox& box, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw ShapeError("apply_crop: empty output");
  if (!(box.x_min < box.x_max && box.y_min < box.y_max))
    throw InputError("apply_crop: malformed box");
  Video out(v.frames, out_h, out_w);
  const double sy = box.height() / static_cast<double>(out_h);
  const double sx = box.width() / static_cast<double>(out_w);
  for (std::size_t c = 0; c < Video::kChannels; ++c)
    for (std::size_t t = 0; t < v.frames; ++t)
      for (std::size_t y = 0; y < out_h; ++y)
        for (std::size_t x = 0; x < out_w; ++x) {
          // pixel centers
          const double src_y = box.y_min + (static_cast<double>(y) + 0.5) * sy - 0.5;
          const double src_x = box.x_min + (static_cast<double>(x) + 0.5) * sx - 0.5;
          out.at(c, t, y, x) = sample_bilinear(v, c, t, src_y, src_x);
        }
  return out;
}

Video resize(const Video& v, std::size_t out_h, std::size_t out_w) {
  if (v.height == out_h && v.width == out_w) return v;
  return apply_crop(v, {0, 0, static_cast<double>(v.width), static_cast<double>(v.height)}, out_h,
                    out_w);
}

// ---------------------------------------------------------------------------

std::vector<ManifestRecord> build_manifest(const std::vector<int>& labels, double fps,
                                           const std::string& source, std::size_t width,
                                           std::size_t height) {
  if (!(fps > 0) || !std::isfinite(fps)) throw InputError("fps must be positive");
  std::vector<ManifestRecord> out;
  std::size_t i = 0;
  while (i < labels.size()) {
    const int l = labels[i];
    if (l != kViolent && l != kNonViolent && l != kIgnore)
      throw InputError("frame " + std::to_string(i) + ": label " + std::to_string(l) +
                       " is not 0, 1 or -1");
    std::size_t j = i + 1;
    while (j < labels.size() && labels[j] == l) ++j;
    if (l != kIgnore)
      out.push_back({source, static_cast<double>(i) / fps, static_cast<double>(j) / fps, l, fps,
                     width, height});
    i = j;
  }
  return out;
}

std::vector<int> expand_manifest(const std::vector<ManifestRecord>& records, double fps,
                                 std::size_t frames) {
  std::vector<int> out(frames, kIgnore);
  for (const auto& r : records) {
    const auto a = static_cast<std::size_t>(std::llround(r.start_s * fps));
    const auto b = static_cast<std::size_t>(std::llround(r.end_s * fps));
    for (std::size_t f = a; f < b && f < frames; ++f) out[f] = r.label;
  }
  return out;
}

// ---------------------------------------------------------------------------

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw InputError("cosine_similarity: lengths " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()));
  if (a.empty()) throw InputError("cosine_similarity: empty vectors");
  auto zero = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
  };
  if (zero(a) || zero(b)) throw InputError("cosine_similarity: zero-norm vector");
  double out = 0;
  kernels::pairwise_cosine_serial(a, 1, b, 1, a.size(), {&out, 1});
  return out;
}

double cosine_similarity(const FeatureVector& a, const FeatureVector& b) {
  return cosine_similarity(a.values, b.values);
}

std::vector<LeakFlag> leakage_scan(const std::vector<FeatureVector>& train,
                                   const std::vector<FeatureVector>& test, double threshold) {
  if (!(threshold > 0)) throw InputError("leakage_scan: threshold must be positive");
  if (train.empty() || test.empty()) throw InputError("leakage_scan: empty split");
  const std::size_t k = train.front().values.size();
  auto pack = [&](const std::vector<FeatureVector>& set) {
    std::vector<double> flat;
    flat.reserve(set.size() * k);
    for (const auto& f : set) {
      if (f.values.size() != k)
        throw InputError("leakage_scan: feature '" + f.id + "' has length " +
                         std::to_string(f.values.size()) + ", expected " + std::to_string(k));
      if (std::all_of(f.values.begin(), f.values.end(), [](double x) { return x == 0.0; }))
        throw InputError("leakage_scan: feature '" + f.id + "' has zero norm");
      flat.insert(flat.end(), f.values.begin(), f.values.end());
    }
    return flat;
  };
  const auto a = pack(train);
  const auto b = pack(test);
  std::vector<double> sim(train.size() * test.size());
  kernels::pairwise_cosine(a, train.size(), b, test.size(), k, sim);

  std::vector<LeakFlag> flags;
  for (std::size_t i = 0; i < train.size(); ++i)
    for (std::size_t j = 0; j < test.size(); ++j) {
      const double s = sim[i * test.size() + j];
      if (s >= threshold) flags.push_back({train[i].id, test[j].id, s});
    }
  std::sort(flags.begin(), flags.end(), [](const LeakFlag& x, const LeakFlag& y) {
    if (x.similarity != y.similarity) return x.similarity > y.similarity;
    if (x.train_id != y.train_id) return x.train_id < y.train_id;
    return x.test_id < y.test_id;
  });
  return flags;
}

std::vector<double> clip_features(const Video& v, std::size_t side) {
  if (side == 0 || v.frames == 0 || v.height == 0 || v.width == 0)
    throw ShapeError("clip_features: empty input");
  std::vector<double> gray(v.height * v.width, 0.0);
  for (std::size_t t = 0; t < v.frames; ++t)
    for (std::size_t y = 0; y < v.height; ++y)
      for (std::size_t x = 0; x < v.width; ++x)
        gray[y * v.width + x] +=
            0.299 * v.at(0, t, y, x) + 0.587 * v.at(1, t, y, x) + 0.114 * v.at(2, t, y, x);
  for (auto& g : gray) g /= static_cast<double>(v.frames);

  auto bin = [](std::size_t i, std::size_t n, std::size_t extent) {
    std::size_t lo = i * extent / n;
    std::size_t hi = std::max(lo + 1, (i + 1) * extent / n);
    return std::pair{std::min(lo, extent - 1), std::min(hi, extent)};
  };
  std::vector<double> out(side * side, 0.0);
  for (std::size_t by = 0; by < side; ++by) {
    auto [y0, y1] = bin(by, side, v.height);
    for (std::size_t bx = 0; bx < side; ++bx) {
      auto [x0, x1] = bin(bx, side, v.width);
      double s = 0;
      for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x) s += gray[y * v.width + x];
      out[by * side + bx] = s / static_cast<double>((y1 - y0) * (x1 - x0));
    }
  }
  double mean = 0;
  for (double x : out) mean += x;
  mean /= static_cast<double>(out.size());
  for (auto& x : out) x -= mean;
  return out;
}

// ---------------------------------------------------------------------------

SplitCounts& SplitCounts::operator+=(const SplitCounts& o) {
  train_violent += o.train_violent;
  train_nonviolent += o.train_nonviolent;
  test_violent += o.test_violent;
  test_nonviolent += o.test_nonviolent;
  return *this;
}

StatsTable combined_stats(
    const std::vector<std::pair<std::string, std::vector<ClipRecord>>>& datasets,
    const std::vector<std::string>& removals) {
  std::set<std::string> known;
  for (const auto& [name, records] : datasets)
    for (const auto& r : records) known.insert(r.id);
  std::set<std::string> removed;
  for (const auto& id : removals) {
    if (!known.count(id)) throw InputError("removal of unknown id '" + id + "'");
    if (!removed.insert(id).second) throw InputError("id '" + id + "' removed twice");
  }
  StatsTable table;
  for (const auto& [name, records] : datasets) {
    SplitCounts c;
    for (const auto& r : records) {
      if (removed.count(r.id)) continue;
      const bool train = r.split == "train";
      if (!train && r.split != "test") throw InputError("unknown split '" + r.split + "'");
      if (r.label == kViolent)
        ++(train ? c.train_violent : c.test_violent);
      else if (r.label == kNonViolent)
        ++(train ? c.train_nonviolent : c.test_nonviolent);
      else
        throw InputError("clip '" + r.id + "' has label " + std::to_string(r.label));
    }
    table.rows.emplace_back(name, c);
    table.total += c;
  }
  return table;
}

std::vector<ClipRecord> expand_counts(const std::string& dataset, const SplitCounts& counts) {
  std::vector<ClipRecord> out;
  auto emit = [&](const char* split, int label, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
      out.push_back({dataset + ":" + split + ":" + label_name(label) + ":" + std::to_string(i),
                     split, label});
  };
  emit("train", kViolent, counts.train_violent);
  emit("train", kNonViolent, counts.train_nonviolent);
  emit("test", kViolent, counts.test_violent);
  emit("test", kNonViolent, counts.test_nonviolent);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

struct Blob {
  long x, y;  // top-left
};

BBox blob_box(Blob b, long s) {
  return {static_cast<double>(b.x), static_cast<double>(b.y), static_cast<double>(b.x + s),
          static_cast<double>(b.y + s)};
}

long clamp_pos(double v, long s, std::size_t extent) {
  return std::clamp(std::lround(v), 0L, static_cast<long>(extent) - s);
}

// Trajectories of the two blobs. Violent: both converge on a contact point
// and stay on it with one pixel of jitter. Non-violent: each stays in its own
// half of the frame.
std::pair<std::vector<Blob>, std::vector<Blob>> trajectories(int label, SynthDims d, long s,
                                                             std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double w = static_cast<double>(d.width), h = static_cast<double>(d.height);
  const std::size_t T = d.frames;
  std::vector<Blob> a(T), b(T);

  if (label == kViolent) {
    const double px = s + unit(rng) * (w - 3.0 * s);
    const double py = s + unit(rng) * (h - 3.0 * s);
    const std::size_t tc = T > 1 ? 1 + static_cast<std::size_t>(unit(rng) * (T - 1)) % (T - 1) : 0;
    const double angle = unit(rng) * 2.0 * std::numbers::pi;
    const double speed = (0.25 + 0.2 * unit(rng)) * std::min(w, h) / std::max<double>(1, tc);
    std::uniform_int_distribution<long> jit(-1, 1);
    for (std::size_t t = 0; t < T; ++t) {
      if (t >= tc) {
        a[t] = {clamp_pos(px + jit(rng), s, d.width), clamp_pos(py + jit(rng), s, d.height)};
        b[t] = {clamp_pos(px + jit(rng), s, d.width), clamp_pos(py + jit(rng), s, d.height)};
      } else {
        const double k = static_cast<double>(tc - t) * speed;
        a[t] = {clamp_pos(px + k * std::cos(angle), s, d.width),
                clamp_pos(py + k * std::sin(angle), s, d.height)};
        b[t] = {clamp_pos(px - k * std::cos(angle), s, d.width),
                clamp_pos(py - k * std::sin(angle), s, d.height)};
      }
    }
    return {a, b};
  }

  // halves split horizontally or vertically, one pixel gap on each side
  const bool vertical = unit(rng) < 0.5;
  const double extent = vertical ? w : h;
  const double half = extent / 2.0;
  auto lane = [&](double lo, double hi) {
    const double start = lo + unit(rng) * (hi - lo);
    const double stop = lo + unit(rng) * (hi - lo);
    return std::pair{start, stop};
  };
  auto [a0, a1] = lane(0, half - 1 - s);
  auto [b0, b1] = lane(half + 1, extent - s);
  const double other = vertical ? h : w;
  auto [ao0, ao1] = lane(0, other - s);
  auto [bo0, bo1] = lane(0, other - s);
  for (std::size_t t = 0; t < T; ++t) {
    const double f = T > 1 ? static_cast<double>(t) / static_cast<double>(T - 1) : 0.0;
    const double pa = a0 + (a1 - a0) * f, pb = b0 + (b1 - b0) * f;
    const double qa = ao0 + (ao1 - ao0) * f, qb = bo0 + (bo1 - bo0) * f;
    if (vertical) {
      a[t] = {clamp_pos(pa, s, d.width), clamp_pos(qa, s, d.height)};
      b[t] = {clamp_pos(pb, s, d.width), clamp_pos(qb, s, d.height)};
    } else {
      a[t] = {clamp_pos(qa, s, d.width), clamp_pos(pa, s, d.height)};
      b[t] = {clamp_pos(qb, s, d.width), clamp_pos(pb, s, d.height)};
    }
  }
  return {a, b};
}

}  // namespace

std::vector<Clip> synth_corpus(std::uint64_t seed, std::size_t n_clips, SynthDims dims,
                               const std::string& split, const std::string& id_prefix) {
  const long s = std::max(3L, static_cast<long>(std::min(dims.height, dims.width)) / 6);
  if (dims.frames == 0 || dims.height < static_cast<std::size_t>(4 * s) ||
      dims.width < static_cast<std::size_t>(4 * s))
    throw ConfigError("synth_corpus: frames must be positive and frames at least 12x12");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Clip> out;
  out.reserve(n_clips);
  for (std::size_t i = 0; i < n_clips; ++i) {
    Clip clip;
    char id[32];
    std::snprintf(id, sizeof id, "%04zu", i);
    clip.id = id_prefix + id;
    clip.split = split;
    clip.label = (i % 2 == 0) ? kViolent : kNonViolent;
    clip.video = Video(dims.frames, dims.height, dims.width);

    std::vector<Blob> a, b;
    for (;;) {
      std::tie(a, b) = trajectories(clip.label, dims, s, rng);
      bool touch = false;
      for (std::size_t t = 0; t < dims.frames; ++t)
        touch = touch || boxes_overlap(blob_box(a[t], s), blob_box(b[t], s));
      if (touch == (clip.label == kViolent)) break;
    }

    auto& v = clip.video;
    for (auto& x : v.data) x = 0.08 * unit(rng);
    const double ia = 0.7 + 0.3 * unit(rng), ib = 0.7 + 0.3 * unit(rng);
    for (std::size_t t = 0; t < dims.frames; ++t) {
      auto paint = [&](Blob blob, std::size_t ch, double intensity) {
        for (long y = blob.y; y < blob.y + s; ++y)
          for (long x = blob.x; x < blob.x + s; ++x) {
            v.at(ch, t, y, x) += intensity;
            v.at(2, t, y, x) += 0.3;
          }
      };
      paint(a[t], 0, ia);
      paint(b[t], 1, ib);
      clip.detections.push_back({t, blob_box(a[t], s), 0.9});
      clip.detections.push_back({t, blob_box(b[t], s), 0.9});
    }
    for (auto& x : v.data) x = quantize(x);
    out.push_back(std::move(clip));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Text helpers

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) out.push_back(trim(cur));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string where(const fs::path& p, std::size_t line) {
  return p.string() + ":" + std::to_string(line) + ": ";
}

double to_double(const std::string& s, const fs::path& p, std::size_t line) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw InputError(where(p, line) + "expected a number, got '" + s + "'");
  return v;
}

long long to_int(const std::string& s, const fs::path& p, std::size_t line) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw InputError(where(p, line) + "expected an integer, got '" + s + "'");
  return v;
}

std::size_t to_size(const std::string& s, const fs::path& p, std::size_t line) {
  const long long v = to_int(s, p, line);
  if (v < 0) throw InputError(where(p, line) + "expected a non-negative integer, got '" + s + "'");
  return static_cast<std::size_t>(v);
}

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InputError("cannot open " + p.string());
  return in;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw InputError("cannot write " + p.string());
  return out;
}

// Reads a CSV with the given header. Calls row(fields, line_number).
template <typename F>
void read_csv(const fs::path& p, const std::vector<std::string>& header, std::size_t min_fields,
              F&& row) {
  auto in = open_in(p);
  std::string line;
  std::size_t n = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++n;
    line = trim(line);
    if (line.empty()) continue;
    auto fields = split_csv(line);
    if (!seen_header) {
      seen_header = true;
      for (std::size_t i = 0; i < header.size(); ++i)
        if (i >= fields.size() || fields[i] != header[i])
          throw InputError(where(p, n) + "expected header starting with '" + header[0] + "'");
      continue;
    }
    if (fields.size() < min_fields)
      throw InputError(where(p, n) + "expected " + std::to_string(min_fields) + " fields, got " +
                       std::to_string(fields.size()));
    row(fields, n);
  }
  if (!seen_header) throw InputError(p.string() + ": missing header");
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Next whitespace-delimited header token of a PNM file, skipping comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok += static_cast<char>(c);
  }
  return tok;
}

}  // namespace

void write_ppm(const fs::path& path, const Video& v, std::size_t frame) {
  auto out = open_out(path);
  out << "P6\n" << v.width << ' ' << v.height << "\n255\n";
  std::vector<char> row(v.width * 3);
  for (std::size_t y = 0; y < v.height; ++y) {
    for (std::size_t x = 0; x < v.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) row[x * 3 + c] = static_cast<char>(to_byte(v.at(c, frame, y, x)));
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
}

void read_ppm_into(const fs::path& path, Video& v, std::size_t frame) {
  auto in = open_in(path);
  const std::string magic = pnm_token(in);
  if (magic != "P6") throw InputError(path.string() + ": not a binary PPM (P6)");
  const auto w = std::stoul(pnm_token(in));
  const auto h = std::stoul(pnm_token(in));
  const auto maxval = std::stoul(pnm_token(in));
  if (w != v.width || h != v.height)
    throw InputError(path.string() + ": size " + std::to_string(w) + "x" + std::to_string(h) +
                     " does not match the corpus entry");
  if (maxval != 255) throw InputError(path.string() + ": only maxval 255 is supported");
  std::vector<unsigned char> buf(w * h * 3);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size()))
    throw InputError(path.string() + ": truncated pixel data");
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) v.at(c, frame, y, x) = buf[(y * w + x) * 3 + c] / 255.0;
}

void write_pgm(const fs::path& path, const std::vector<double>& values, std::size_t height,
               std::size_t width) {
  if (values.size() != height * width) throw ShapeError("write_pgm: size mismatch");
  auto out = open_out(path);
  out << "P5\n" << width << ' ' << height << "\n255\n";
  for (double v : values) out.put(static_cast<char>(to_byte(v)));
}

std::vector<Detection> read_detections(const fs::path& path) {
  std::vector<Detection> out;
  read_csv(path, {"frame", "x_min", "y_min", "x_max", "y_max", "confidence"}, 6,
           [&](const auto& f, std::size_t n) {
             Detection d;
             d.frame = to_size(f[0], path, n);
             d.box = {to_double(f[1], path, n), to_double(f[2], path, n), to_double(f[3], path, n),
                      to_double(f[4], path, n)};
             d.confidence = to_double(f[5], path, n);
             if (!(d.box.x_min < d.box.x_max && d.box.y_min < d.box.y_max))
               throw InputError(where(path, n) + "malformed box");
             out.push_back(d);
           });
  return out;
}

void write_detections(const fs::path& path, const std::vector<Detection>& dets) {
  auto out = open_out(path);
  out << "frame,x_min,y_min,x_max,y_max,confidence\n";
  for (const auto& d : dets)
    out << d.frame << ',' << fmt(d.box.x_min) << ',' << fmt(d.box.y_min) << ','
        << fmt(d.box.x_max) << ',' << fmt(d.box.y_max) << ',' << fmt(d.confidence) << '\n';
}

LabelStream read_label_stream(const fs::path& path) {
  auto in = open_in(path);
  LabelStream s;
  std::string line;
  std::size_t n = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++n;
    line = trim(line);
    if (line.empty()) continue;
    if (!header) {
      if (line.rfind("fps=", 0) != 0) throw InputError(where(path, n) + "expected 'fps=<real>'");
      s.fps = to_double(line.substr(4), path, n);
      if (!(s.fps > 0)) throw InputError(where(path, n) + "fps must be positive");
      header = true;
      continue;
    }
    const long long v = to_int(line, path, n);
    if (v != 0 && v != 1 && v != -1)
      throw InputError(where(path, n) + "label must be 0, 1 or -1, got " + line);
    s.labels.push_back(static_cast<int>(v));
  }
  if (!header) throw InputError(path.string() + ": missing 'fps=' header");
  return s;
}

void write_manifest(const fs::path& path, const std::vector<ManifestRecord>& m) {
  auto out = open_out(path);
  out << "source,start_s,end_s,label,fps,width,height\n";
  for (const auto& r : m)
    out << r.source << ',' << fmt(r.start_s) << ',' << fmt(r.end_s) << ',' << label_name(r.label)
        << ',' << fmt(r.fps) << ',' << r.width << ',' << r.height << '\n';
}

std::vector<ManifestRecord> read_manifest(const fs::path& path) {
  std::vector<ManifestRecord> out;
  read_csv(path, {"source", "start_s", "end_s", "label", "fps", "width", "height"}, 7,
           [&](const auto& f, std::size_t n) {
             ManifestRecord r;
             r.source = f[0];
             r.start_s = to_double(f[1], path, n);
             r.end_s = to_double(f[2], path, n);
             try {
               r.label = parse_label(f[3]);
             } catch (const InputError& e) {
               throw InputError(where(path, n) + e.what());
             }
             r.fps = to_double(f[4], path, n);
             r.width = to_size(f[5], path, n);
             r.height = to_size(f[6], path, n);
             if (!(r.start_s < r.end_s)) throw InputError(where(path, n) + "start must precede end");
             out.push_back(r);
           });
  return out;
}

std::vector<FeatureVector> read_features(const fs::path& path) {
  std::vector<FeatureVector> out;
  std::size_t k = 0;
  read_csv(path, {"id", "split", "dataset"}, 4, [&](const auto& f, std::size_t n) {
    FeatureVector v;
    v.id = f[0];
    v.split = f[1];
    v.dataset = f[2];
    if (v.split != "train" && v.split != "test")
      throw InputError(where(path, n) + "split must be train or test, got '" + v.split + "'");
    for (std::size_t i = 3; i < f.size(); ++i) v.values.push_back(to_double(f[i], path, n));
    if (k == 0) k = v.values.size();
    if (v.values.size() != k)
      throw InputError(where(path, n) + "expected " + std::to_string(k) + " values, got " +
                       std::to_string(v.values.size()));
    out.push_back(std::move(v));
  });
  return out;
}

void write_features(const fs::path& path, const std::vector<FeatureVector>& f) {
  auto out = open_out(path);
  out << "id,split,dataset";
  const std::size_t k = f.empty() ? 0 : f.front().values.size();
  for (std::size_t i = 0; i < k; ++i) out << ",v" << i;
  out << '\n';
  for (const auto& v : f) {
    out << v.id << ',' << v.split << ',' << v.dataset;
    for (double x : v.values) out << ',' << fmt(x);
    out << '\n';
  }
}

void write_leak_flags(const fs::path& path, const std::vector<LeakFlag>& flags) {
  auto out = open_out(path);
  out << "train_id,test_id,similarity\n";
  for (const auto& f : flags) out << f.train_id << ',' << f.test_id << ',' << fmt(f.similarity) << '\n';
}

std::vector<std::pair<std::string, SplitCounts>> read_split_counts(const fs::path& path) {
  std::vector<std::pair<std::string, SplitCounts>> out;
  read_csv(path, {"dataset", "train_violent", "train_nonviolent", "test_violent", "test_nonviolent"},
           5, [&](const auto& f, std::size_t n) {
             SplitCounts c{to_size(f[1], path, n), to_size(f[2], path, n), to_size(f[3], path, n),
                           to_size(f[4], path, n)};
             out.emplace_back(f[0], c);
           });
  return out;
}

std::vector<std::string> read_id_list(const fs::path& path) {
  auto in = open_in(path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    out.push_back(line);
  }
  return out;
}

void write_stats(const fs::path& path, const StatsTable& table) {
  auto out = open_out(path);
  out << "dataset,train_violent,train_nonviolent,test_violent,test_nonviolent\n";
  auto row = [&](const std::string& name, const SplitCounts& c) {
    out << name << ',' << c.train_violent << ',' << c.train_nonviolent << ',' << c.test_violent
        << ',' << c.test_nonviolent << '\n';
  };
  for (const auto& [name, c] : table.rows) row(name, c);
  row("total", table.total);
}

namespace {

std::map<std::string, int> read_id_labels(const fs::path& path, const char* column) {
  std::map<std::string, int> out;
  read_csv(path, {"id", column}, 2, [&](const auto& f, std::size_t n) {
    int label;
    try {
      label = parse_label(f[1]);
    } catch (const InputError& e) {
      throw InputError(where(path, n) + e.what());
    }
    if (!out.emplace(f[0], label).second)
      throw InputError(where(path, n) + "duplicate id '" + f[0] + "'");
  });
  return out;
}

}  // namespace

std::map<std::string, int> read_labels(const fs::path& path) { return read_id_labels(path, "label"); }
std::map<std::string, int> read_predictions(const fs::path& path) {
  return read_id_labels(path, "prediction");
}

void write_predictions(const fs::path& path, const std::vector<std::pair<std::string, int>>& preds) {
  auto out = open_out(path);
  out << "id,prediction\n";
  for (const auto& [id, p] : preds) out << id << ',' << p << '\n';
}

void write_corpus(const fs::path& dir, const std::vector<Clip>& clips) {
  fs::create_directories(dir);
  auto index = open_out(dir / "corpus.csv");
  index << "id,split,label,frames,height,width\n";
  for (const auto& c : clips) {
    index << c.id << ',' << c.split << ',' << label_name(c.label) << ',' << c.video.frames << ','
          << c.video.height << ',' << c.video.width << '\n';
    const fs::path sub = dir / c.id;
    fs::create_directories(sub);
    for (std::size_t t = 0; t < c.video.frames; ++t) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%04zu.ppm", t);
      write_ppm(sub / name, c.video, t);
    }
    write_detections(sub / "detections.csv", c.detections);
  }
}

std::vector<Clip> read_corpus(const fs::path& dir) {
  const fs::path index = dir / "corpus.csv";
  if (!fs::exists(index)) throw InputError("no corpus at " + dir.string() + " (missing corpus.csv)");
  std::vector<Clip> out;
  read_csv(index, {"id", "split", "label", "frames", "height", "width"}, 6,
           [&](const auto& f, std::size_t n) {
             Clip c;
             c.id = f[0];
             c.split = f[1];
             try {
               c.label = parse_label(f[2]);
             } catch (const InputError& e) {
               throw InputError(where(index, n) + e.what());
             }
             c.video = Video(to_size(f[3], index, n), to_size(f[4], index, n), to_size(f[5], index, n));
             const fs::path sub = dir / c.id;
             for (std::size_t t = 0; t < c.video.frames; ++t) {
               char name[32];
               std::snprintf(name, sizeof name, "frame_%04zu.ppm", t);
               read_ppm_into(sub / name, c.video, t);
             }
             if (fs::exists(sub / "detections.csv")) c.detections = read_detections(sub / "detections.csv");
             for (const auto& d : c.detections) {
               if (d.frame >= c.video.frames)
                 throw InputError((sub / "detections.csv").string() + ": frame " +
                                  std::to_string(d.frame) + " out of range");
               validate_detection(d, c.video.width, c.video.height);
             }
             out.push_back(std::move(c));
           });
  return out;
}

}  // namespace dbm
