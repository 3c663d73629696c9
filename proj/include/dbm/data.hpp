#pragma once

// Dataset hygiene and desk-scale data: detection-union cropping, clip
// manifests from frame labels, cross-split duplicate scans, split tables, a
// synthetic collision corpus and the file formats around them.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dbm/video.hpp"

namespace dbm {

// Class ids as used throughout: 0 violent, 1 non-violent.
inline constexpr int kViolent = 0;
inline constexpr int kNonViolent = 1;
inline constexpr int kIgnore = -1;
std::string label_name(int label);
int parse_label(const std::string& s);  // "violent"/"non-violent" or 0/1

struct BBox {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  bool operator==(const BBox&) const = default;
};

bool boxes_overlap(const BBox& a, const BBox& b);

struct Detection {
  std::size_t frame = 0;
  BBox box;
  double confidence = 1.0;
};

// Throws InputError unless x_min < x_max, y_min < y_max, the box lies inside
// the frame and confidence is in [0, 1].
void validate_detection(const Detection& d, std::size_t width, std::size_t height);

// Union of the given boxes; the full frame when there are none.
BBox crop_union(std::size_t width, std::size_t height, const std::vector<Detection>& dets);
// One rectangle for the whole clip: union over every frame's detections.
BBox clip_crop(std::size_t width, std::size_t height, const std::vector<Detection>& dets);
// Cuts `box` out of every frame and resamples it bilinearly to out_h x out_w.
Video apply_crop(const Video& v, const BBox& box, std::size_t out_h, std::size_t out_w);
// Bilinear resize of every frame.
Video resize(const Video& v, std::size_t out_h, std::size_t out_w);

// ---------------------------------------------------------------------------
// Clip manifests

struct ManifestRecord {
  std::string source;
  double start_s = 0, end_s = 0;
  int label = kViolent;
  double fps = 0;
  std::size_t width = 0, height = 0;
};

struct LabelStream {
  double fps = 0;
  std::vector<int> labels;  // 0, 1 or -1 per frame
};

// Maximal runs of 0 and 1 become clips; -1 frames belong to none.
std::vector<ManifestRecord> build_manifest(const std::vector<int>& labels, double fps,
                                           const std::string& source = "",
                                           std::size_t width = 0, std::size_t height = 0);
// Per-frame labels implied by a manifest over `frames` frames (-1 outside clips).
std::vector<int> expand_manifest(const std::vector<ManifestRecord>& records, double fps,
                                 std::size_t frames);

// ---------------------------------------------------------------------------
// Duplicate scans

struct FeatureVector {
  std::string id;
  std::string split;  // "train" or "test"
  std::string dataset;
  std::vector<double> values;
};

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);
double cosine_similarity(const FeatureVector& a, const FeatureVector& b);

struct LeakFlag {
  std::string train_id;
  std::string test_id;
  double similarity = 0;
};

// Every train/test pair at or above threshold, most similar first.
std::vector<LeakFlag> leakage_scan(const std::vector<FeatureVector>& train,
                                   const std::vector<FeatureVector>& test,
                                   double threshold = 0.75);

// Mean-pooled grayscale (averaged over frames) on a side x side grid, with the
// clip mean subtracted. side = 16 gives k = 256.
std::vector<double> clip_features(const Video& v, std::size_t side = 16);

// ---------------------------------------------------------------------------
// Split tables

struct ClipRecord {
  std::string id;
  std::string split;  // "train" or "test"
  int label = kViolent;
};

struct SplitCounts {
  std::size_t train_violent = 0, train_nonviolent = 0;
  std::size_t test_violent = 0, test_nonviolent = 0;
  bool operator==(const SplitCounts&) const = default;
  SplitCounts& operator+=(const SplitCounts& o);
};

struct StatsTable {
  std::vector<std::pair<std::string, SplitCounts>> rows;  // per dataset, input order
  SplitCounts total;
};

// Throws InputError when a removal names an unknown id.
StatsTable combined_stats(const std::vector<std::pair<std::string, std::vector<ClipRecord>>>& datasets,
                          const std::vector<std::string>& removals);
// Records "<dataset>:<split>:<label>:<i>" realizing the given counts.
std::vector<ClipRecord> expand_counts(const std::string& dataset, const SplitCounts& counts);

// ---------------------------------------------------------------------------
// Synthetic corpus

struct Clip {
  std::string id;
  std::string split;
  int label = kViolent;
  Video video;
  std::vector<Detection> detections;  // one box per blob per frame
};

struct SynthDims {
  std::size_t frames = 4, height = 32, width = 32;
};

// Violent clips: two blobs approach and collide, overlapping from the contact
// frame on. Non-violent clips: two blobs on separated paths that never touch.
// Labels alternate so any prefix of even length is balanced.
std::vector<Clip> synth_corpus(std::uint64_t seed, std::size_t n_clips, SynthDims dims,
                               const std::string& split = "train",
                               const std::string& id_prefix = "clip");

// ---------------------------------------------------------------------------
// File formats

void write_ppm(const std::filesystem::path& path, const Video& v, std::size_t frame);
void read_ppm_into(const std::filesystem::path& path, Video& v, std::size_t frame);
void write_pgm(const std::filesystem::path& path, const std::vector<double>& values,
               std::size_t height, std::size_t width);

std::vector<Detection> read_detections(const std::filesystem::path& path);
void write_detections(const std::filesystem::path& path, const std::vector<Detection>& dets);

LabelStream read_label_stream(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& m);
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);

std::vector<FeatureVector> read_features(const std::filesystem::path& path);
void write_features(const std::filesystem::path& path, const std::vector<FeatureVector>& f);
void write_leak_flags(const std::filesystem::path& path, const std::vector<LeakFlag>& flags);

// dataset,train_violent,train_nonviolent,test_violent,test_nonviolent
std::vector<std::pair<std::string, SplitCounts>> read_split_counts(
    const std::filesystem::path& path);
// One id per line; blank lines and '#' comments skipped.
std::vector<std::string> read_id_list(const std::filesystem::path& path);
void write_stats(const std::filesystem::path& path, const StatsTable& table);

// id,label
std::map<std::string, int> read_labels(const std::filesystem::path& path);
// id,prediction
std::map<std::string, int> read_predictions(const std::filesystem::path& path);
void write_predictions(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, int>>& preds);

// Directory with corpus.csv (id,split,label,frames,height,width) and one
// folder per clip holding frame_XXXX.ppm and detections.csv.
void write_corpus(const std::filesystem::path& dir, const std::vector<Clip>& clips);
std::vector<Clip> read_corpus(const std::filesystem::path& dir);

}  // namespace dbm
