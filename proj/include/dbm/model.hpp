#pragma once

// Dual-branch video model: a spatial-first branch and a temporal-first branch
// of bidirectional Mamba blocks, lateral class-token fusion between them, a
// final fusion block and a linear classifier.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dbm/encoder.hpp"

namespace dbm {

enum class Architecture { dual, spatial, temporal, head_only };

enum class FusionVariant {
  full_hidden_concat,
  cls_concat,
  additive,
  cross_attention,
  gated_b2_to_b1,
  gated_b1_to_b2,
};

enum class LateralPlacement { continuous, even, odd, first_only, last_only, middle, begin_and_end };

enum class FinalFusion { concatenation, addition, cross_attention, gated_b1_to_b2, gated_b2_to_b1 };

enum class AttentionKeys { full_sequence, cls_only };

// scheduled: fusion parameters only at scheduled layers.
// full: one set per eligible layer (0 .. layers-2) whatever the placement.
enum class GateBank { scheduled, full };

inline constexpr FusionVariant kAllFusionVariants[] = {
    FusionVariant::full_hidden_concat, FusionVariant::cls_concat,
    FusionVariant::additive,           FusionVariant::cross_attention,
    FusionVariant::gated_b2_to_b1,     FusionVariant::gated_b1_to_b2};
inline constexpr LateralPlacement kAllPlacements[] = {
    LateralPlacement::continuous, LateralPlacement::even,   LateralPlacement::odd,
    LateralPlacement::first_only, LateralPlacement::last_only, LateralPlacement::middle,
    LateralPlacement::begin_and_end};
inline constexpr FinalFusion kAllFinalFusions[] = {
    FinalFusion::concatenation, FinalFusion::addition, FinalFusion::cross_attention,
    FinalFusion::gated_b1_to_b2, FinalFusion::gated_b2_to_b1};

std::string to_string(Architecture v);
std::string to_string(FusionVariant v);
std::string to_string(LateralPlacement v);
std::string to_string(FinalFusion v);
std::string to_string(AttentionKeys v);
std::string to_string(GateBank v);
Architecture parse_architecture(const std::string& s);
FusionVariant parse_fusion_variant(const std::string& s);
LateralPlacement parse_lateral_placement(const std::string& s);
FinalFusion parse_final_fusion(const std::string& s);
AttentionKeys parse_attention_keys(const std::string& s);
GateBank parse_gate_bank(const std::string& s);

struct ModelConfig {
  Architecture architecture = Architecture::dual;
  std::size_t layers = 32;
  std::size_t dim = 576;  // d, the token width
  std::size_t state_dim = 16;
  std::size_t expand = 2;
  std::size_t conv_width = 4;
  std::size_t dt_rank = 0;  // 0 -> ceil(dim / 16)
  std::size_t frames_branch1 = 64;
  std::size_t frames_branch2 = 64;
  std::size_t image_height = 224;
  std::size_t image_width = 224;
  PatchSize patch{1, 16, 16};
  std::size_t num_classes = 2;
  FusionVariant fusion = FusionVariant::gated_b1_to_b2;
  LateralPlacement placement = LateralPlacement::continuous;
  bool lateral = true;
  FinalFusion final_fusion = FinalFusion::concatenation;
  bool skips = true;
  bool cropping = false;
  AttentionKeys attention_keys = AttentionKeys::full_sequence;
  GateBank gate_bank = GateBank::scheduled;
  ssm::Discretization discretization = ssm::Discretization::zoh;
  Precision precision = Precision::f64;

  std::size_t input_frames() const { return std::max(frames_branch1, frames_branch2); }
  std::size_t resolved_dt_rank() const;
  encoder::BlockShape block_shape() const;
  bool has_branch1() const;
  bool has_branch2() const;
  // Input width of the classifier head.
  std::size_t head_input() const;
  // Layers that hold lateral fusion parameters.
  std::set<std::size_t> parameterized_layers() const;
  // Throws ConfigError on violated invariants.
  void validate() const;
};

// Fused layer indices. The final block never fuses; layers == 1 yields {}.
std::set<std::size_t> lateral_schedule(LateralPlacement placement, std::size_t layers);

// sigmoid(gate) * receiver + (1 - sigmoid(gate)) * donor. With donor = CLS^1
// and receiver = CLS^2 this is the gated class-token fusion written into
// branch 2.
Tensor gctf_fuse(const Tensor& donor, const Tensor& receiver, const Tensor& gate);

struct AttentionParams {
  Tensor query, key, value;  // [d x d]
};

// Single-head attention of one query row over `memory` rows; returns
// softmax(q Wq (M Wk)^T / sqrt(d)) M Wv as [1 x d].
Tensor attend(const Tensor& query_row, const Tensor& memory, const AttentionParams& p);

struct LateralParams {
  Tensor gate;            // gated variants, [d]
  Tensor projection;      // concat variants, [2d x d]
  AttentionParams attention;
};

struct BranchParams {
  encoder::EmbeddingParams embedding;
  std::vector<encoder::BlockParams> blocks;
};

struct Prediction {
  Tensor logits;  // [num_classes]
  std::size_t label = 0;
  Tensor z;       // head input
};

// Everything forward() touched, for inspection, fusion tests and CAMs.
struct ForwardTrace {
  std::vector<Tensor> branch1_tokens;  // per layer, block output before fusion
  std::vector<Tensor> branch2_tokens;
  std::vector<Tensor> cls1;  // per layer, before fusion
  std::vector<Tensor> cls2;
  std::vector<Tensor> cls1_after;  // per layer, after fusion
  std::vector<Tensor> cls2_after;
  encoder::TokenSequence branch1_final;
  encoder::TokenSequence branch2_final;
  Tensor cls1_final, cls2_final;
  Prediction prediction;
};

// Mutable per-branch state used while the branches run in lockstep.
struct FusionState {
  encoder::BranchRunner* branch1 = nullptr;
  encoder::BranchRunner* branch2 = nullptr;
};

// Applies one lateral connection. Gated b2->b1 writes into branch 1; every
// other variant writes into branch 2.
void fusion_variant_apply(FusionVariant variant, AttentionKeys keys, FusionState state,
                          const LateralParams& params);

class DualBranchModel {
 public:
  DualBranchModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

  Prediction forward(const Video& video) const;
  // Separate inputs per branch (already sampled to each branch's frame count).
  Prediction forward(const Video& branch1_input, const Video& branch2_input) const;
  ForwardTrace trace(const Video& video) const;
  ForwardTrace trace(const Video& branch1_input, const Video& branch2_input) const;

  const std::map<std::size_t, LateralParams>& lateral() const { return lateral_; }
  const BranchParams& branch1() const { return branch1_; }
  const BranchParams& branch2() const { return branch2_; }

  void zero_grad() { params_.zero_grad(); }

 private:
  ModelConfig config_;
  ParameterSet params_;
  BranchParams branch1_, branch2_;
  std::map<std::size_t, LateralParams> lateral_;
  LateralParams final_;
  Tensor head_weight_, head_bias_;
};

// Class activation map on branch 1 at `layer`: channel-averaged gradients of
// the target logit weight the token activations, ReLU, max-normalized.
struct CamResult {
  encoder::Grid grid;
  std::vector<double> heatmap;  // [t x h x w]
  bool zero_gradient = false;
};

CamResult grad_cam(DualBranchModel& model, const Video& video, std::size_t target_class,
                   std::size_t layer);

// Heatmap from already-computed activations and gradients ([L x C] each,
// rows in canonical grid order).
std::vector<double> cam_from_activations(std::span<const double> activations,
                                         std::span<const double> gradients,
                                         std::size_t tokens, std::size_t channels);

}  // namespace dbm
