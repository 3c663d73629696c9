#include "dbm/cost.hpp"

#include <map>

namespace dbm {

namespace {

using u64 = std::uint64_t;

// Accumulates named entries, keeping first-seen order.
template <typename T>
class Tally {
 public:
  void add(const std::string& name, T v) {
    auto it = index_.find(name);
    if (it == index_.end()) {
      index_[name] = items_.size();
      items_.emplace_back(name, v);
    } else {
      items_[it->second].second += v;
    }
  }
  T total() const {
    T s{};
    for (const auto& [n, v] : items_) s += v;
    return s;
  }
  std::vector<std::pair<std::string, T>> items() const { return items_; }

 private:
  std::map<std::string, std::size_t> index_;
  std::vector<std::pair<std::string, T>> items_;
};

encoder::Grid grid_for(const ModelConfig& c, std::size_t frames) {
  return encoder::token_grid(frames, c.image_height, c.image_width, c.patch);
}

void embedding_params(const ModelConfig& c, std::size_t frames, Tally<u64>& t) {
  const u64 d = c.dim;
  const auto g = grid_for(c, frames);
  t.add("embedding", d * Video::kChannels * c.patch.volume() + d);  // patch conv + bias
  t.add("embedding", d);                                             // cls
  t.add("embedding", (g.spatial() + 1) * d + g.t * d);               // positions
}

void block_params(const ModelConfig& c, Tally<u64>& t) {
  const u64 d = c.dim, e = c.expand * c.dim, n = c.state_dim, k = c.conv_width;
  const u64 r = c.resolved_dt_rank();
  const u64 layers = c.layers;
  t.add("norm", layers * d);
  t.add("in_proj", layers * d * 2 * e);
  t.add("conv", layers * 2 * (e * k + e));
  t.add("a_log", layers * 2 * e * n);
  t.add("x_proj", layers * 2 * e * (r + 2 * n));
  t.add("dt_proj", layers * 2 * (r * e + e));
  t.add("out_proj", layers * e * d);
}

u64 fusion_params(FusionVariant v, u64 d) {
  switch (v) {
    case FusionVariant::gated_b1_to_b2:
    case FusionVariant::gated_b2_to_b1:
      return d;
    case FusionVariant::cls_concat:
    case FusionVariant::full_hidden_concat:
      return 2 * d * d;
    case FusionVariant::cross_attention:
      return 3 * d * d;
    case FusionVariant::additive:
      return 0;
  }
  return 0;
}

u64 final_params(FinalFusion v, u64 d) {
  switch (v) {
    case FinalFusion::gated_b1_to_b2:
    case FinalFusion::gated_b2_to_b1:
      return d;
    case FinalFusion::cross_attention:
      return 3 * d * d;
    default:
      return 0;
  }
}

// Sequence length including CLS.
double seq_len(const ModelConfig& c, std::size_t frames) {
  return static_cast<double>(grid_for(c, frames).tokens() + 1);
}

void branch_macs(const ModelConfig& c, std::size_t frames, Tally<double>& t) {
  const double d = static_cast<double>(c.dim);
  const double e = static_cast<double>(c.expand * c.dim);
  const double n = static_cast<double>(c.state_dim);
  const double k = static_cast<double>(c.conv_width);
  const double r = static_cast<double>(c.resolved_dt_rank());
  const double layers = static_cast<double>(c.layers);
  const double tokens = static_cast<double>(grid_for(c, frames).tokens());
  const double len = seq_len(c, frames);
  const double patch_in = static_cast<double>(Video::kChannels * c.patch.volume());

  t.add("patch_embed", tokens * d * (patch_in + 1));
  t.add("in_proj", layers * len * d * 2 * e);
  t.add("conv", layers * 2 * len * e * (k + 1));
  t.add("x_proj", layers * 2 * len * e * (r + 2 * n));
  t.add("dt_proj", layers * 2 * len * e * (r + 1));
  t.add("scan", layers * 2 * len * e * n);
  t.add("out_proj", layers * len * e * d);
}

double attention_macs(double d, double memory) {
  // q projection, k and v projections over the memory, scores, weighted sum
  return d * d + 2 * memory * d * d + memory * d + memory * d;
}

double fusion_macs(const ModelConfig& c, double branch1_len) {
  const double d = static_cast<double>(c.dim);
  switch (c.fusion) {
    case FusionVariant::cls_concat:
      return 2 * d * d;
    case FusionVariant::full_hidden_concat:
      return branch1_len * 2 * d * d;
    case FusionVariant::cross_attention:
      return attention_macs(d, c.attention_keys == AttentionKeys::cls_only ? 1.0 : branch1_len);
    default:
      return 0.0;
  }
}

}  // namespace

ParamReport param_report(const ModelConfig& c) {
  c.validate();
  Tally<u64> t;
  const u64 d = c.dim;
  if (c.architecture != Architecture::head_only) {
    if (c.has_branch1()) {
      embedding_params(c, c.frames_branch1, t);
      block_params(c, t);
    }
    if (c.has_branch2()) {
      embedding_params(c, c.frames_branch2, t);
      block_params(c, t);
    }
    if (c.architecture == Architecture::dual) {
      t.add("lateral", c.parameterized_layers().size() * fusion_params(c.fusion, d));
      t.add("final_fusion", final_params(c.final_fusion, d));
    }
  }
  t.add("head", c.head_input() * c.num_classes + c.num_classes);
  return {t.total(), t.items()};
}

std::uint64_t count_params(const ModelConfig& c) { return param_report(c).total; }

CostReport count_flops(const ModelConfig& c) {
  c.validate();
  Tally<double> t;
  const double d = static_cast<double>(c.dim);
  if (c.architecture != Architecture::head_only) {
    if (c.has_branch1()) branch_macs(c, c.frames_branch1, t);
    if (c.has_branch2()) branch_macs(c, c.frames_branch2, t);
    if (c.architecture == Architecture::dual) {
      const double len1 = seq_len(c, c.frames_branch1);
      const double fused =
          c.lateral ? static_cast<double>(lateral_schedule(c.placement, c.layers).size()) : 0.0;
      t.add("lateral", fused * fusion_macs(c, len1));
      double fin = 0.0;
      if (c.final_fusion == FinalFusion::cross_attention)
        fin = attention_macs(d, c.attention_keys == AttentionKeys::cls_only ? 1.0 : len1);
      t.add("final_fusion", fin);
    }
  }
  t.add("head", static_cast<double>(c.num_classes) * (static_cast<double>(c.head_input()) + 1));
  CostReport out;
  out.macs = t.total();
  out.flops = 2 * out.macs;
  out.breakdown = t.items();
  return out;
}

// ---------------------------------------------------------------------------

namespace {

ModelConfig full_scale_base() {
  ModelConfig c;
  c.layers = 32;
  c.dim = 576;
  c.state_dim = 16;
  c.expand = 2;
  c.conv_width = 4;
  c.frames_branch1 = c.frames_branch2 = 64;
  c.image_height = c.image_width = 224;
  c.patch = {1, 16, 16};
  return c;
}

bool same_backbone(const ModelConfig& a, const ModelConfig& b) {
  return a.layers == b.layers && a.dim == b.dim && a.state_dim == b.state_dim &&
         a.expand == b.expand && a.conv_width == b.conv_width &&
         a.resolved_dt_rank() == b.resolved_dt_rank() && a.image_height == b.image_height &&
         a.image_width == b.image_width && a.patch.t == b.patch.t && a.patch.h == b.patch.h &&
         a.patch.w == b.patch.w;
}

}  // namespace

ModelConfig full_scale_single_branch() {
  ModelConfig c = full_scale_base();
  c.architecture = Architecture::spatial;
  c.num_classes = 400;
  return c;
}

ModelConfig full_scale_dual_branch() {
  ModelConfig c = full_scale_base();
  c.architecture = Architecture::dual;
  c.fusion = FusionVariant::gated_b1_to_b2;
  c.placement = LateralPlacement::continuous;
  c.final_fusion = FinalFusion::concatenation;
  c.num_classes = 2;
  return c;
}

ModelConfig tiny_dual_branch() {
  ModelConfig c;
  c.layers = 2;
  c.dim = 8;
  c.state_dim = 4;
  c.expand = 2;
  c.conv_width = 4;
  c.frames_branch1 = c.frames_branch2 = 2;
  c.image_height = c.image_width = 8;
  c.patch = {1, 8, 8};
  return c;
}

std::optional<ReferenceFigures> reference_figures(const ModelConfig& c) {
  const ModelConfig base = full_scale_base();
  if (!same_backbone(c, base)) return std::nullopt;
  if (c.architecture == Architecture::spatial || c.architecture == Architecture::temporal) {
    const std::size_t frames =
        c.architecture == Architecture::spatial ? c.frames_branch1 : c.frames_branch2;
    if (frames == 64) return ReferenceFigures{"VideoMamba-M", 74.0e6, 806.0e9};
  }
  if (c.architecture == Architecture::dual && c.frames_branch1 == 64 && c.frames_branch2 == 64)
    return ReferenceFigures{"Dual Branch VideoMamba", 154.3e6, 1830.0e9};
  return std::nullopt;
}

}  // namespace dbm
