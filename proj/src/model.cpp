#include "dbm/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dbm/init.hpp"

namespace dbm {

namespace {

template <typename E, std::size_t N>
std::string enum_name(E v, const std::pair<E, const char*> (&table)[N]) {
  for (const auto& [e, name] : table)
    if (e == v) return name;
  return "?";
}

template <typename E, std::size_t N>
E enum_parse(const std::string& s, const std::pair<E, const char*> (&table)[N],
             const char* what) {
  std::string key = s;
  std::replace(key.begin(), key.end(), '-', '_');
  for (const auto& [e, name] : table)
    if (key == name) return e;
  std::string allowed;
  for (const auto& [e, name] : table) allowed += std::string(allowed.empty() ? "" : ", ") + name;
  throw ConfigError(std::string("unknown ") + what + " '" + s + "' (expected one of: " +
                    allowed + ")");
}

const std::pair<Architecture, const char*> kArch[] = {
    {Architecture::dual, "dual"},
    {Architecture::spatial, "spatial"},
    {Architecture::temporal, "temporal"},
    {Architecture::head_only, "head_only"}};
const std::pair<FusionVariant, const char*> kFusion[] = {
    {FusionVariant::full_hidden_concat, "full_hidden_concat"},
    {FusionVariant::cls_concat, "cls_concat"},
    {FusionVariant::additive, "additive"},
    {FusionVariant::cross_attention, "cross_attention"},
    {FusionVariant::gated_b2_to_b1, "gated_b2_to_b1"},
    {FusionVariant::gated_b1_to_b2, "gated_b1_to_b2"}};
const std::pair<LateralPlacement, const char*> kPlacement[] = {
    {LateralPlacement::continuous, "continuous"},
    {LateralPlacement::even, "even"},
    {LateralPlacement::odd, "odd"},
    {LateralPlacement::first_only, "first_only"},
    {LateralPlacement::last_only, "last_only"},
    {LateralPlacement::middle, "middle"},
    {LateralPlacement::begin_and_end, "begin_and_end"}};
const std::pair<FinalFusion, const char*> kFinal[] = {
    {FinalFusion::concatenation, "concatenation"},
    {FinalFusion::addition, "addition"},
    {FinalFusion::cross_attention, "cross_attention"},
    {FinalFusion::gated_b1_to_b2, "gated_b1_to_b2"},
    {FinalFusion::gated_b2_to_b1, "gated_b2_to_b1"}};
const std::pair<AttentionKeys, const char*> kKeys[] = {
    {AttentionKeys::full_sequence, "full_sequence"}, {AttentionKeys::cls_only, "cls_only"}};
const std::pair<GateBank, const char*> kBank[] = {{GateBank::scheduled, "scheduled"},
                                                  {GateBank::full, "full"}};

}  // namespace

std::string to_string(Architecture v) { return enum_name(v, kArch); }
std::string to_string(FusionVariant v) { return enum_name(v, kFusion); }
std::string to_string(LateralPlacement v) { return enum_name(v, kPlacement); }
std::string to_string(FinalFusion v) { return enum_name(v, kFinal); }
std::string to_string(AttentionKeys v) { return enum_name(v, kKeys); }
std::string to_string(GateBank v) { return enum_name(v, kBank); }
Architecture parse_architecture(const std::string& s) { return enum_parse(s, kArch, "architecture"); }
FusionVariant parse_fusion_variant(const std::string& s) {
  return enum_parse(s, kFusion, "fusion variant");
}
LateralPlacement parse_lateral_placement(const std::string& s) {
  return enum_parse(s, kPlacement, "lateral placement");
}
FinalFusion parse_final_fusion(const std::string& s) {
  return enum_parse(s, kFinal, "final fusion");
}
AttentionKeys parse_attention_keys(const std::string& s) {
  return enum_parse(s, kKeys, "attention keys");
}
GateBank parse_gate_bank(const std::string& s) { return enum_parse(s, kBank, "gate bank"); }

// ---------------------------------------------------------------------------

std::set<std::size_t> lateral_schedule(LateralPlacement placement, std::size_t layers) {
  std::set<std::size_t> out;
  if (layers < 2) return out;
  const std::size_t last = layers - 2;
  switch (placement) {
    case LateralPlacement::continuous:
      for (std::size_t l = 0; l <= last; ++l) out.insert(l);
      break;
    case LateralPlacement::even:
      for (std::size_t l = 0; l <= last; l += 2) out.insert(l);
      break;
    case LateralPlacement::odd:
      for (std::size_t l = 1; l <= last; l += 2) out.insert(l);
      break;
    case LateralPlacement::first_only:
      out.insert(0);
      break;
    case LateralPlacement::last_only:
      out.insert(last);
      break;
    case LateralPlacement::middle:
      out.insert((layers - 1) / 2);
      break;
    case LateralPlacement::begin_and_end:
      out.insert(0);
      out.insert(last);
      break;
  }
  return out;
}

std::size_t ModelConfig::resolved_dt_rank() const {
  return dt_rank ? dt_rank : encoder::default_dt_rank(dim);
}

encoder::BlockShape ModelConfig::block_shape() const {
  return {dim, expand, state_dim, conv_width, resolved_dt_rank()};
}

bool ModelConfig::has_branch1() const {
  return architecture == Architecture::dual || architecture == Architecture::spatial;
}
bool ModelConfig::has_branch2() const {
  return architecture == Architecture::dual || architecture == Architecture::temporal;
}

std::size_t ModelConfig::head_input() const {
  if (architecture == Architecture::dual && final_fusion == FinalFusion::concatenation)
    return 2 * dim;
  return dim;
}

std::set<std::size_t> ModelConfig::parameterized_layers() const {
  if (architecture != Architecture::dual || !lateral) return {};
  if (gate_bank == GateBank::full) return lateral_schedule(LateralPlacement::continuous, layers);
  return lateral_schedule(placement, layers);
}

void ModelConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(dim >= 1, "dim must be positive");
  need(num_classes >= 2, "num_classes must be at least 2");
  if (architecture == Architecture::head_only) return;
  need(layers >= 1, "layers must be positive");
  need(state_dim >= 1, "state_dim must be positive");
  need(expand >= 1, "expand must be positive");
  need(conv_width >= 1, "conv_width must be positive");
  need(patch.t >= 1 && patch.h >= 1 && patch.w >= 1, "patch sizes must be positive");
  need(image_height >= patch.h && image_height % patch.h == 0,
       "image_height must be a positive multiple of patch_h");
  need(image_width >= patch.w && image_width % patch.w == 0,
       "image_width must be a positive multiple of patch_w");
  if (has_branch1())
    need(frames_branch1 >= patch.t && frames_branch1 % patch.t == 0,
         "frames_branch1 must be a positive multiple of patch_t");
  if (has_branch2())
    need(frames_branch2 >= patch.t && frames_branch2 % patch.t == 0,
         "frames_branch2 must be a positive multiple of patch_t");
  if (architecture == Architecture::dual && lateral &&
      fusion == FusionVariant::full_hidden_concat)
    need(frames_branch1 == frames_branch2,
         "full_hidden_concat needs equal token counts in both branches");
}

// ---------------------------------------------------------------------------

Tensor gctf_fuse(const Tensor& donor, const Tensor& receiver, const Tensor& gate) {
  if (donor.shape() != receiver.shape())
    throw ShapeError("gctf_fuse: donor " + shape_string(donor.shape()) + " vs receiver " +
                     shape_string(receiver.shape()));
  if (gate.numel() != receiver.numel())
    throw ShapeError("gctf_fuse: gate has " + std::to_string(gate.numel()) +
                     " entries, tokens have " + std::to_string(receiver.numel()));
  Tensor s = sigmoid(reshape(gate, receiver.shape()));
  return add(mul(s, receiver), mul(affine(s, -1.0, 1.0), donor));
}

Tensor attend(const Tensor& query_row, const Tensor& memory, const AttentionParams& p) {
  if (query_row.rank() != 2 || query_row.rows() != 1)
    throw ShapeError("attend: query must be [1 x d]");
  const double d = static_cast<double>(query_row.cols());
  Tensor q = matmul(query_row, p.query);
  Tensor k = matmul(memory, p.key);
  Tensor v = matmul(memory, p.value);
  Tensor scores = affine(matmul(q, transpose(k)), 1.0 / std::sqrt(d));
  return matmul(softmax_rows(scores), v);
}

namespace {

// Branch-1 rows rearranged to line up with branch-2 positions.
Tensor align_to(const encoder::TokenSequence& from, const encoder::TokenSequence& to) {
  std::vector<std::size_t> idx(to.permutation.size() + 1);
  idx[0] = 0;
  for (std::size_t p = 0; p < to.permutation.size(); ++p)
    idx[p + 1] = 1 + from.inverse[to.permutation[p]];
  return gather_rows(from.tokens, idx);
}

}  // namespace

void fusion_variant_apply(FusionVariant variant, AttentionKeys keys, FusionState state,
                          const LateralParams& params) {
  auto& b1 = *state.branch1;
  auto& b2 = *state.branch2;
  switch (variant) {
    case FusionVariant::gated_b1_to_b2:
      b2.replace_cls(gctf_fuse(b1.cls(), b2.cls(), params.gate));
      break;
    case FusionVariant::gated_b2_to_b1:
      b1.replace_cls(gctf_fuse(b2.cls(), b1.cls(), params.gate));
      break;
    case FusionVariant::additive:
      b2.replace_cls(add(b2.cls(), b1.cls()));
      break;
    case FusionVariant::cls_concat: {
      Tensor c2 = b2.cls();
      b2.replace_cls(add(c2, matmul(concat_cols(b1.cls(), c2), params.projection)));
      break;
    }
    case FusionVariant::full_hidden_concat: {
      const auto& s1 = b1.sequence();
      const auto& s2 = b2.sequence();
      if (s1.tokens.rows() != s2.tokens.rows())
        throw ShapeError("full_hidden_concat: branches hold " +
                         std::to_string(s1.tokens.rows()) + " and " +
                         std::to_string(s2.tokens.rows()) + " tokens");
      Tensor t1 = align_to(s1, s2);
      b2.replace_tokens(add(s2.tokens, matmul(concat_cols(t1, s2.tokens), params.projection)));
      break;
    }
    case FusionVariant::cross_attention: {
      Tensor c2 = b2.cls();
      Tensor memory = keys == AttentionKeys::cls_only ? b1.cls() : b1.sequence().tokens;
      b2.replace_cls(add(c2, attend(c2, memory, params.attention)));
      break;
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

AttentionParams init_attention(std::size_t d, std::mt19937_64& rng, Precision p) {
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  AttentionParams a;
  a.query = init::normal({d, d}, sd, rng, p);
  a.key = init::normal({d, d}, sd, rng, p);
  a.value = init::normal({d, d}, 0.02, rng, p);
  return a;
}

void register_attention(ParameterSet& set, const std::string& prefix, AttentionParams& a) {
  a.query = set.add(prefix + ".query", a.query);
  a.key = set.add(prefix + ".key", a.key);
  a.value = set.add(prefix + ".value", a.value);
}

BranchParams make_branch(const ModelConfig& c, std::size_t frames, std::mt19937_64& rng,
                         ParameterSet& set, const std::string& prefix) {
  BranchParams b;
  auto grid = encoder::token_grid(frames, c.image_height, c.image_width, c.patch);
  b.embedding = encoder::init_embedding(c.dim, grid, c.patch, rng, c.precision);
  encoder::register_embedding(set, prefix + ".embed", b.embedding);
  for (std::size_t l = 0; l < c.layers; ++l) {
    b.blocks.push_back(encoder::init_block(c.block_shape(), rng, c.precision));
    encoder::register_block(set, prefix + ".block" + std::to_string(l), b.blocks.back());
  }
  return b;
}

}  // namespace

DualBranchModel::DualBranchModel(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const auto d = config_.dim;
  const auto p = config_.precision;

  if (config_.has_branch1())
    branch1_ = make_branch(config_, config_.frames_branch1, rng, params_, "branch1");
  if (config_.has_branch2())
    branch2_ = make_branch(config_, config_.frames_branch2, rng, params_, "branch2");

  for (std::size_t l : config_.parameterized_layers()) {
    LateralParams lp;
    const std::string prefix = "lateral" + std::to_string(l);
    switch (config_.fusion) {
      case FusionVariant::gated_b1_to_b2:
      case FusionVariant::gated_b2_to_b1:
        lp.gate = params_.add(prefix + ".gate", init::constant({d}, 0.0, p), true, false);
        break;
      case FusionVariant::cls_concat:
      case FusionVariant::full_hidden_concat:
        lp.projection = params_.add(prefix + ".proj", init::constant({2 * d, d}, 0.0, p));
        break;
      case FusionVariant::cross_attention:
        lp.attention = init_attention(d, rng, p);
        register_attention(params_, prefix + ".attn", lp.attention);
        break;
      case FusionVariant::additive:
        break;
    }
    lateral_.emplace(l, std::move(lp));
  }

  if (config_.architecture == Architecture::dual) {
    switch (config_.final_fusion) {
      case FinalFusion::gated_b1_to_b2:
      case FinalFusion::gated_b2_to_b1:
        final_.gate = params_.add("final.gate", init::constant({d}, 0.0, p), true, false);
        break;
      case FinalFusion::cross_attention:
        final_.attention = init_attention(d, rng, p);
        register_attention(params_, "final.attn", final_.attention);
        break;
      default:
        break;
    }
  }

  const auto in = config_.head_input();
  head_weight_ = params_.add("head.weight",
                             init::normal({in, config_.num_classes}, 0.02, rng, p));
  head_bias_ = params_.add("head.bias", init::constant({config_.num_classes}, 0.0, p),
                           true, false);
}

Prediction DualBranchModel::forward(const Video& video) const {
  return trace(video).prediction;
}

Prediction DualBranchModel::forward(const Video& v1, const Video& v2) const {
  return trace(v1, v2).prediction;
}

ForwardTrace DualBranchModel::trace(const Video& video) const {
  if (config_.architecture == Architecture::head_only)
    throw ConfigError("head_only model has no encoder");
  const std::size_t need = std::max(config_.has_branch1() ? config_.frames_branch1 : 0,
                                    config_.has_branch2() ? config_.frames_branch2 : 0);
  if (video.frames < need)
    throw ShapeError("video has " + std::to_string(video.frames) + " frames, model needs " +
                     std::to_string(need));
  Video v1, v2;
  if (config_.has_branch1()) v1 = subsample_frames(video, config_.frames_branch1);
  if (config_.has_branch2()) v2 = subsample_frames(video, config_.frames_branch2);
  return trace(v1, v2);
}

ForwardTrace DualBranchModel::trace(const Video& v1, const Video& v2) const {
  const auto& c = config_;
  if (c.architecture == Architecture::head_only)
    throw ConfigError("head_only model has no encoder");
  auto check = [&](const Video& v, std::size_t frames, const char* which) {
    if (v.frames != frames || v.height != c.image_height || v.width != c.image_width)
      throw ShapeError(std::string(which) + " input is " + std::to_string(v.frames) + "x" +
                       std::to_string(v.height) + "x" + std::to_string(v.width) +
                       ", expected " + std::to_string(frames) + "x" +
                       std::to_string(c.image_height) + "x" + std::to_string(c.image_width));
  };

  std::optional<encoder::BranchRunner> r1, r2;
  if (c.has_branch1()) {
    check(v1, c.frames_branch1, "branch 1");
    r1.emplace(encoder::tokenize(v1, branch1_.embedding, c.patch), c.skips, c.discretization);
  }
  if (c.has_branch2()) {
    check(v2, c.frames_branch2, "branch 2");
    auto seq = encoder::tokenize(v2, branch2_.embedding, c.patch);
    r2.emplace(encoder::reorder(seq, encoder::ScanOrder::temporal_first), c.skips,
               c.discretization);
  }

  ForwardTrace tr;
  const auto fused = (c.architecture == Architecture::dual && c.lateral)
                         ? lateral_schedule(c.placement, c.layers)
                         : std::set<std::size_t>{};
  for (std::size_t l = 0; l < c.layers; ++l) {
    if (r1) {
      r1->step(branch1_.blocks[l]);
      tr.branch1_tokens.push_back(r1->sequence().tokens);
      tr.cls1.push_back(r1->cls());
    }
    if (r2) {
      r2->step(branch2_.blocks[l]);
      tr.branch2_tokens.push_back(r2->sequence().tokens);
      tr.cls2.push_back(r2->cls());
    }
    if (fused.count(l)) {
      fusion_variant_apply(c.fusion, c.attention_keys, {&*r1, &*r2}, lateral_.at(l));
    }
    if (r1) tr.cls1_after.push_back(r1->cls());
    if (r2) tr.cls2_after.push_back(r2->cls());
  }

  Tensor z;
  if (r1) {
    tr.branch1_final = r1->sequence();
    tr.cls1_final = r1->cls();
  }
  if (r2) {
    tr.branch2_final = r2->sequence();
    tr.cls2_final = r2->cls();
  }
  if (c.architecture == Architecture::spatial) {
    z = tr.cls1_final;
  } else if (c.architecture == Architecture::temporal) {
    z = tr.cls2_final;
  } else {
    const Tensor& c1 = tr.cls1_final;
    const Tensor& c2 = tr.cls2_final;
    switch (c.final_fusion) {
      case FinalFusion::concatenation:
        z = concat_cols(c1, c2);
        break;
      case FinalFusion::addition:
        z = add(c1, c2);
        break;
      case FinalFusion::cross_attention: {
        Tensor memory = c.attention_keys == AttentionKeys::cls_only ? c1 : tr.branch1_final.tokens;
        z = add(c2, attend(c2, memory, final_.attention));
        break;
      }
      case FinalFusion::gated_b1_to_b2:
        z = gctf_fuse(c1, c2, final_.gate);
        break;
      case FinalFusion::gated_b2_to_b1:
        z = gctf_fuse(c2, c1, final_.gate);
        break;
    }
  }

  Tensor logits = add(reshape(matmul(z, head_weight_), {c.num_classes}), head_bias_);
  auto lv = logits.values();
  tr.prediction.label = static_cast<std::size_t>(std::max_element(lv.begin(), lv.end()) - lv.begin());
  tr.prediction.logits = logits;
  tr.prediction.z = reshape(z, {z.numel()});
  return tr;
}

// ---------------------------------------------------------------------------

std::vector<double> cam_from_activations(std::span<const double> act,
                                         std::span<const double> grad, std::size_t tokens,
                                         std::size_t channels) {
  if (act.size() != tokens * channels || grad.size() != tokens * channels)
    throw ShapeError("cam_from_activations: size mismatch");
  std::vector<double> w(channels, 0.0);
  for (std::size_t k = 0; k < tokens; ++k)
    for (std::size_t ch = 0; ch < channels; ++ch) w[ch] += grad[k * channels + ch];
  if (tokens)
    for (auto& x : w) x /= static_cast<double>(tokens);
  std::vector<double> map(tokens, 0.0);
  double peak = 0.0;
  for (std::size_t k = 0; k < tokens; ++k) {
    double s = 0.0;
    for (std::size_t ch = 0; ch < channels; ++ch) s += w[ch] * act[k * channels + ch];
    map[k] = std::max(0.0, s);
    peak = std::max(peak, map[k]);
  }
  if (peak > 0.0)
    for (auto& x : map) x /= peak;
  return map;
}

CamResult grad_cam(DualBranchModel& model, const Video& video, std::size_t target_class,
                   std::size_t layer) {
  const auto& c = model.config();
  if (!c.has_branch1()) throw ConfigError("grad_cam needs the spatial branch");
  if (layer >= c.layers)
    throw ConfigError("grad_cam layer " + std::to_string(layer) + " out of range (layers = " +
                      std::to_string(c.layers) + ")");
  if (target_class >= c.num_classes)
    throw ConfigError("grad_cam target class out of range");

  model.zero_grad();
  auto tr = model.trace(video);
  const auto& logits = tr.prediction.logits;
  Tensor target = slice_cols(reshape(logits, {1, c.num_classes}), target_class, target_class + 1);
  backward(target);

  const Tensor& act = tr.branch1_tokens[layer];
  const std::size_t rows = act.rows(), ch = act.cols(), tokens = rows - 1;
  CamResult out;
  out.grid = tr.branch1_final.grid;
  auto a = act.values().subspan(ch);
  std::vector<double> g(tokens * ch, 0.0);
  if (act.has_grad()) {
    auto gs = act.grad().subspan(ch);
    std::copy(gs.begin(), gs.end(), g.begin());
  }
  out.zero_gradient = std::all_of(g.begin(), g.end(), [](double x) { return x == 0.0; });
  // branch 1 keeps the canonical order, but map through the permutation anyway
  auto local = cam_from_activations(a, g, tokens, ch);
  const auto& perm = tr.branch1_final.permutation;
  out.heatmap.assign(tokens, 0.0);
  for (std::size_t p = 0; p < tokens; ++p) out.heatmap[perm[p]] = local[p];
  model.zero_grad();
  return out;
}

}  // namespace dbm
