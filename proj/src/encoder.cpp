#include "dbm/encoder.hpp"

#include <cmath>
#include <numeric>

#include "dbm/init.hpp"

namespace dbm {

namespace init {

Tensor normal(Shape shape, double stddev, std::mt19937_64& rng, Precision p) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::variable(std::move(shape), std::move(v), p);
}

Tensor uniform(Shape shape, double lo, double hi, std::mt19937_64& rng, Precision p) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::variable(std::move(shape), std::move(v), p);
}

Tensor constant(Shape shape, double value, Precision p) {
  const auto n = shape_numel(shape);
  return Tensor::variable(std::move(shape), std::vector<double>(n, value), p);
}

}  // namespace init

Video subsample_frames(const Video& v, std::size_t count) {
  if (count == 0 || count > v.frames)
    throw ShapeError("subsample_frames: cannot take " + std::to_string(count) + " of " +
                     std::to_string(v.frames) + " frames");
  if (count == v.frames) return v;
  Video out(count, v.height, v.width);
  for (std::size_t c = 0; c < Video::kChannels; ++c)
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t src = i * v.frames / count;
      for (std::size_t y = 0; y < v.height; ++y)
        for (std::size_t x = 0; x < v.width; ++x) out.at(c, i, y, x) = v.at(c, src, y, x);
    }
  return out;
}

namespace encoder {

std::vector<std::size_t> scan_permutation(Grid grid, ScanOrder order) {
  const std::size_t S = grid.spatial(), T = grid.t;
  std::vector<std::size_t> perm(grid.tokens());
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t s = 0; s < S; ++s) {
      const std::size_t canonical = t * S + s;
      const std::size_t position = order == ScanOrder::spatial_first ? canonical : s * T + t;
      perm[position] = canonical;
    }
  return perm;
}

std::vector<std::size_t> invert_permutation(const std::vector<std::size_t>& perm) {
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
  return inv;
}

TokenSequence reorder(const TokenSequence& seq, ScanOrder target) {
  const auto perm = scan_permutation(seq.grid, target);
  std::vector<std::size_t> rows(perm.size() + 1);
  rows[0] = 0;
  for (std::size_t j = 0; j < perm.size(); ++j) rows[j + 1] = 1 + seq.inverse[perm[j]];
  TokenSequence out;
  out.tokens = gather_rows(seq.tokens, rows);
  out.grid = seq.grid;
  out.order = target;
  out.permutation = perm;
  out.inverse = invert_permutation(perm);
  return out;
}

Grid token_grid(std::size_t frames, std::size_t height, std::size_t width, PatchSize patch) {
  if (patch.t == 0 || patch.h == 0 || patch.w == 0 || frames % patch.t || height % patch.h ||
      width % patch.w)
    throw ShapeError("video " + std::to_string(frames) + "x" + std::to_string(height) + "x" +
                     std::to_string(width) + " is not divisible by the patch size");
  return {frames / patch.t, height / patch.h, width / patch.w};
}

TokenSequence tokenize(const Video& video, const EmbeddingParams& params, PatchSize patch) {
  const Grid grid = token_grid(video.frames, video.height, video.width, patch);
  const std::size_t C = params.cls.numel();
  if (params.pos_spatial.rows() != grid.spatial() + 1 || params.pos_temporal.rows() != grid.t)
    throw ShapeError("tokenize: embedding tables do not match the token grid");
  Tensor pixels = Tensor::from({Video::kChannels, video.frames, video.height, video.width},
                               video.data, params.patch_kernel.precision());
  Tensor patches = patchify3d(pixels, params.patch_kernel, params.patch_bias, patch);

  const std::size_t L = grid.tokens(), S = grid.spatial();
  std::vector<std::size_t> spatial_rows(L + 1), temporal_rows(L);
  spatial_rows[0] = 0;
  for (std::size_t k = 0; k < L; ++k) {
    spatial_rows[k + 1] = 1 + k % S;
    temporal_rows[k] = k / S;
  }
  Tensor pos = gather_rows(params.pos_spatial, spatial_rows);
  Tensor temporal = concat_rows({Tensor::zeros({1, C}, params.pos_temporal.precision()),
                                 gather_rows(params.pos_temporal, temporal_rows)});
  TokenSequence seq;
  seq.tokens = add(add(concat_rows({params.cls, patches}), pos), temporal);
  seq.grid = grid;
  seq.order = ScanOrder::spatial_first;
  seq.permutation.resize(L);
  std::iota(seq.permutation.begin(), seq.permutation.end(), std::size_t{0});
  seq.inverse = seq.permutation;
  return seq;
}

Tensor direction_forward(const Tensor& x_path, const Tensor& z_gate_silu,
                         const DirectionParams& params, ssm::Discretization mode) {
  Tensor conv = silu(depthwise_conv1d_causal(x_path, params.conv_kernel, params.conv_bias));
  Tensor y = ssm::selective_scan(conv, params.scan, mode);
  return mul(y, z_gate_silu);
}

BlockOutput block_forward(const Tensor& x, const BlockParams& params, ssm::Discretization mode) {
  const std::size_t E = params.inner();
  if (x.rank() != 2 || x.cols() != params.norm_scale.numel())
    throw ShapeError("block_forward: channel dimension " + shape_string(x.shape()) +
                     " does not match block width " + std::to_string(params.norm_scale.numel()));
  Tensor u = rms_norm(x, params.norm_scale);
  Tensor xz = matmul(u, params.in_proj);
  Tensor x_path = slice_cols(xz, 0, E);
  Tensor gate = silu(slice_cols(xz, E, 2 * E));
  Tensor fwd = direction_forward(x_path, gate, params.forward, mode);
  Tensor bwd = reverse_rows(
      direction_forward(reverse_rows(x_path), reverse_rows(gate), params.backward, mode));
  Tensor mixer = matmul(add(fwd, bwd), params.out_proj);
  return {add(x, mixer), mixer};
}

TokenSequence block_forward(const TokenSequence& seq, const BlockParams& params,
                            ssm::Discretization mode) {
  TokenSequence out = seq;
  out.tokens = block_forward(seq.tokens, params, mode).output;
  return out;
}

BranchRunner::BranchRunner(TokenSequence seq, bool skips, ssm::Discretization mode)
    : seq_(std::move(seq)), skips_(skips), mode_(mode) {}

void BranchRunner::step(const BlockParams& block) {
  auto out = block_forward(seq_.tokens, block, mode_);
  mixers_.push_back(out.mixer);
  Tensor tokens = out.output;
  const std::size_t l = mixers_.size() - 1;
  if (skips_ && l >= 2) tokens = add(tokens, mixers_[l - 2]);
  seq_.tokens = tokens;
}

Tensor BranchRunner::cls() const { return slice_rows(seq_.tokens, 0, 1); }

void BranchRunner::replace_cls(const Tensor& cls) {
  if (cls.shape() != Shape{1, seq_.tokens.cols()})
    throw ShapeError("replace_cls: expected [1 x C], got " + shape_string(cls.shape()));
  seq_.tokens = concat_rows({cls, slice_rows(seq_.tokens, 1, seq_.tokens.rows())});
}

void BranchRunner::replace_tokens(const Tensor& tokens) {
  if (tokens.shape() != seq_.tokens.shape())
    throw ShapeError("replace_tokens: shape mismatch");
  seq_.tokens = tokens;
}

BranchResult branch_forward(const TokenSequence& seq, const std::vector<BlockParams>& blocks,
                            bool skips, ssm::Discretization mode) {
  BranchRunner runner(seq, skips, mode);
  BranchResult result;
  for (const auto& block : blocks) {
    runner.step(block);
    result.cls.push_back(reshape(runner.cls(), {runner.cls().cols()}));
  }
  result.final = runner.sequence();
  return result;
}

// ---------------------------------------------------------------------------

std::size_t default_dt_rank(std::size_t width) { return (width + 15) / 16; }

namespace {

DirectionParams init_direction(const BlockShape& s, std::mt19937_64& rng, Precision p) {
  const std::size_t E = s.inner(), N = s.state, R = s.dt_rank, K = s.conv_width;
  DirectionParams d;
  const double conv_bound = 1.0 / std::sqrt(static_cast<double>(K));
  d.conv_kernel = init::uniform({E, K}, -conv_bound, conv_bound, rng, p);
  d.conv_bias = init::uniform({E}, -conv_bound, conv_bound, rng, p);
  std::vector<double> a_log(E * N);
  for (std::size_t e = 0; e < E; ++e)
    for (std::size_t n = 0; n < N; ++n) a_log[e * N + n] = std::log(static_cast<double>(n + 1));
  d.scan.a_log = Tensor::variable({E, N}, std::move(a_log), p);
  d.scan.x_proj = init::normal({E, R + 2 * N}, 1.0 / std::sqrt(static_cast<double>(E)), rng, p);
  const double dt_bound = 1.0 / std::sqrt(static_cast<double>(R));
  d.scan.dt_proj = init::uniform({R, E}, -dt_bound, dt_bound, rng, p);
  // initial timescales log-uniform in [1e-3, 1e-1]
  std::uniform_real_distribution<double> log_dt(std::log(1e-3), std::log(1e-1));
  std::vector<double> bias(E);
  for (auto& b : bias) b = ssm::inverse_softplus(std::exp(log_dt(rng)));
  d.scan.dt_bias = Tensor::variable({E}, std::move(bias), p);
  return d;
}

void register_direction(ParameterSet& set, const std::string& prefix, DirectionParams& d) {
  d.conv_kernel = set.add(prefix + ".conv_kernel", d.conv_kernel);
  d.conv_bias = set.add(prefix + ".conv_bias", d.conv_bias, true, false);
  d.scan.a_log = set.add(prefix + ".a_log", d.scan.a_log, true, false);
  d.scan.x_proj = set.add(prefix + ".x_proj", d.scan.x_proj);
  d.scan.dt_proj = set.add(prefix + ".dt_proj", d.scan.dt_proj);
  d.scan.dt_bias = set.add(prefix + ".dt_bias", d.scan.dt_bias, true, false);
}

}  // namespace

BlockParams init_block(const BlockShape& s, std::mt19937_64& rng, Precision p) {
  if (s.width == 0 || s.expand == 0 || s.state == 0 || s.conv_width == 0 || s.dt_rank == 0)
    throw ConfigError("block dimensions must be positive");
  const std::size_t C = s.width, E = s.inner();
  BlockParams b;
  b.norm_scale = init::constant({C}, 1.0, p);
  b.in_proj = init::normal({C, 2 * E}, 1.0 / std::sqrt(static_cast<double>(C)), rng, p);
  b.forward = init_direction(s, rng, p);
  b.backward = init_direction(s, rng, p);
  b.out_proj = init::normal({E, C}, 1.0 / std::sqrt(static_cast<double>(E)), rng, p);
  return b;
}

EmbeddingParams init_embedding(std::size_t width, Grid grid, PatchSize patch,
                               std::mt19937_64& rng, Precision p) {
  const std::size_t P = Video::kChannels * patch.volume();
  EmbeddingParams e;
  e.patch_kernel = init::normal({width, P}, 1.0 / std::sqrt(static_cast<double>(P)), rng, p);
  e.patch_bias = init::constant({width}, 0.0, p);
  e.cls = init::normal({1, width}, 0.02, rng, p);
  e.pos_spatial = init::normal({grid.spatial() + 1, width}, 0.02, rng, p);
  e.pos_temporal = init::normal({grid.t, width}, 0.02, rng, p);
  return e;
}

void register_block(ParameterSet& set, const std::string& prefix, BlockParams& b) {
  b.norm_scale = set.add(prefix + ".norm", b.norm_scale, true, false);
  b.in_proj = set.add(prefix + ".in_proj", b.in_proj);
  register_direction(set, prefix + ".fwd", b.forward);
  register_direction(set, prefix + ".bwd", b.backward);
  b.out_proj = set.add(prefix + ".out_proj", b.out_proj);
}

void register_embedding(ParameterSet& set, const std::string& prefix, EmbeddingParams& e) {
  e.patch_kernel = set.add(prefix + ".patch_kernel", e.patch_kernel);
  e.patch_bias = set.add(prefix + ".patch_bias", e.patch_bias, true, false);
  e.cls = set.add(prefix + ".cls", e.cls, true, false);
  e.pos_spatial = set.add(prefix + ".pos_spatial", e.pos_spatial, true, false);
  e.pos_temporal = set.add(prefix + ".pos_temporal", e.pos_temporal, true, false);
}

}  // namespace encoder
}  // namespace dbm
