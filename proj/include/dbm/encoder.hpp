#pragma once

// Video tokenization, scan orderings, and the bidirectional Mamba encoder block.

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "dbm/ops.hpp"
#include "dbm/ssm.hpp"
#include "dbm/video.hpp"

namespace dbm::encoder {

struct Grid {
  std::size_t t = 1, h = 1, w = 1;
  std::size_t spatial() const { return h * w; }
  std::size_t tokens() const { return t * h * w; }
  bool operator==(const Grid&) const = default;
};

enum class ScanOrder { spatial_first, temporal_first };

// Canonical token index k = t_idx * (h*w) + s_idx. Returns perm with
// perm[position] = canonical index for the given visit order.
std::vector<std::size_t> scan_permutation(Grid grid, ScanOrder order);
std::vector<std::size_t> invert_permutation(const std::vector<std::size_t>& perm);

struct TokenSequence {
  Tensor tokens;  // [(L + 1) x C], CLS at row 0
  Grid grid;
  ScanOrder order = ScanOrder::spatial_first;
  std::vector<std::size_t> permutation;  // position -> canonical index
  std::vector<std::size_t> inverse;      // canonical index -> position
};

// Rearranges the non-CLS tokens into `target` order. CLS never moves.
TokenSequence reorder(const TokenSequence& seq, ScanOrder target);

struct EmbeddingParams {
  Tensor patch_kernel;  // [C x 3*pt*ph*pw]
  Tensor patch_bias;    // [C]
  Tensor cls;           // [1 x C]
  Tensor pos_spatial;   // [(h*w + 1) x C], row 0 belongs to CLS
  Tensor pos_temporal;  // [t x C]
};

Grid token_grid(std::size_t frames, std::size_t height, std::size_t width, PatchSize patch);

// Patchify, prepend CLS, add spatial positions (broadcast over frames, CLS takes
// row 0) and temporal positions (broadcast within each frame, none for CLS).
// Result is in spatial-first (canonical) order.
TokenSequence tokenize(const Video& video, const EmbeddingParams& params, PatchSize patch);

struct DirectionParams {
  Tensor conv_kernel;  // [EC x K]
  Tensor conv_bias;    // [EC]
  ssm::SelectiveParams scan;
};

struct BlockParams {
  Tensor norm_scale;  // [C]
  Tensor in_proj;     // [C x 2EC], columns split into x and z paths
  DirectionParams forward;
  DirectionParams backward;
  Tensor out_proj;  // [EC x C]
  std::size_t inner() const { return out_proj.rows(); }
};

struct BlockOutput {
  Tensor output;  // input + mixer
  Tensor mixer;   // out-projected sum of both directions
};

// norm -> in-projection -> per direction (causal depthwise conv, SiLU,
// selective scan, gate by SiLU(z)); forward runs the rows in order, backward
// over the reversed rows; directions summed, out-projected, added residually.
BlockOutput block_forward(const Tensor& x, const BlockParams& params,
                          ssm::Discretization mode = ssm::Discretization::zoh);
TokenSequence block_forward(const TokenSequence& seq, const BlockParams& params,
                            ssm::Discretization mode = ssm::Discretization::zoh);

// One scan direction of a block on already-projected x/z paths [L x EC].
Tensor direction_forward(const Tensor& x_path, const Tensor& z_gate_silu,
                         const DirectionParams& params, ssm::Discretization mode);

// Runs a stack block by block. With skips on, the mixer output of block l-2
// is added to the stream after block l (l >= 2).
class BranchRunner {
 public:
  BranchRunner(TokenSequence seq, bool skips, ssm::Discretization mode);

  void step(const BlockParams& block);
  std::size_t depth() const { return mixers_.size(); }

  const TokenSequence& sequence() const { return seq_; }
  Tensor cls() const;  // [1 x C]
  void replace_cls(const Tensor& cls);
  void replace_tokens(const Tensor& tokens);

 private:
  TokenSequence seq_;
  bool skips_;
  ssm::Discretization mode_;
  std::vector<Tensor> mixers_;
};

struct BranchResult {
  TokenSequence final;
  std::vector<Tensor> cls;  // one [C] entry per block
};

BranchResult branch_forward(const TokenSequence& seq, const std::vector<BlockParams>& blocks,
                            bool skips, ssm::Discretization mode = ssm::Discretization::zoh);

// ---------------------------------------------------------------------------
// Parameter construction

struct BlockShape {
  std::size_t width = 0;        // C
  std::size_t expand = 2;       // E
  std::size_t state = 16;       // N
  std::size_t conv_width = 4;   // K
  std::size_t dt_rank = 1;      // R
  std::size_t inner() const { return expand * width; }
};

// ceil(width / 16)
std::size_t default_dt_rank(std::size_t width);

BlockParams init_block(const BlockShape& shape, std::mt19937_64& rng, Precision precision);
EmbeddingParams init_embedding(std::size_t width, Grid grid, PatchSize patch,
                               std::mt19937_64& rng, Precision precision);

// Registers the tensors of a block/embedding under "<prefix>.<field>".
void register_block(ParameterSet& set, const std::string& prefix, BlockParams& block);
void register_embedding(ParameterSet& set, const std::string& prefix, EmbeddingParams& emb);

}  // namespace dbm::encoder
