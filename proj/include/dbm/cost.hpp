#pragma once

// Analytic parameter and compute counts for a model configuration.
//
// Compute is counted as multiply-accumulates over contractions: linear layers
// (bias included as one extra MAC per output), convolutions, the scan readout
// y = C h, attention products and the head. Elementwise work (norms,
// activations, gating, the state update, residual adds) is not counted.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dbm/model.hpp"

namespace dbm {

struct ParamReport {
  std::uint64_t total = 0;
  std::vector<std::pair<std::string, std::uint64_t>> breakdown;
};

struct CostReport {
  double macs = 0.0;
  double flops = 0.0;  // 2 * macs
  std::vector<std::pair<std::string, double>> breakdown;  // macs per module
};

ParamReport param_report(const ModelConfig& config);
std::uint64_t count_params(const ModelConfig& config);
CostReport count_flops(const ModelConfig& config);

// Published size and compute for the two full-scale reference models.
struct ReferenceFigures {
  std::string name;
  double params;
  double compute;  // as tabulated; compared against macs
};

// Non-empty only for the full-scale single-branch and dual-branch layouts.
std::optional<ReferenceFigures> reference_figures(const ModelConfig& config);

// Full-scale presets: 32 layers, d = 576, 64 frames of 224x224, 1x16x16 patches.
ModelConfig full_scale_single_branch();  // 400-way stub head
ModelConfig full_scale_dual_branch();
// 2 layers, d = 8, T = 2, 8x8 frames, 8x8 patches, continuous gated fusion.
ModelConfig tiny_dual_branch();

}  // namespace dbm
