#pragma once

// Optimizer, learning-rate schedule, metrics, significance testing and the
// training loop.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dbm/data.hpp"
#include "dbm/model.hpp"

namespace dbm {

struct Schedule {
  double total_epochs = 55;
  double warmup_epochs = 5;
  double base_lr = 1e-4;
  double min_lr = 1e-6;
  void validate() const;
};

// Linear warmup min_lr -> base_lr, then cosine base_lr -> min_lr.
double lr_at(const Schedule& s, double epoch);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

class AdamW {
 public:
  AdamW(ParameterSet& params, AdamWConfig config);

  // theta <- theta * (1 - lr * wd) for decayed parameters, then the
  // bias-corrected Adam step using the accumulated gradients.
  void step(double lr);
  std::size_t steps() const { return step_; }
  const std::vector<std::vector<double>>& first_moment() const { return m_; }
  const std::vector<std::vector<double>>& second_moment() const { return v_; }

 private:
  ParameterSet* params_;
  AdamWConfig cfg_;
  std::size_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct EvalReport {
  std::size_t count = 0;
  double top1 = 0;  // percent
  double f1_violent = 0;
  double f1_nonviolent = 0;
  // confusion[true][predicted]
  std::array<std::array<std::size_t, 2>, 2> confusion{};
  std::vector<int> predictions;
};

EvalReport evaluate_predictions(const std::vector<int>& labels, const std::vector<int>& predictions);

// Model input for a clip: optional detection crop, resize to the model's
// frame size, frames sampled at uniform stride.
Video prepare_input(const Clip& clip, const ModelConfig& config);

EvalReport evaluate(const DualBranchModel& model, const std::vector<Clip>& clips);

struct Disagreement {
  std::size_t n01 = 0;  // A wrong, B right
  std::size_t n10 = 0;  // A right, B wrong
};
Disagreement paired_disagreement(const std::vector<int>& labels, const std::vector<int>& a,
                                 const std::vector<int>& b);

struct McNemarResult {
  double p = 1.0;
  bool undefined = false;  // n01 = n10 = 0
};

// Two-sided exact test: p = min(1, 2 * P[X <= min(n01, n10)]), X ~ Bin(n, 1/2).
McNemarResult mcnemar_exact(std::size_t n01, std::size_t n10);

// ---------------------------------------------------------------------------

struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double train_acc = 0;  // percent, from the forward passes of the epoch
  double val_acc = 0;
  double f1_violent = 0;
  double f1_nonviolent = 0;
};

struct TrainOptions {
  Schedule schedule;
  AdamWConfig adamw;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochMetrics> trace;
  std::size_t best_epoch = 0;
  double best_val_acc = -1;
  bool diverged = false;
  std::size_t divergence_step = 0;
  std::string divergence_message;
};

// Epoch count is schedule.total_epochs rounded up. The best-validation
// parameters (ties broken by lower training loss) are restored before
// returning. Without a validation set, training accuracy selects.
TrainResult train_loop(DualBranchModel& model, const std::vector<Clip>& train,
                       const std::vector<Clip>& val, const TrainOptions& options);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& trace);
std::string metrics_csv(const std::vector<EpochMetrics>& trace);

}  // namespace dbm
