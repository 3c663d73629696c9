#include "dbm/train.hpp"

#include <algorithm>
#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

namespace dbm {

void Schedule::validate() const {
  if (!(total_epochs > 0)) throw ConfigError("schedule: total epochs must be positive");
  if (!(warmup_epochs >= 0 && warmup_epochs < total_epochs))
    throw ConfigError("schedule: need 0 <= warmup < total epochs");
  if (!(min_lr >= 0 && min_lr <= base_lr)) throw ConfigError("schedule: need 0 <= min_lr <= base_lr");
}

double lr_at(const Schedule& s, double epoch) {
  s.validate();
  if (!(epoch >= 0 && epoch <= s.total_epochs))
    throw std::out_of_range("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(s.total_epochs) + "]");
  if (epoch < s.warmup_epochs)
    return s.min_lr + (s.base_lr - s.min_lr) * epoch / s.warmup_epochs;
  const double span = s.total_epochs - s.warmup_epochs;
  const double progress = (epoch - s.warmup_epochs) / span;
  return s.min_lr + 0.5 * (s.base_lr - s.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

// ---------------------------------------------------------------------------

AdamW::AdamW(ParameterSet& params, AdamWConfig config) : params_(&params), cfg_(config) {
  for (const auto& p : params.items()) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void AdamW::step(double lr) {
  auto& items = params_->items();
  if (items.size() != m_.size()) throw std::logic_error("AdamW: parameter set changed size");
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto& p = items[i];
    if (!p.trainable) continue;
    auto theta = p.tensor.mutable_values();
    auto g = p.tensor.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    const double shrink = p.decay ? 1.0 - lr * cfg_.weight_decay : 1.0;
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double gj = g.empty() ? 0.0 : g[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      theta[j] = theta[j] * shrink - lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    p.tensor.round_to_precision();
  }
}

// ---------------------------------------------------------------------------

namespace {

double f1(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

}  // namespace

EvalReport evaluate_predictions(const std::vector<int>& labels, const std::vector<int>& preds) {
  if (labels.empty()) throw InputError("evaluate: empty dataset");
  if (labels.size() != preds.size()) throw InputError("evaluate: label/prediction count mismatch");
  EvalReport r;
  r.count = labels.size();
  r.predictions = preds;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if ((labels[i] != 0 && labels[i] != 1) || (preds[i] != 0 && preds[i] != 1))
      throw InputError("evaluate: labels must be 0 or 1");
    ++r.confusion[labels[i]][preds[i]];
    if (labels[i] == preds[i]) ++correct;
  }
  r.top1 = 100.0 * static_cast<double>(correct) / static_cast<double>(r.count);
  const auto& c = r.confusion;
  r.f1_violent = f1(c[0][0], c[1][0], c[0][1]);
  r.f1_nonviolent = f1(c[1][1], c[0][1], c[1][0]);
  return r;
}

Video prepare_input(const Clip& clip, const ModelConfig& config) {
  const std::size_t h = config.image_height, w = config.image_width;
  if (config.cropping) {
    BBox box = clip_crop(clip.video.width, clip.video.height, clip.detections);
    return apply_crop(clip.video, box, h, w);
  }
  if (clip.video.height != h || clip.video.width != w) return resize(clip.video, h, w);
  return clip.video;
}

EvalReport evaluate(const DualBranchModel& model, const std::vector<Clip>& clips) {
  std::vector<int> labels, preds;
  for (const auto& clip : clips) {
    labels.push_back(clip.label);
    preds.push_back(static_cast<int>(model.forward(prepare_input(clip, model.config())).label));
  }
  return evaluate_predictions(labels, preds);
}

Disagreement paired_disagreement(const std::vector<int>& labels, const std::vector<int>& a,
                                 const std::vector<int>& b) {
  if (labels.size() != a.size() || labels.size() != b.size())
    throw InputError("paired_disagreement: length mismatch");
  Disagreement d;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool ra = a[i] == labels[i], rb = b[i] == labels[i];
    if (!ra && rb) ++d.n01;
    if (ra && !rb) ++d.n10;
  }
  return d;
}

McNemarResult mcnemar_exact(std::size_t n01, std::size_t n10) {
  using boost::multiprecision::cpp_int;
  using boost::multiprecision::cpp_rational;
  if (n01 == 0 && n10 == 0) return {1.0, true};
  const std::size_t n = n01 + n10;
  const std::size_t m = std::min(n01, n10);
  cpp_int term = 1, tail = 0;
  for (std::size_t k = 0; k <= m; ++k) {
    if (k > 0) term = term * (n - k + 1) / k;
    tail += term;
  }
  cpp_rational p(2 * tail, cpp_int(1) << n);
  if (p > 1) p = 1;
  return {p.convert_to<double>(), false};
}

// ---------------------------------------------------------------------------

TrainResult train_loop(DualBranchModel& model, const std::vector<Clip>& train,
                       const std::vector<Clip>& val, const TrainOptions& opt) {
  opt.schedule.validate();
  if (train.empty()) throw InputError("train_loop: empty training set");
  if (opt.batch_size == 0) throw ConfigError("batch_size must be positive");

  const auto& cfg = model.config();
  std::vector<Video> inputs;
  inputs.reserve(train.size());
  for (const auto& c : train) inputs.push_back(prepare_input(c, cfg));

  auto& params = model.parameters();
  AdamW adamw(params, opt.adamw);
  std::mt19937_64 rng(opt.seed);
  const std::size_t epochs = static_cast<std::size_t>(std::ceil(opt.schedule.total_epochs));
  const std::size_t n = train.size();
  const std::size_t batches = (n + opt.batch_size - 1) / opt.batch_size;

  TrainResult result;
  auto best = params.snapshot();
  double best_loss = 0;
  std::vector<std::size_t> order(n);
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    EpochMetrics em;
    em.epoch = epoch + 1;
    em.lr = lr_at(opt.schedule, std::min<double>(epoch, opt.schedule.total_epochs));
    double loss_sum = 0;
    std::size_t correct = 0;
    try {
      for (std::size_t b = 0; b < batches; ++b) {
        const std::size_t lo = b * opt.batch_size, hi = std::min(n, lo + opt.batch_size);
        const double frac = static_cast<double>(epoch) + static_cast<double>(b) / batches;
        const double lr = lr_at(opt.schedule, std::min(frac, opt.schedule.total_epochs));
        model.zero_grad();
        for (std::size_t i = lo; i < hi; ++i) {
          const auto& clip = train[order[i]];
          auto pred = model.forward(inputs[order[i]]);
          Tensor loss = cross_entropy(pred.logits, static_cast<std::size_t>(clip.label));
          loss_sum += loss.item();
          if (static_cast<int>(pred.label) == clip.label) ++correct;
          backward(affine(loss, 1.0 / static_cast<double>(hi - lo)));
        }
        adamw.step(lr);
        ++step;
      }
    } catch (const NumericError& e) {
      result.diverged = true;
      result.divergence_step = step;
      result.divergence_message = e.what();
      break;
    }
    em.train_loss = loss_sum / static_cast<double>(n);
    em.train_acc = 100.0 * static_cast<double>(correct) / static_cast<double>(n);
    double score = em.train_acc;
    if (!val.empty()) {
      auto rep = evaluate(model, val);
      em.val_acc = rep.top1;
      em.f1_violent = rep.f1_violent;
      em.f1_nonviolent = rep.f1_nonviolent;
      score = rep.top1;
    }
    result.trace.push_back(em);
    if (opt.on_epoch) opt.on_epoch(em);
    // ties on validation accuracy go to the lower training loss
    if (score > result.best_val_acc ||
        (score == result.best_val_acc && em.train_loss < best_loss)) {
      best_loss = em.train_loss;
      result.best_val_acc = score;
      result.best_epoch = em.epoch;
      best = params.snapshot();
    }
  }
  params.restore(best);
  model.zero_grad();
  return result;
}

std::string metrics_csv(const std::vector<EpochMetrics>& trace) {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,lr,train_loss,train_acc,val_acc,f1_v,f1_nv\n";
  for (const auto& m : trace)
    os << m.epoch << ',' << m.lr << ',' << m.train_loss << ',' << m.train_acc << ','
       << m.val_acc << ',' << m.f1_violent << ',' << m.f1_nonviolent << '\n';
  return os.str();
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << metrics_csv(trace);
}

}  // namespace dbm
