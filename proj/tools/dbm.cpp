// dbm: command-line front end for training, evaluation, counting and the data pipeline.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dbm/checkpoint.hpp"
#include "dbm/config.hpp"
#include "dbm/cost.hpp"
#include "dbm/data.hpp"
#include "dbm/error.hpp"
#include "dbm/model.hpp"
#include "dbm/train.hpp"

namespace fs = std::filesystem;
using namespace dbm;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string precision;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, Common& c, bool seed = true) {
  cmd->add_option("-c,--config", c.config, "config file (key = value)");
  cmd->add_option("--set", c.overrides, "override a config key, key=value (repeatable)");
  cmd->add_option("--precision", c.precision, "f64 or f32")->check(CLI::IsMember({"f64", "f32"}));
  if (seed) cmd->add_option("--seed", c.seed, "random seed")->capture_default_str();
}

RunConfig resolve(const Common& c) {
  RunConfig rc = c.config.empty() ? RunConfig{} : load_config(c.config);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(rc, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!c.precision.empty()) rc.model.precision = parse_precision(c.precision);
  rc.model.validate();
  rc.schedule.validate();
  return rc;
}

std::vector<Clip> split_of(const std::vector<Clip>& clips, const std::string& split) {
  std::vector<Clip> out;
  for (const auto& c : clips)
    if (c.split == split) out.push_back(c);
  return out;
}

std::vector<Clip> load_clips(const std::string& corpus, bool synth, const RunConfig& rc) {
  if (synth) {
    auto all = synth_corpus(11, rc.synth_train, rc.synth_dims, "train", "train");
    auto val = synth_corpus(12, rc.synth_val, rc.synth_dims, "val", "val");
    auto test = synth_corpus(13, rc.synth_test, rc.synth_dims, "test", "test");
    all.insert(all.end(), val.begin(), val.end());
    all.insert(all.end(), test.begin(), test.end());
    return all;
  }
  if (corpus.empty()) throw InputError("no corpus given (use --corpus DIR or --synth)");
  return read_corpus(corpus);
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct RunOutcome {
  TrainResult result;
  EvalReport test;
  bool has_test = false;
};

RunOutcome run_training(const RunConfig& rc, const std::vector<Clip>& clips, std::uint64_t seed,
                        const fs::path& out, bool verbose) {
  auto train = split_of(clips, "train");
  auto val = split_of(clips, "val");
  auto test = split_of(clips, "test");
  if (train.empty()) throw InputError("corpus has no training clips");
  fs::create_directories(out);

  DualBranchModel model(rc.model, seed);
  TrainOptions opt;
  opt.schedule = rc.schedule;
  opt.adamw = rc.adamw;
  opt.batch_size = rc.batch_size;
  opt.seed = seed;
  if (verbose)
    opt.on_epoch = [](const EpochMetrics& m) {
      std::printf("epoch %zu lr %.3g loss %.4f train %s%% val %s%%\n", m.epoch, m.lr, m.train_loss,
                  pct(m.train_acc).c_str(), pct(m.val_acc).c_str());
      std::fflush(stdout);
    };
  RunOutcome r;
  r.result = train_loop(model, train, val, opt);
  write_metrics_csv(out / "metrics.csv", r.result.trace);
  save_checkpoint((out / "checkpoint.bin").string(), model.parameters());
  std::ofstream(out / "config.cfg") << format_config(rc);
  if (!test.empty()) {
    r.test = evaluate(model, test);
    r.has_test = true;
    std::vector<std::pair<std::string, int>> preds;
    for (std::size_t i = 0; i < test.size(); ++i) preds.emplace_back(test[i].id, r.test.predictions[i]);
    write_predictions(out / "predictions.csv", preds);
  }
  return r;
}

// ---------------------------------------------------------------------------

int cmd_train(const Common& c, const std::string& corpus, bool synth, const std::string& out) {
  auto rc = resolve(c);
  auto clips = load_clips(corpus, synth, rc);
  auto r = run_training(rc, clips, c.seed, out, true);
  if (r.result.diverged) {
    std::cerr << "training diverged at step " << r.result.divergence_step << ": "
              << r.result.divergence_message << "\n";
    return 2;
  }
  std::printf("best epoch %zu, val %s%%\n", r.result.best_epoch, pct(r.result.best_val_acc).c_str());
  if (r.has_test)
    std::printf("test top-1 %s%%, F1 violent %.4f, F1 non-violent %.4f\n", pct(r.test.top1).c_str(),
                r.test.f1_violent, r.test.f1_nonviolent);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& corpus, bool synth,
             const std::string& split, const std::string& out) {
  auto rc = resolve(c);
  DualBranchModel model(rc.model, 0);
  load_checkpoint(checkpoint, model.parameters());
  auto clips = split_of(load_clips(corpus, synth, rc), split);
  if (clips.empty()) throw InputError("no clips in split '" + split + "'");
  auto rep = evaluate(model, clips);
  std::printf("clips %zu\ntop1 %s%%\nf1_violent %.4f\nf1_nonviolent %.4f\n", rep.count,
              pct(rep.top1).c_str(), rep.f1_violent, rep.f1_nonviolent);
  std::printf("confusion (rows true, cols predicted): [[%zu, %zu], [%zu, %zu]]\n", rep.confusion[0][0],
              rep.confusion[0][1], rep.confusion[1][0], rep.confusion[1][1]);
  if (!out.empty()) {
    std::vector<std::pair<std::string, int>> preds;
    for (std::size_t i = 0; i < clips.size(); ++i) preds.emplace_back(clips[i].id, rep.predictions[i]);
    write_predictions(out, preds);
  }
  return 0;
}

int cmd_count(const Common& c, bool breakdown) {
  auto rc = resolve(c);
  auto p = param_report(rc.model);
  auto f = count_flops(rc.model);
  std::printf("params %llu\nmacs %.6g\nflops %.6g\n", static_cast<unsigned long long>(p.total), f.macs,
              f.flops);
  if (breakdown) {
    for (const auto& [n, v] : p.breakdown)
      std::printf("  params.%s %llu\n", n.c_str(), static_cast<unsigned long long>(v));
    for (const auto& [n, v] : f.breakdown) std::printf("  macs.%s %.6g\n", n.c_str(), v);
  }
  if (auto ref = reference_figures(rc.model)) {
    std::printf("reference %s: params %.1fM (%+.2f%%), compute %.1fG vs %.1fG MAC (%+.2f%%)\n",
                ref->name.c_str(), ref->params / 1e6, 100.0 * (p.total - ref->params) / ref->params,
                ref->compute / 1e9, f.macs / 1e9, 100.0 * (f.macs - ref->compute) / ref->compute);
  }
  return 0;
}

int cmd_mcnemar(const std::string& a, const std::string& b, const std::string& labels_path) {
  auto labels = read_labels(labels_path);
  auto pa = read_predictions(a), pb = read_predictions(b);
  std::vector<int> l, va, vb;
  for (const auto& [id, y] : labels) {
    auto ia = pa.find(id), ib = pb.find(id);
    if (ia == pa.end() || ib == pb.end()) throw InputError("id '" + id + "' missing from a prediction file");
    l.push_back(y);
    va.push_back(ia->second);
    vb.push_back(ib->second);
  }
  if (pa.size() != labels.size() || pb.size() != labels.size())
    throw InputError("prediction files hold ids that are not in the label file");
  auto d = paired_disagreement(l, va, vb);
  auto r = mcnemar_exact(d.n01, d.n10);
  std::printf("n01 %zu\nn10 %zu\np %.3g%s\n", d.n01, d.n10, r.p, r.undefined ? " (no disagreements)" : "");
  return 0;
}

int cmd_synth(const Common& c, const std::string& out) {
  auto rc = resolve(c);
  const std::uint64_t s = c.seed;
  auto all = synth_corpus(s, rc.synth_train, rc.synth_dims, "train", "train");
  auto val = synth_corpus(s + 1, rc.synth_val, rc.synth_dims, "val", "val");
  auto test = synth_corpus(s + 2, rc.synth_test, rc.synth_dims, "test", "test");
  all.insert(all.end(), val.begin(), val.end());
  all.insert(all.end(), test.begin(), test.end());
  write_corpus(out, all);
  std::printf("wrote %zu clips to %s\n", all.size(), out.c_str());
  return 0;
}

std::vector<std::string> axis_values(const std::string& axis) {
  std::vector<std::string> v;
  if (axis == "fusion")
    for (auto x : kAllFusionVariants) v.push_back(to_string(x));
  else if (axis == "lateral_placement")
    for (auto x : kAllPlacements) v.push_back(to_string(x));
  else if (axis == "final_fusion")
    for (auto x : kAllFinalFusions) v.push_back(to_string(x));
  else if (axis == "skips")
    v = {"true", "false"};
  return v;
}

int cmd_sweep(const Common& c, const std::string& axis, std::vector<std::string> values,
              const std::string& corpus, bool synth, const std::string& out) {
  auto base = resolve(c);
  if (values.empty()) values = axis_values(axis);
  if (values.empty()) throw ConfigError("sweep over '" + axis + "' needs --values");
  auto clips = load_clips(corpus, synth, base);
  fs::create_directories(out);
  std::ofstream rows(fs::path(out) / "results.csv");
  rows << "axis,value,params,gmacs,best_epoch,val_acc,test_acc,f1_violent,f1_nonviolent,status\n";
  int code = 0;
  for (const auto& v : values) {
    RunConfig rc = base;
    set_config_value(rc, axis, v);
    rc.model.validate();
    std::printf("%s = %s\n", axis.c_str(), v.c_str());
    std::fflush(stdout);
    auto r = run_training(rc, clips, c.seed, fs::path(out) / (axis + "-" + v), false);
    rows << axis << ',' << v << ',' << count_params(rc.model) << ',' << count_flops(rc.model).macs / 1e9
         << ',' << r.result.best_epoch << ',' << r.result.best_val_acc << ',' << r.test.top1 << ','
         << r.test.f1_violent << ',' << r.test.f1_nonviolent << ','
         << (r.result.diverged ? "diverged" : "ok") << '\n';
    if (r.result.diverged) code = 2;
  }
  std::printf("wrote %s\n", (fs::path(out) / "results.csv").c_str());
  return code;
}

int cmd_manifest(const std::string& labels, const std::string& source, std::size_t width,
                 std::size_t height, const std::string& out) {
  auto s = read_label_stream(labels);
  auto m = build_manifest(s.labels, s.fps, source.empty() ? fs::path(labels).stem().string() : source,
                          width, height);
  write_manifest(out, m);
  std::printf("%zu clips\n", m.size());
  return 0;
}

int cmd_features(const std::string& corpus, const std::string& dataset, const std::string& out) {
  std::vector<FeatureVector> f;
  for (const auto& c : read_corpus(corpus))
    if (c.split == "train" || c.split == "test") f.push_back({c.id, c.split, dataset, clip_features(c.video)});
  write_features(out, f);
  std::printf("%zu feature vectors\n", f.size());
  return 0;
}

int cmd_leak_scan(const std::string& features, double threshold, const std::string& out) {
  std::vector<FeatureVector> train, test;
  for (auto& f : read_features(features)) (f.split == "train" ? train : test).push_back(std::move(f));
  auto flags = leakage_scan(train, test, threshold);
  write_leak_flags(out, flags);
  for (const auto& f : flags) std::printf("%s,%s,%.6f\n", f.train_id.c_str(), f.test_id.c_str(), f.similarity);
  std::printf("%zu flagged pairs (for review; nothing removed)\n", flags.size());
  return 0;
}

int cmd_stats(const std::string& counts, const std::string& removals, const std::string& out) {
  std::vector<std::pair<std::string, std::vector<ClipRecord>>> ds;
  for (const auto& [name, sc] : read_split_counts(counts)) ds.emplace_back(name, expand_counts(name, sc));
  auto t = combined_stats(ds, removals.empty() ? std::vector<std::string>{} : read_id_list(removals));
  std::printf("%-12s %8s %8s %8s %8s\n", "dataset", "train_v", "train_nv", "test_v", "test_nv");
  auto row = [](const std::string& n, const SplitCounts& s) {
    std::printf("%-12s %8zu %8zu %8zu %8zu\n", n.c_str(), s.train_violent, s.train_nonviolent, s.test_violent,
                s.test_nonviolent);
  };
  for (const auto& [n, s] : t.rows) row(n, s);
  row("total", t.total);
  if (!out.empty()) write_stats(out, t);
  return 0;
}

int cmd_cam(const Common& c, const std::string& checkpoint, const std::string& corpus, const std::string& clip_id,
            std::size_t layer, int target, const std::string& out) {
  auto rc = resolve(c);
  DualBranchModel model(rc.model, 0);
  load_checkpoint(checkpoint, model.parameters());
  const Clip* clip = nullptr;
  auto clips = read_corpus(corpus);
  for (const auto& cl : clips)
    if (cl.id == clip_id) clip = &cl;
  if (!clip) throw InputError("no clip '" + clip_id + "' in " + corpus);
  auto input = prepare_input(*clip, rc.model);
  const std::size_t cls = target < 0 ? model.forward(input).label : static_cast<std::size_t>(target);
  auto r = grad_cam(model, input, cls, layer);
  fs::create_directories(out);
  const std::size_t hw = r.grid.spatial();
  for (std::size_t t = 0; t < r.grid.t; ++t) {
    std::vector<double> slice(r.heatmap.begin() + t * hw, r.heatmap.begin() + (t + 1) * hw);
    char name[32];
    std::snprintf(name, sizeof name, "cam_%04zu.pgm", t);
    write_pgm(fs::path(out) / name, slice, r.grid.h, r.grid.w);
  }
  std::printf("class %zu, layer %zu, %zu maps of %zux%zu%s\n", cls, layer, r.grid.t, r.grid.h, r.grid.w,
              r.zero_gradient ? " (zero gradient: all-zero maps)" : "");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-branch video state-space classifier"};
  app.require_subcommand(1);
  Common common;
  std::string corpus, out, checkpoint, split = "test", axis, labels, a, b, features, counts, removals, source,
                                       clip, dataset = "synth";
  std::vector<std::string> values;
  bool synth = false, breakdown = false;
  double threshold = 0.75;
  std::size_t layer = 0, width = 0, height = 0;
  int target = -1;

  auto* train = app.add_subcommand("train", "train a model and write checkpoint, metrics and predictions");
  add_common(train, common);
  train->add_option("--corpus", corpus, "corpus directory");
  train->add_flag("--synth", synth, "use the synthetic corpus described by the config");
  train->add_option("-o,--out", out, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on one split");
  add_common(eval, common, false);
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--corpus", corpus, "corpus directory");
  eval->add_flag("--synth", synth, "use the synthetic corpus described by the config");
  eval->add_option("--split", split, "split to evaluate")->capture_default_str();
  eval->add_option("-o,--out", out, "predictions CSV");

  auto* count = app.add_subcommand("count", "parameter and compute count");
  add_common(count, common, false);
  count->add_flag("--breakdown", breakdown, "per-module figures");

  auto* mcn = app.add_subcommand("mcnemar", "exact McNemar test between two prediction files");
  mcn->add_option("--a", a, "predictions of model A (id,prediction)")->required();
  mcn->add_option("--b", b, "predictions of model B (id,prediction)")->required();
  mcn->add_option("--labels", labels, "ground truth (id,label)")->required();

  auto* syn = app.add_subcommand("synth", "write a synthetic corpus");
  add_common(syn, common);
  syn->add_option("-o,--out", out, "corpus directory")->required();

  auto* sweep = app.add_subcommand("sweep", "train one model per value of a config axis");
  add_common(sweep, common);
  sweep->add_option("--axis", axis, "config key to vary")->required();
  sweep->add_option("--values", values, "values (default: every value of an enumerated axis)")->delimiter(',');
  sweep->add_option("--corpus", corpus, "corpus directory");
  sweep->add_flag("--synth", synth, "use the synthetic corpus described by the config");
  sweep->add_option("-o,--out", out, "output directory")->required();

  auto* pipe = app.add_subcommand("pipeline", "data pipeline tools");
  pipe->require_subcommand(1);
  auto* man = pipe->add_subcommand("manifest", "clip manifest from a per-frame label stream");
  man->add_option("--labels", labels, "label stream (fps=<r> then one label per line)")->required();
  man->add_option("--source", source, "source video name (default: file stem)");
  man->add_option("--width", width, "frame width");
  man->add_option("--height", height, "frame height");
  man->add_option("-o,--out", out, "manifest CSV")->required();
  auto* feat = pipe->add_subcommand("features", "clip feature vectors for the train and test splits of a corpus");
  feat->add_option("--corpus", corpus, "corpus directory")->required();
  feat->add_option("--dataset", dataset, "dataset name")->capture_default_str();
  feat->add_option("-o,--out", out, "features CSV")->required();
  auto* leak = pipe->add_subcommand("leak-scan", "flag near-duplicate train/test pairs");
  leak->add_option("--features", features, "features CSV")->required();
  leak->add_option("--threshold", threshold, "cosine similarity threshold")->capture_default_str();
  leak->add_option("-o,--out", out, "flagged pairs CSV")->required();
  auto* stats = pipe->add_subcommand("stats", "combined split table");
  stats->add_option("--counts", counts, "per-dataset counts CSV")->required();
  stats->add_option("--remove", removals, "ids to remove, one per line");
  stats->add_option("-o,--out", out, "stats CSV");
  auto* cam = pipe->add_subcommand("cam", "class activation maps for one clip");
  add_common(cam, common, false);
  cam->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  cam->add_option("--corpus", corpus, "corpus directory")->required();
  cam->add_option("--clip", clip, "clip id")->required();
  cam->add_option("--layer", layer, "block index")->capture_default_str();
  cam->add_option("--target", target, "class (default: predicted)");
  cam->add_option("-o,--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*train) return cmd_train(common, corpus, synth, out);
    if (*eval) return cmd_eval(common, checkpoint, corpus, synth, split, out);
    if (*count) return cmd_count(common, breakdown);
    if (*mcn) return cmd_mcnemar(a, b, labels);
    if (*syn) return cmd_synth(common, out);
    if (*sweep) return cmd_sweep(common, axis, values, corpus, synth, out);
    if (*man) return cmd_manifest(labels, source, width, height, out);
    if (*feat) return cmd_features(corpus, dataset, out);
    if (*leak) return cmd_leak_scan(features, threshold, out);
    if (*stats) return cmd_stats(counts, removals, out);
    if (*cam) return cmd_cam(common, checkpoint, corpus, clip, layer, target, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 2;
  } catch (const InputError& e) {
    std::cerr << "bad input: " << e.what() << "\n";
    return 3;
  } catch (const ShapeError& e) {
    std::cerr << "bad input: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
