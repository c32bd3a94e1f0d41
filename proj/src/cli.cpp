#include "pidcount/cli.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "pidcount/baselines.hpp"
#include "pidcount/checkpoint.hpp"
#include "pidcount/config.hpp"
#include "pidcount/data.hpp"
#include "pidcount/errors.hpp"
#include "pidcount/metrics.hpp"
#include "pidcount/postproc.hpp"
#include "pidcount/report.hpp"
#include "pidcount/trainer.hpp"

namespace pidcount {

namespace fs = std::filesystem;

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("PIDCOUNT_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

namespace {

/// Runs fn(i) for i in [0, n) on up to `workers` threads; the first
/// exception is rethrown after all workers stop.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn fn) {
  workers = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_lock;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_lock);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

struct Invocation {
  std::string config_path;
  std::vector<Override> flags;
  std::vector<std::string> sets;

  RunConfig resolve() const {
    std::vector<Override> all = flags;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      all.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    return parse_config(config_path, all);
  }
};

/// Flag --name that overrides config key `key`.
void add_key_flag(CLI::App* app, Invocation& inv, const std::string& flag, const std::string& key,
                  const std::string& help) {
  app->add_option_function<std::string>(
      "--" + flag, [&inv, key](const std::string& v) { inv.flags.emplace_back(key, v); }, help);
}

void add_common(CLI::App* app, Invocation& inv) {
  app->add_option("--config", inv.config_path, "key = value config file");
  app->add_option("--set", inv.sets, "extra key=value overrides (repeatable)");
  add_key_flag(app, inv, "seed", "seed", "random seed");
  add_key_flag(app, inv, "threads", "threads", "worker threads for per-image work");
}

void require(const std::string& value, const std::string& what) {
  if (value.empty()) throw ConfigError("missing required setting '" + what + "'");
}

std::vector<Sample> load_logged(const fs::path& dir, std::ostream& err) {
  std::vector<std::string> warnings;
  auto samples = load_dataset(dir, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << "\n";
  return samples;
}

std::vector<Sample> resized(std::vector<Sample> samples, int size) {
  if (size <= 0) return samples;
  for (auto& s : samples) s = resize(s, size);
  return samples;
}

std::vector<Sample> augmented(const std::vector<Sample>& samples) {
  std::vector<Sample> out;
  out.reserve(samples.size() * 8);
  for (const auto& s : samples) {
    for (auto& v : augment8(s)) out.push_back(std::move(v));
  }
  return out;
}

long gt_count(const Sample& s) {
  return s.true_count >= 0 ? s.true_count : label_components_8(s.mask).count;
}

std::string method_name(Variant v) { return v == Variant::PID ? "pidnet" : std::string(variant_name(v)); }

// ---- subcommands ------------------------------------------------------------------

int cmd_synth(const RunConfig& c, std::ostream& out, bool flat) {
  require(c.out, "out");
  SynthParams p = c.synth;
  p.seed = c.seed;
  auto samples = synth_blobs(p);
  const fs::path root(c.out);
  if (flat) {
    save_dataset(root, samples);
  } else {
    const auto sizes = split_sizes(samples.size(), c.split);
    std::size_t next = 0;
    const char* names[3] = {"train", "val", "test"};
    for (int k = 0; k < 3; ++k) {
      std::vector<Sample> part(samples.begin() + next, samples.begin() + next + sizes[k]);
      next += sizes[k];
      save_dataset(root / names[k], part);
    }
  }
  write_resolved_config(root / "config.txt", c);
  out << "wrote " << samples.size() << " samples to " << root.string() << "\n";
  return kExitOk;
}

int cmd_augment(const RunConfig& c, std::ostream& out, std::ostream& err) {
  require(c.data, "data");
  require(c.out, "out");
  auto samples = resized(load_logged(c.data, err), c.size);
  const auto expanded = augmented(samples);
  save_dataset(c.out, expanded);
  write_resolved_config(fs::path(c.out) / "config.txt", c);
  out << "wrote " << expanded.size() << " samples to " << c.out << "\n";
  return kExitOk;
}

int cmd_train(const RunConfig& c, std::ostream& out, std::ostream& err) {
  require(c.data, "data");
  require(c.out, "out");
  const fs::path data(c.data), run(c.out);
  fs::create_directories(run);
  const AugmentPolicy policy = parse_augment_policy(c.augment_policy);
  std::vector<Sample> train_set, val_set;
  if (fs::is_directory(data / "train") && fs::is_directory(data / "val")) {
    train_set = resized(load_logged(data / "train", err), c.size);
    val_set = resized(load_logged(data / "val", err), c.size);
    if (policy != AugmentPolicy::None) {
      train_set = augmented(train_set);
      val_set = augmented(val_set);
    }
  } else {
    DatasetSplit parts = split(resized(load_logged(data, err), c.size), c.seed, policy, c.split);
    train_set = std::move(parts.train);
    val_set = std::move(parts.val);
    save_dataset(run / "test", parts.test);
    std::ofstream membership(run / "split.csv");
    membership << "id,split\n";
    for (const auto& s : train_set) membership << s.id << ",train\n";
    for (const auto& s : val_set) membership << s.id << ",val\n";
    for (const auto& s : parts.test) membership << s.id << ",test\n";
  }
  if (train_set.empty() || val_set.empty()) throw ValidationError("train: empty train or validation split");

  ModelConfig mc = c.model;
  mc.in_channels = train_set.front().image.channels;
  Model model = Model::build(mc, c.seed);
  HyperParams hp = c.hyper;
  hp.seed = c.seed;
  RunConfig resolved = c;
  resolved.model = mc;
  write_resolved_config(run / "config.txt", resolved);

  out << "training " << variant_name(mc.variant) << " (C=" << mc.base_width << ", " << model.parameter_count()
      << " parameters) on " << train_set.size() << " images, validating on " << val_set.size() << "\n";
  auto result = train(model, train_set, val_set, hp, [&](int e, const TrainingCurves& cv) {
    char line[160];
    std::snprintf(line, sizeof line, "epoch %3d  loss %.5f  iou %.4f  val_loss %.5f  val_iou %.4f\n", e + 1,
                  cv.train_loss[e], cv.train_iou[e], cv.val_loss[e], cv.val_iou[e]);
    out << line << std::flush;
  });
  save_checkpoint(run / "best.ckpt", result.best.to_checkpoint());
  save_checkpoint(run / "last.ckpt", model.to_checkpoint());
  write_curves_csv(run / "curves.csv", result.curves);
  out << "best epoch " << result.curves.best_epoch + 1 << " (val IoU " << result.curves.val_iou[result.curves.best_epoch]
      << "), checkpoint " << (run / "best.ckpt").string() << "\n";
  return kExitOk;
}

struct Prediction {
  Mask binary;
  CountResult counted;
};

Prediction predict(const Model& model, const Sample& s, const PostprocParams& post) {
  NoGradGuard no_grad;
  const Tensor probs = model.forward(images_tensor({&s}));
  return {binarize(probs, post.prob_threshold)[0], count_objects(probs, post)};
}

void write_metrics(const fs::path& dir, const MetricsReport& report, std::ostream& out) {
  fs::create_directories(dir);
  write_metrics_csv(dir / "metrics.csv", report.rows);
  write_metrics_json(dir / "metrics.json", report);
  out << metrics_json(report) << "\n";
  if (report.counting_excluded) {
    out << "warning: " << report.counting_excluded << " image(s) without ground-truth objects left out of counting_accuracy\n";
  }
}

int cmd_eval(const RunConfig& c, std::ostream& out, std::ostream& err) {
  require(c.ckpt, "ckpt");
  require(c.data, "data");
  require(c.out, "out");
  const Model model = Model::from_checkpoint(load_checkpoint(c.ckpt));
  const auto samples = resized(load_logged(c.data, err), c.size);
  if (samples.empty()) throw ValidationError("eval: no samples in " + c.data);
  std::vector<ImageMetrics> rows(samples.size());
  const std::string method = method_name(model.config().variant);
  parallel_for(samples.size(), resolve_threads(c.threads), [&](std::size_t i) {
    const Sample& s = samples[i];
    const auto post = c.postproc_for(s.image.height);
    const auto p = predict(model, s, post);
    rows[i] = evaluate_image(s.id, method, p.binary, s.mask, p.counted.count, gt_count(s));
  });
  write_resolved_config(fs::path(c.out) / "config.txt", c);
  write_metrics(c.out, aggregate(method, std::move(rows)), out);
  return kExitOk;
}

std::vector<Sample> load_images_only(const fs::path& dir, std::ostream& err) {
  if (fs::is_directory(dir / "images") && fs::is_directory(dir / "masks")) return load_logged(dir, err);
  const fs::path images = fs::is_directory(dir / "images") ? dir / "images" : dir;
  if (!fs::is_directory(images)) throw LoadError("missing directory " + images.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(images)) {
    if (!e.is_regular_file()) continue;
    if (!is_png_path(e.path())) {
      err << "warning: skipping non-image file " << e.path().string() << "\n";
      continue;
    }
    files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Sample> out;
  for (const auto& f : files) {
    Sample s;
    s.id = f.stem().string();
    s.image = read_png(f);
    s.mask = Mask(s.image.height, s.image.width);
    out.push_back(std::move(s));
  }
  return out;
}

int cmd_count(const RunConfig& c, std::ostream& out, std::ostream& err) {
  require(c.ckpt, "ckpt");
  require(c.data, "data");
  const Model model = Model::from_checkpoint(load_checkpoint(c.ckpt));
  const auto samples = resized(load_images_only(c.data, err), c.size);
  std::vector<Prediction> preds(samples.size());
  parallel_for(samples.size(), resolve_threads(c.threads), [&](std::size_t i) {
    preds[i] = predict(model, samples[i], c.postproc_for(samples[i].image.height));
  });
  std::ofstream csv;
  if (!c.out.empty()) {
    fs::create_directories(fs::path(c.out) / "labels");
    csv.open(fs::path(c.out) / "counts.csv");
    csv << "id,count\n";
    write_resolved_config(fs::path(c.out) / "config.txt", c);
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out << samples[i].id << " " << preds[i].counted.count << "\n";
    if (csv.is_open()) {
      csv << samples[i].id << "," << preds[i].counted.count << "\n";
      write_label_png(fs::path(c.out) / "labels" / (samples[i].id + ".png"), preds[i].counted.labels);
    }
  }
  return kExitOk;
}

int cmd_baseline(const RunConfig& c, std::ostream& out, std::ostream& err) {
  require(c.data, "data");
  require(c.out, "out");
  const BaselineMethod method = parse_baseline_method(c.method);
  const auto samples = resized(load_logged(c.data, err), c.size);
  if (samples.empty()) throw ValidationError("baseline: no samples in " + c.data);
  std::vector<ImageMetrics> rows(samples.size());
  parallel_for(samples.size(), resolve_threads(c.threads), [&](std::size_t i) {
    const Sample& s = samples[i];
    BaselineParams bp = c.baseline;
    bp.post = c.postproc_for(s.image.height);
    const auto r = run_baseline(method, s.image, bp);
    rows[i] = evaluate_image(s.id, baseline_method_name(method), r.mask, s.mask, r.count, gt_count(s));
  });
  write_resolved_config(fs::path(c.out) / "config.txt", c);
  write_metrics(c.out, aggregate(baseline_method_name(method), std::move(rows)), out);
  return kExitOk;
}

int cmd_report(const RunConfig& c, const std::string& run_dir, std::ostream& out, std::ostream& err) {
  const fs::path run(run_dir.empty() ? c.out : run_dir);
  require(run.string(), "run");
  const fs::path dest = c.out.empty() ? run / "report" : fs::path(c.out);
  fs::create_directories(dest);
  if (fs::exists(run / "curves.csv")) {
    write_curve_plots(dest, read_curves_csv(run / "curves.csv"));
    out << "wrote " << (dest / "loss.png").string() << " and " << (dest / "iou.png").string() << "\n";
  } else if (c.ckpt.empty()) {
    throw LoadError("no curves.csv in " + run.string());
  }
  if (!c.ckpt.empty()) {
    require(c.data, "data");
    const Model model = Model::from_checkpoint(load_checkpoint(c.ckpt));
    const auto samples = resized(load_logged(c.data, err), c.size);
    fs::create_directories(dest / "overlays");
    fs::create_directories(dest / "masks");
    for (const auto& s : samples) {
      const auto p = predict(model, s, c.postproc_for(s.image.height));
      write_png(dest / "overlays" / (s.id + ".png"), overlay(s.image, p.binary, s.mask));
      write_mask_png(dest / "masks" / (s.id + ".png"), p.binary);
    }
    out << "wrote " << samples.size() << " overlays to " << (dest / "overlays").string() << "\n";
  }
  write_resolved_config(dest / "config.txt", c);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dense tiny-object segmentation and counting", "pidcount"};
  app.require_subcommand(1);
  Invocation inv;

  auto* synth = app.add_subcommand("synth", "generate a synthetic blob dataset");
  add_common(synth, inv);
  add_key_flag(synth, inv, "n", "n", "number of images");
  add_key_flag(synth, inv, "size", "synth_size", "image side length");
  add_key_flag(synth, inv, "counts", "counts", "blob count range min:max");
  add_key_flag(synth, inv, "noise", "noise_sigma", "Gaussian noise sigma");
  add_key_flag(synth, inv, "split", "split", "train:val:test ratio");
  add_key_flag(synth, inv, "out", "out", "output directory");
  bool flat = false;
  synth->add_flag("--flat", flat, "write one directory instead of train/val/test");

  auto* augment = app.add_subcommand("augment", "write the eight rotations/mirrors of every sample");
  add_common(augment, inv);
  add_key_flag(augment, inv, "data", "data", "dataset directory");
  add_key_flag(augment, inv, "size", "size", "resize to this side length first");
  add_key_flag(augment, inv, "out", "out", "output directory");

  auto* trn = app.add_subcommand("train", "train a segmentation network");
  add_common(trn, inv);
  for (const auto& [flag, key] : std::vector<std::pair<std::string, std::string>>{
           {"data", "data"}, {"out", "out"}, {"variant", "variant"}, {"width", "width"}, {"epochs", "epochs"},
           {"batch", "batch_size"}, {"lr", "lr"}, {"size", "size"}, {"augment", "augment_policy"}, {"split", "split"}}) {
    add_key_flag(trn, inv, flag, key, key);
  }

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  add_common(eval, inv);
  for (const auto& [flag, key] : std::vector<std::pair<std::string, std::string>>{
           {"ckpt", "ckpt"}, {"data", "data"}, {"out", "out"}, {"size", "size"}, {"threshold", "prob_threshold"},
           {"min-area", "min_area"}}) {
    add_key_flag(eval, inv, flag, key, key);
  }

  auto* count = app.add_subcommand("count", "print per-image object counts");
  add_common(count, inv);
  for (const auto& [flag, key] : std::vector<std::pair<std::string, std::string>>{
           {"ckpt", "ckpt"}, {"data", "data"}, {"out", "out"}, {"size", "size"}, {"threshold", "prob_threshold"},
           {"min-area", "min_area"}}) {
    add_key_flag(count, inv, flag, key, key);
  }

  auto* baseline = app.add_subcommand("baseline", "evaluate a classical counting method");
  add_common(baseline, inv);
  for (const auto& [flag, key] : std::vector<std::pair<std::string, std::string>>{
           {"method", "method"}, {"data", "data"}, {"out", "out"}, {"size", "size"}, {"min-area", "min_area"}}) {
    add_key_flag(baseline, inv, flag, key, key);
  }

  auto* report = app.add_subcommand("report", "render curve plots and mask overlays");
  add_common(report, inv);
  std::string run_dir;
  report->add_option("--run", run_dir, "training run directory holding curves.csv");
  for (const auto& [flag, key] : std::vector<std::pair<std::string, std::string>>{
           {"ckpt", "ckpt"}, {"data", "data"}, {"out", "out"}, {"size", "size"}}) {
    add_key_flag(report, inv, flag, key, key);
  }

  std::vector<std::string> args(argv.rbegin(), argv.rend());
  if (!args.empty()) args.pop_back();  // program name
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    const RunConfig c = inv.resolve();
    if (synth->parsed()) return cmd_synth(c, out, flat);
    if (augment->parsed()) return cmd_augment(c, out, err);
    if (trn->parsed()) return cmd_train(c, out, err);
    if (eval->parsed()) return cmd_eval(c, out, err);
    if (count->parsed()) return cmd_count(c, out, err);
    if (baseline->parsed()) return cmd_baseline(c, out, err);
    if (report->parsed()) return cmd_report(c, run_dir, out, err);
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace pidcount
