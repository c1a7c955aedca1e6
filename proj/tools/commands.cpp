#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>

#include "json.hpp"
#include "options.hpp"
#include "rafa/checkpoint.hpp"
#include "rafa/error.hpp"
#include "rafa/gradcheck.hpp"

namespace rafa::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct TrainArgs {
  std::string config;
  fs::path data;
  fs::path val;
  fs::path out = "runs/rafa";
  bool quiet = false;
  ModelOptions model;
  TrainOptions train;
  AugmentOptions aug;
};

struct EvalArgs {
  std::string config;
  fs::path checkpoint;
  fs::path data;
  fs::path report;
  std::size_t topk = 5;
  ModelOptions model;
};

struct AugmentArgs {
  std::string config;
  fs::path data;
  fs::path out;
  std::size_t copies = 1;
  std::uint64_t seed = 0;
  int crop = 0;
  AugmentOptions aug;
};

struct GradcheckArgs {
  std::string config;
  std::uint64_t seed = 0;
  double eps = 1e-6;
  double tol = 1e-4;
  std::string variant = "full";
  std::size_t channels = 16;
  std::size_t classes = 4;
  std::size_t grid = 8;
  std::size_t upsample = 12;
  std::size_t region_size = 4;
  bool backbone = false;
  bool eval_mode = false;
  fs::path report;
};

struct SynthArgs {
  std::string config;
  fs::path out;
  SynthConfig cfg;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

bool has_manifest(const fs::path& dir) { return fs::exists(dir / kManifestName); }

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

int cmd_train(const TrainArgs& a) {
  const ModelConfig mcfg = a.model.to_config();
  const TrainConfig tcfg = a.train.to_config(a.aug, a.model.input_size);

  // A synth-style root (train/, val/) or a single dataset directory.
  fs::path train_dir = a.data;
  fs::path val_dir = a.val;
  if (!has_manifest(a.data) || has_manifest(a.data / "train")) {
    train_dir = a.data / "train";
    if (val_dir.empty() && has_manifest(a.data / "val")) val_dir = a.data / "val";
  }
  const Dataset train_set = load_dataset(train_dir, mcfg.backbone.kind);
  if (train_set.empty()) throw FormatError("training set " + train_dir.string() + " is empty");
  train_set.check_labels(mcfg.classes);
  Dataset val_set;
  if (!val_dir.empty()) {
    val_set = load_dataset(val_dir, mcfg.backbone.kind);
    val_set.check_labels(mcfg.classes);
  }
  const Dataset* val_ptr = val_set.empty() ? nullptr : &val_set;

  fs::create_directories(a.out);
  RafaModel model = RafaModel::create(mcfg, tcfg.seed);
  if (!a.quiet) {
    std::cout << "train: " << train_set.size() << " samples from " << train_dir.string();
    if (val_ptr) std::cout << ", val: " << val_set.size() << " from " << val_dir.string();
    std::cout << "\nvariant " << a.model.variant << ", " << model.parameters().size()
              << " parameter tensors, " << tcfg.epochs << " epochs\n";
  }
  const auto start = std::chrono::steady_clock::now();
  const TrainResult result = train(model, train_set, val_ptr, tcfg, [&](const EpochLog& e) {
    if (a.quiet) return;
    std::cout << "epoch " << e.epoch << "  lr " << e.lr << "  loss " << fixed(e.train_loss)
              << "  train_top1 " << fixed(e.train_top1);
    if (e.val_top1) std::cout << "  val_top1 " << fixed(*e.val_top1);
    std::cout << std::endl;
  });
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  write_training_log(a.out / "train_log.csv", result.log);
  save_tensors(a.out / "final.ckpt", model.parameters());
  save_tensors(a.out / "best.ckpt", result.best);
  write_text(a.out / "model.cfg", a.model.to_config_text());
  if (!a.quiet) {
    std::cout << "best epoch " << result.best_epoch << ", " << fixed(seconds, 1) << " s\n"
              << "wrote " << (a.out / "train_log.csv").string() << ", best.ckpt, final.ckpt, "
              << "model.cfg\n";
  }
  return kOk;
}

json metrics_json(const Metrics& m, std::size_t classes) {
  json j;
  j["count"] = m.count;
  j["classes"] = classes;
  j["topk"] = m.topk;
  j["top1"] = m.top1;
  j["top" + std::to_string(m.topk)] = m.topk_accuracy;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  j["cir"] = m.cir;
  j["confusion"] = m.confusion;
  return j;
}

void print_metrics(const Metrics& m) {
  const std::vector<std::pair<std::string, double>> rows = {
      {"top1", m.top1},
      {"top" + std::to_string(m.topk), m.topk_accuracy},
      {"precision", m.precision},
      {"recall", m.recall},
      {"f1", m.f1},
      {"cir", m.cir}};
  std::printf("%-10s %10s\n", "metric", "value");
  std::printf("%-10s %10zu\n", "count", m.count);
  for (const auto& [name, v] : rows) std::printf("%-10s %10.4f\n", name.c_str(), v);

  std::printf("\nconfusion (rows: true, columns: predicted)\n%6s", "");
  for (std::size_t k = 0; k < m.confusion.size(); ++k) std::printf(" %6zu", k);
  std::printf("\n");
  for (std::size_t t = 0; t < m.confusion.size(); ++t) {
    std::printf("%6zu", t);
    for (std::size_t n : m.confusion[t]) std::printf(" %6zu", n);
    std::printf("\n");
  }
}

int cmd_eval(const EvalArgs& a) {
  const ModelConfig mcfg = a.model.to_config();
  TrainConfig tcfg;
  tcfg.augmentation.crop_h = a.model.input_size;
  tcfg.augmentation.crop_w = a.model.input_size;

  RafaModel model = RafaModel::create(mcfg, 0);
  model.load(load_tensors(a.checkpoint));
  const Dataset data = load_dataset(a.data, mcfg.backbone.kind);
  if (data.empty()) throw FormatError("dataset " + a.data.string() + " is empty");
  data.check_labels(mcfg.classes);

  const Metrics m = evaluate(model, data, tcfg, a.topk);
  print_metrics(m);

  const fs::path report =
      a.report.empty() ? a.checkpoint.parent_path() / "eval_report.json" : a.report;
  json j = metrics_json(m, mcfg.classes);
  j["checkpoint"] = a.checkpoint.string();
  j["data"] = a.data.string();
  write_text(report, j.dump(2) + "\n");
  std::cout << "\nreport: " << report.string() << "\n";
  return kOk;
}

int cmd_augment(const AugmentArgs& a) {
  const auto entries = read_manifest(a.data);
  fs::create_directories(a.out);
  std::vector<ManifestEntry> written;
  std::vector<double> fractions;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Image img = read_ppm(a.data / entries[i].path);
    const int crop_h = a.crop > 0 ? a.crop : img.height;
    const int crop_w = a.crop > 0 ? a.crop : img.width;
    const EraseConfig cfg = a.aug.to_config(crop_h, crop_w);

    std::string stem = fs::path(entries[i].path).replace_extension().generic_string();
    std::replace(stem.begin(), stem.end(), '/', '_');
    for (std::size_t copy = 0; copy < a.copies; ++copy) {
      Rng rng(derive_seed(a.seed, copy, i));
      EraseRegion region;
      const Image out = augment_pipeline(img, cfg, rng, true, &region);
      const std::string name = stem + "_aug" + std::to_string(copy) + ".ppm";
      write_ppm(a.out / name, out);
      written.push_back({name, entries[i].label});
      fractions.push_back(region.area_fraction(img.height, img.width));
    }
  }
  write_manifest(a.out, written);

  json stats;
  stats["count"] = fractions.size();
  double sum = 0.0;
  for (double f : fractions) sum += f;
  stats["mean_erased_fraction"] = fractions.empty() ? 0.0 : sum / fractions.size();
  stats["min_erased_fraction"] =
      fractions.empty() ? 0.0 : *std::min_element(fractions.begin(), fractions.end());
  stats["max_erased_fraction"] =
      fractions.empty() ? 0.0 : *std::max_element(fractions.begin(), fractions.end());
  write_text(a.out / "augment_stats.json", stats.dump(2) + "\n");
  std::cout << "augmented " << fractions.size() << " images into " << a.out.string() << "\n"
            << stats.dump(2) << "\n";
  return kOk;
}

int cmd_gradcheck(const GradcheckArgs& a) {
  ModelConfig cfg;
  cfg.variant = parse_variant(a.variant);
  cfg.classes = a.classes;
  cfg.region_size = a.region_size;
  cfg.backbone.upsample_target = a.upsample;
  if (a.backbone) {
    // Two stride-2 stages keep the image small enough for per-element
    // finite differences.
    cfg.backbone.kind = BackboneKind::tiny_cnn;
    cfg.backbone.stages = {{8, 2}, {a.channels, 2}};
    cfg.backbone.input_h = cfg.backbone.input_w = static_cast<int>(a.grid * 4);
  } else {
    cfg.backbone.kind = BackboneKind::file_features;
    cfg.backbone.feature_channels = a.channels;
    cfg.backbone.input_h = cfg.backbone.input_w = static_cast<int>(a.grid);
  }
  cfg.validate();

  RafaModel model = RafaModel::create(cfg, a.seed);
  Rng data_rng(derive_seed(a.seed, 1, 0));
  Image image;
  FeatureGrid grid;
  if (a.backbone) {
    image = Image(cfg.backbone.input_h, cfg.backbone.input_w);
    for (auto& p : image.pixels) p = static_cast<std::uint8_t>(data_rng.index(256));
  } else {
    std::vector<double> v(a.grid * a.grid * a.channels);
    for (double& x : v) x = data_rng.uniform(-1.0, 1.0);
    grid = FeatureGrid(Tensor::from({a.grid, a.grid, a.channels}, std::move(v)));
  }
  const std::size_t label = data_rng.index(a.classes);
  const bool training = !a.eval_mode;

  auto loss_fn = [&]() {
    // Fresh generator per evaluation: identical dropout noise every call.
    Rng noise(derive_seed(a.seed, 2, 0));
    const ForwardResult r = a.backbone ? model.forward(image, training, &noise)
                                       : model.forward_grid(grid, training, &noise);
    return cross_entropy(r.prediction.probs, label);
  };

  std::vector<NamedTensor> params = model.parameters();
  GradCheckOptions opts;
  opts.eps = a.eps;
  opts.tolerance = a.tol;
  const auto start = std::chrono::steady_clock::now();
  const GradCheckReport report = gradient_check(loss_fn, params, opts);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::printf("%-28s %7s %12s %12s  %s\n", "tensor", "size", "max_rel", "max_abs", "status");
  std::map<std::string, double> groups;
  std::vector<std::string> group_order;
  json entries = json::array();
  for (const auto& e : report.entries) {
    std::printf("%-28s %7zu %12s %12s  %s\n", e.name.c_str(), e.size,
                sci(e.max_relative_error).c_str(), sci(e.max_absolute_error).c_str(),
                e.passed ? "ok" : "FAIL");
    const std::string group = e.name.substr(0, e.name.find('.'));
    if (!groups.count(group)) group_order.push_back(group);
    groups[group] = std::max(groups[group], e.max_relative_error);
    entries.push_back({{"name", e.name},
                       {"size", e.size},
                       {"max_relative_error", e.max_relative_error},
                       {"max_absolute_error", e.max_absolute_error},
                       {"worst_index", e.worst_index},
                       {"passed", e.passed}});
  }
  std::printf("\n%-12s %12s\n", "group", "max_rel");
  json group_json = json::object();
  for (const auto& g : group_order) {
    std::printf("%-12s %12s  %s\n", g.c_str(), sci(groups[g]).c_str(),
                groups[g] <= a.tol ? "ok" : "FAIL");
    group_json[g] = groups[g];
  }
  std::printf("\ntolerance %s, max relative error %s, %.2f s\n", sci(a.tol).c_str(),
              sci(report.max_relative_error()).c_str(), seconds);

  if (!a.report.empty()) {
    json j;
    j["seed"] = a.seed;
    j["eps"] = a.eps;
    j["tolerance"] = a.tol;
    j["passed"] = report.passed();
    j["max_relative_error"] = report.max_relative_error();
    j["groups"] = group_json;
    j["tensors"] = entries;
    write_text(a.report, j.dump(2) + "\n");
  }
  if (!report.passed()) {
    std::cerr << "gradcheck failed for:";
    for (const auto& name : report.failing()) std::cerr << ' ' << name;
    std::cerr << "\n";
    return kCheckFailed;
  }
  return kOk;
}

int cmd_synth(const SynthArgs& a) {
  generate_synthetic(a.out, a.cfg);
  const SplitSizes s = split_sizes(a.cfg);
  std::cout << "wrote " << a.cfg.classes * a.cfg.per_class << " images (" << a.cfg.classes
            << " classes; per class " << s.train << " train / " << s.val << " val / " << s.test
            << " test) to " << a.out.string() << "\n";
  return kOk;
}

CLI::App* add_command(CLI::App& app, const std::string& name, const std::string& help,
                      std::string& config) {
  CLI::App* sub = app.add_subcommand(name, help);
  sub->add_option("--config", config, "key=value file; command-line flags take precedence");
  return sub;
}

// Inserts the entries of `--config FILE` right after the subcommand name, so
// flags given on the command line (parsed later, last one wins) override them.
void expand_config(CLI::App& app, std::vector<std::string>& args) {
  auto sub_it = std::find_if(args.begin(), args.end(), [&](const std::string& s) {
    return !s.empty() && s[0] != '-' && app.get_subcommand_no_throw(s) != nullptr;
  });
  if (sub_it == args.end()) return;
  std::string path;
  for (auto it = sub_it + 1; it != args.end(); ++it) {
    if (*it == "--config" && it + 1 != args.end()) {
      path = *(it + 1);
    } else if (it->rfind("--config=", 0) == 0) {
      path = it->substr(9);
    }
  }
  if (path.empty()) return;
  const auto extra = config_file_args(path, *app.get_subcommand(*sub_it));
  args.insert(sub_it + 1, extra.begin(), extra.end());
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"rafa: region-attention image classifier (train, evaluate, augment, check)"};
  app.name("rafa");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default()->multi_option_policy(
      CLI::MultiOptionPolicy::TakeLast);

  TrainArgs train_args;
  CLI::App* train_cmd = add_command(app, "train", "Train a model on a manifest dataset",
                                    train_args.config);
  train_cmd->add_option("--data", train_args.data,
                        "Dataset directory, or a root holding train/ and val/")
      ->required();
  train_cmd->add_option("--val", train_args.val, "Validation dataset directory");
  train_cmd->add_option("--out", train_args.out, "Output directory");
  train_cmd->add_flag("--quiet", train_args.quiet, "Suppress per-epoch output");
  train_args.model.bind(*train_cmd);
  train_args.train.bind(*train_cmd);
  train_args.aug.bind(*train_cmd);

  EvalArgs eval_args;
  CLI::App* eval_cmd =
      add_command(app, "eval", "Evaluate a checkpoint on a dataset", eval_args.config);
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval_args.data, "Dataset directory")->required();
  eval_cmd->add_option("--topk", eval_args.topk, "k for top-k accuracy")
      ->check(CLI::PositiveNumber);
  eval_cmd->add_option("--report", eval_args.report,
                       "JSON report path (default: eval_report.json beside the checkpoint)");
  eval_args.model.bind(*eval_cmd);

  AugmentArgs aug_args;
  CLI::App* aug_cmd =
      add_command(app, "augment", "Write training-mode augmented copies", aug_args.config);
  aug_cmd->add_option("--data", aug_args.data, "Dataset directory")->required();
  aug_cmd->add_option("--out", aug_args.out, "Output directory")->required();
  aug_cmd->add_option("--copies", aug_args.copies, "Augmented copies per image");
  aug_cmd->add_option("--seed", aug_args.seed, "Random seed");
  aug_cmd->add_option("--crop", aug_args.crop, "Crop side (0 keeps the input size)")
      ->check(CLI::NonNegativeNumber);
  aug_args.aug.bind(*aug_cmd);

  GradcheckArgs gc_args;
  CLI::App* gc_cmd = add_command(
      app, "gradcheck", "Compare analytic and finite-difference gradients", gc_args.config);
  gc_cmd->add_option("--seed", gc_args.seed, "Seed for parameters and inputs");
  gc_cmd->add_option("--eps", gc_args.eps, "Central-difference step");
  gc_cmd->add_option("--tol", gc_args.tol, "Maximum relative error");
  gc_cmd->add_option("--variant", gc_args.variant, "Ablation variant")
      ->check(CLI::IsMember({"baseline", "roi_attention", "roi_ffn", "full"}));
  gc_cmd->add_option("--channels", gc_args.channels, "Feature channels c");
  gc_cmd->add_option("--classes", gc_args.classes, "Classes K");
  gc_cmd->add_option("--grid", gc_args.grid, "Side of the input feature grid");
  gc_cmd->add_option("--upsample", gc_args.upsample, "Side after upsampling");
  gc_cmd->add_option("--region-size", gc_args.region_size, "Region side delta");
  gc_cmd->add_flag("--backbone", gc_args.backbone,
                   "Include a tiny CNN backbone (input side 4 x grid)");
  gc_cmd->add_flag("--eval-mode", gc_args.eval_mode, "Disable dropout noise");
  gc_cmd->add_option("--report", gc_args.report, "Optional JSON report path");

  SynthArgs synth_args;
  CLI::App* synth_cmd =
      add_command(app, "synth", "Generate the synthetic texture dataset", synth_args.config);
  synth_cmd->add_option("--out", synth_args.out, "Output directory")->required();
  synth_cmd->add_option("--classes", synth_args.cfg.classes, "Number of classes")
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--per-class", synth_args.cfg.per_class, "Images per class")
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--val-fraction", synth_args.cfg.val_fraction, "Validation share");
  synth_cmd->add_option("--test-fraction", synth_args.cfg.test_fraction, "Test share");
  synth_cmd->add_option("--image-size", synth_args.cfg.image_size, "Image side in pixels")
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--noise", synth_args.cfg.noise_stddev, "Pixel noise std");
  synth_cmd->add_option("--seed", synth_args.cfg.seed, "Random seed");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    expand_config(app, args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "rafa: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_args);
    if (*eval_cmd) return cmd_eval(eval_args);
    if (*aug_cmd) return cmd_augment(aug_args);
    if (*gc_cmd) return cmd_gradcheck(gc_args);
    if (*synth_cmd) return cmd_synth(synth_args);
  } catch (const ConfigError& e) {
    std::cerr << "rafa: configuration error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "rafa: error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}

}  // namespace rafa::cli
