#include "ftip/cli.hpp"
#include "ftip/image_io.hpp"
#include "ftip/nn/serialize.hpp"

#include "CLI11.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace ftip::cli {

namespace fs = std::filesystem;
using cascade::FingerStrategy;
using cascade::HandStrategy;

namespace {

// Bad flags or config values; exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename F>
void as_usage(F&& check) {
  try {
    check();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

nn::TrainConfig train_config(const StageTraining& s, std::uint64_t seed) {
  nn::TrainConfig t;
  t.learning_rate = s.learning_rate;
  t.momentum = s.momentum;
  t.batch_size = s.batch_size;
  t.epochs = s.epochs;
  t.seed = seed;
  return t;
}

geometry::BBox focus_zone(const RunConfig& c) {
  if (c.focus_zone.size() != 4) throw UsageError("focus-zone needs 4 values");
  const geometry::BBox z{c.focus_zone[0], c.focus_zone[1], c.focus_zone[2], c.focus_zone[3]};
  if (!(z.x1 < z.x2 && z.y1 < z.y2)) throw UsageError("focus-zone must have positive area");
  return z;
}

void validate(const RunConfig& c) {
  as_usage([&] {
    scene_params(c).validate();
    for (const auto* s : {&c.hand, &c.finetune, &c.finger}) {
      train_config(*s, c.seed).validate();
      if (!(s->lr_decay > 0)) throw std::invalid_argument("lr-decay must be positive");
    }
    cascade::InputGeometry{c.train_size, c.crop_size, c.mfd_patch}.validate();
    if (c.margin < 0) throw std::invalid_argument("margin must be >= 0");
    if (!(c.affine_scale_min > 0 && c.affine_scale_min <= c.affine_scale_max))
      throw std::invalid_argument("affine scale range must satisfy 0 < min <= max");
    cascade::hand_strategy_from_string(c.hand_strategy);
    cascade::finger_strategy_from_string(c.finger_strategy);
    for (const auto* t : {&c.overlap_thresholds, &c.error_thresholds})
      if (t->empty() || !std::is_sorted(t->begin(), t->end()))
        throw std::invalid_argument("threshold grids must be non-empty and ascending");
    if (c.warmup < 0) throw std::invalid_argument("warmup must be >= 0");
  });
  focus_zone(c);
}

fs::path manifest_path(const RunConfig& c) { return c.data_dir / datagen::kManifestName; }

datagen::DatasetManifest load_manifest(const RunConfig& c) {
  const auto p = manifest_path(c);
  if (!fs::exists(p)) throw std::runtime_error("missing manifest: " + p.string());
  return datagen::read_manifest(p);
}

std::string fmt(double v, int digits = 9) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

// ------------------------------------------------------------- commands

int cmd_gen_data(const RunConfig& c, std::ostream& out) {
  const auto manifest = datagen::generate_dataset(scene_params(c), c.count, c.data_dir);
  const auto s = datagen::summarize(manifest);
  out << "manifest: " << manifest_path(c).string() << '\n'
      << "count: " << s.count << '\n'
      << "dark_fraction: " << fmt(s.dark_fraction, 4) << '\n'
      << "directions: left " << fmt(s.left_fraction, 4) << ", up "
      << fmt(s.up_fraction, 4) << ", right " << fmt(s.right_fraction, 4) << '\n';
  return kExitOk;
}

void write_loss_trace(const std::vector<double>& trace, const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "epoch,loss\n";
  for (std::size_t i = 0; i < trace.size(); ++i) f << i + 1 << ',' << fmt(trace[i]) << '\n';
  if (!f) throw std::runtime_error("cannot write " + path.string());
}

int cmd_train(const RunConfig& c, const std::string& stage, std::ostream& out) {
  const fs::path rough_path = c.models_dir / cascade::kRoughFile;
  if (stage == "finetune" && !fs::exists(rough_path))
    throw std::runtime_error("missing base hand weights: " + rough_path.string());

  const auto manifest = load_manifest(c);
  if (manifest.records.empty())
    throw std::runtime_error("empty manifest: " + manifest_path(c).string());
  const auto frames = datagen::load_frames(manifest);
  const geometry::Rgb mean = datagen::dataset_mean(manifest);
  const std::span<const datagen::LabeledFrame> view(frames);

  cascade::TrainResult result;
  fs::path target;
  if (stage == "hand") {
    auto s = train_settings(c, c.hand);
    s.fill_mean = mean;
    result = cascade::train_hand_detector(view, s);
    target = rough_path;
  } else if (stage == "finetune") {
    auto s = train_settings(c, c.finetune);
    s.fill_mean = mean;
    auto base = nn::load_weights(rough_path);
    result = cascade::finetune_hand_detector(view, {base.spec, base.weights}, s);
    target = c.models_dir / cascade::kAttentionFile;
  } else {
    const auto strategy = stage == "finger-mfd" ? FingerStrategy::MFD : FingerStrategy::SPD;
    auto s = train_settings(c, c.finger);
    s.fill_mean = mean;
    result = cascade::train_finger_detector(view, strategy, s);
    target = c.models_dir /
             (strategy == FingerStrategy::MFD ? cascade::kFingerMultiFile
                                               : cascade::kFingerSingleFile);
  }

  fs::create_directories(c.models_dir);
  fs::create_directories(c.out_dir);
  nn::save_weights(result.model.spec, result.model.weights, target);
  cascade::write_descriptor(
      {mean, {c.train_size, c.crop_size, c.mfd_patch}, c.margin,
       cascade::scaled_bias_max(frames.front().image.width())},
      c.models_dir / cascade::kDescriptorFile);
  const fs::path trace = c.out_dir / ("loss_" + stage + ".csv");
  write_loss_trace(result.loss_trace, trace);

  out << "stage: " << stage << '\n' << "weights: " << target.string() << '\n'
      << "loss_trace: " << trace.string() << '\n';
  if (!result.loss_trace.empty())
    out << "loss: first " << fmt(result.loss_trace.front(), 5) << ", last "
        << fmt(result.loss_trace.back(), 5) << '\n';
  return kExitOk;
}

int cmd_eval(const RunConfig& c, std::ostream& out) {
  const auto models = cascade::load_models(c.models_dir);
  const auto manifest = load_manifest(c);
  if (manifest.records.empty())
    throw std::runtime_error("empty manifest: " + manifest_path(c).string());

  eval::EvalOptions options;
  options.hand = {HandStrategy::RHD, HandStrategy::AHD, HandStrategy::AHD_REUSE,
                  HandStrategy::GT};
  const auto run = eval::evaluate(models, manifest, options);
  if (run.records.empty()) throw std::runtime_error("every frame failed evaluation");
  fs::create_directories(c.out_dir);

  for (auto h : {HandStrategy::RHD, HandStrategy::AHD, HandStrategy::AHD_REUSE})
    eval::write_curve_csv(
        eval::overlap_curve(eval::iou_values(run.records, h), c.overlap_thresholds),
        c.out_dir / (std::string("overlap_") + cascade::to_string(h) + ".csv"));
  for (auto h : {HandStrategy::RHD, HandStrategy::AHD, HandStrategy::GT})
    for (auto f : {FingerStrategy::MFD, FingerStrategy::SPD})
      eval::write_curve_csv(
          eval::error_curve(eval::error_values(run.records, {h, f}), c.error_thresholds),
          c.out_dir / (std::string("error_") + cascade::to_string(h) + "_" +
                       cascade::to_string(f) + ".csv"));
  const auto table = eval::cross_table(run);
  eval::write_cross_csv(table, c.out_dir / "cross_table.csv");
  const auto zones = eval::zone_metrics(run.records, focus_zone(c));
  eval::write_zone_csv(zones, c.out_dir / "zones.csv");

  nlohmann::ordered_json summary;
  summary["frames"] = run.records.size();
  summary["failures"] = run.failures.size();
  for (auto h : {HandStrategy::RHD, HandStrategy::AHD, HandStrategy::AHD_REUSE})
    summary["mean_iou"][cascade::to_string(h)] = eval::mean_iou(run.records, h);
  for (const auto& cell : table.cells)
    summary["mean_error_px"][std::string(cascade::to_string(cell.hand)) + "+" +
                             cascade::to_string(cell.finger)] = cell.mean_error_px;
  {
    std::ofstream f(c.out_dir / "summary.json", std::ios::binary);
    f << summary.dump(2) << '\n';
    if (!f) throw std::runtime_error("cannot write " + (c.out_dir / "summary.json").string());
  }

  out << "frames: " << run.records.size() << " (failures " << run.failures.size() << ")\n";
  for (auto h : {HandStrategy::RHD, HandStrategy::AHD, HandStrategy::AHD_REUSE})
    out << "mean IoU " << cascade::to_string(h) << ": "
        << fmt(eval::mean_iou(run.records, h), 4) << '\n';
  for (const auto& cell : table.cells)
    out << "mean error " << cascade::to_string(cell.hand) << "+"
        << cascade::to_string(cell.finger) << ": " << fmt(cell.mean_error_px, 4) << " px\n";
  out << "outputs: " << c.out_dir.string() << '\n';
  return kExitOk;
}

int cmd_bench(const RunConfig& c, std::ostream& out) {
  if (c.reps < eval::kMinRepetitions) throw UsageError("repetitions ≥ 30 required");
  const auto hand = cascade::hand_strategy_from_string(c.hand_strategy);
  if (hand == HandStrategy::GT) throw UsageError("bench needs a predicted hand strategy");
  const auto finger = cascade::finger_strategy_from_string(c.finger_strategy);
  const auto models = cascade::load_models(c.models_dir);
  const auto manifest = load_manifest(c);
  if (manifest.records.empty())
    throw std::runtime_error("empty manifest: " + manifest_path(c).string());
  std::vector<geometry::Image> images;
  for (const auto& r : manifest.records) {
    if (images.size() >= std::size_t(c.reps)) break;
    images.push_back(read_png(manifest.image_path(r)));
  }
  const auto report = eval::benchmark_latency(models, images, c.reps, c.warmup, hand, finger);
  fs::create_directories(c.out_dir);
  const fs::path path = c.out_dir / "timing.json";
  eval::write_timing_json(report, path);

  out << "stage        mean_ms    p95_ms\n";
  for (const auto& s : report.stages)
    out << std::left << std::setw(12) << s.name << ' ' << std::right << std::setw(8)
        << fmt(s.mean_ms, 4) << "  " << std::setw(8) << fmt(s.p95_ms, 4) << '\n';
  out << std::left << std::setw(12) << "total" << ' ' << std::right << std::setw(8)
      << fmt(report.total_mean_ms, 4) << "  " << std::setw(8) << fmt(report.total_p95_ms, 4)
      << '\n'
      << "n: " << report.n << " (warm-up " << report.warmup << ")\n"
      << "env: " << report.env << '\n'
      << "report: " << path.string() << '\n';
  return kExitOk;
}

void draw_box(geometry::Image& img, const geometry::BBox& b, const geometry::Rgb& color) {
  const int x1 = std::clamp(int(std::floor(b.x1)), 0, img.width() - 1);
  const int x2 = std::clamp(int(std::ceil(b.x2)) - 1, 0, img.width() - 1);
  const int y1 = std::clamp(int(std::floor(b.y1)), 0, img.height() - 1);
  const int y2 = std::clamp(int(std::ceil(b.y2)) - 1, 0, img.height() - 1);
  for (int x = x1; x <= x2; ++x) {
    img.set_pixel(x, y1, color);
    img.set_pixel(x, y2, color);
  }
  for (int y = y1; y <= y2; ++y) {
    img.set_pixel(x1, y, color);
    img.set_pixel(x2, y, color);
  }
}

void draw_dot(geometry::Image& img, const geometry::Point2& p, const geometry::Rgb& color) {
  for (int y = int(p.y) - 2; y <= int(p.y) + 2; ++y)
    for (int x = int(p.x) - 2; x <= int(p.x) + 2; ++x)
      if (x >= 0 && y >= 0 && x < img.width() && y < img.height() &&
          (x + 0.5 - p.x) * (x + 0.5 - p.x) + (y + 0.5 - p.y) * (y + 0.5 - p.y) <= 6.25)
        img.set_pixel(x, y, color);
}

int cmd_detect(const RunConfig& c, const fs::path& image_path, const fs::path& annotate,
               std::ostream& out) {
  const auto hand = cascade::hand_strategy_from_string(c.hand_strategy);
  if (hand == HandStrategy::GT) throw UsageError("detect needs a predicted hand strategy");
  const auto finger = cascade::finger_strategy_from_string(c.finger_strategy);
  if (!fs::exists(image_path))
    throw std::runtime_error("cannot read image: " + image_path.string());
  const auto img = read_png(image_path);
  const auto models = cascade::load_models(c.models_dir);
  const auto d = cascade::run_cascade(models, img, hand, finger);

  nlohmann::ordered_json j;
  j["hand_box"] = {d.hand_box.x1, d.hand_box.y1, d.hand_box.x2, d.hand_box.y2};
  j["fingertip"] = {d.fingertip.x, d.fingertip.y};
  if (d.joint) j["joint"] = {d.joint->x, d.joint->y};
  j["timings_ms"] = {{"hand", d.timings.hand_ms},
                     {"finger", d.timings.finger_ms},
                     {"processing", d.timings.processing_ms},
                     {"total", d.timings.total_ms()}};
  fs::create_directories(c.out_dir);
  const fs::path json_path = c.out_dir / "detection.json";
  {
    std::ofstream f(json_path, std::ios::binary);
    f << j.dump(2) << '\n';
    if (!f) throw std::runtime_error("cannot write " + json_path.string());
  }
  if (!annotate.empty()) {
    auto canvas = img;
    draw_box(canvas, d.hand_box, {1, 0, 0});
    if (d.joint) draw_dot(canvas, *d.joint, {0, 0.4f, 1});
    draw_dot(canvas, d.fingertip, {0, 1, 0});
    write_png(annotate, canvas);
  }
  out << j.dump() << '\n';
  return kExitOk;
}

void add_stage_options(CLI::App& app, const std::string& prefix, StageTraining& s) {
  app.add_option("--" + prefix + "-lr", s.learning_rate, "learning rate")->capture_default_str();
  app.add_option("--" + prefix + "-momentum", s.momentum, "SGD momentum")->capture_default_str();
  app.add_option("--" + prefix + "-batch", s.batch_size, "batch size")->capture_default_str();
  app.add_option("--" + prefix + "-epochs", s.epochs, "epochs")->capture_default_str();
  app.add_option("--" + prefix + "-lr-decay", s.lr_decay, "per-epoch learning-rate factor")
      ->capture_default_str();
}

}  // namespace

std::uint64_t data_seed(std::uint64_t seed) { return mix64(seed ^ hash_name("data")); }

datagen::SceneParams scene_params(const RunConfig& c) {
  datagen::SceneParams p;
  p.image_size = {c.width, c.height};
  if (c.placement == "gaussian") {
    p.placement = datagen::Placement::gaussian;
  } else if (c.placement == "uniform") {
    p.placement = datagen::Placement::uniform;
  } else {
    throw std::invalid_argument("placement must be gaussian or uniform");
  }
  p.sigma_x = c.sigma_x;
  p.sigma_y = c.sigma_y;
  p.dark_fraction = c.dark_fraction;
  p.left_weight = c.left_weight;
  p.seed = data_seed(c.seed);
  return p;
}

cascade::TrainSettings train_settings(const RunConfig& c, const StageTraining& stage) {
  cascade::TrainSettings s;
  s.train = train_config(stage, c.seed);
  s.lr_decay = stage.lr_decay;
  s.geometry = {c.train_size, c.crop_size, c.mfd_patch};
  s.arch = {c.channels, c.hidden};
  s.margin = c.margin;
  s.affine = {c.affine_scale_min, c.affine_scale_max, c.affine_rotation};
  return s;
}

std::vector<std::string> eval_output_files() {
  std::vector<std::string> files{"overlap_RHD.csv", "overlap_AHD.csv", "overlap_AHD-reuse.csv"};
  for (const char* h : {"RHD", "AHD", "GT"})
    for (const char* f : {"MFD", "SPD"})
      files.push_back(std::string("error_") + h + "_" + f + ".csv");
  for (const char* f : {"cross_table.csv", "zones.csv", "summary.json"}) files.push_back(f);
  return files;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig c;
  CLI::App app{"Cascaded hand and fingertip detection experiments", "ftip"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "config file (TOML or INI); flags override its values");
  app.allow_config_extras(CLI::config_extras_mode::error);

  app.add_option("--data", c.data_dir, "dataset directory")->capture_default_str();
  app.add_option("--models", c.models_dir, "model directory")->capture_default_str();
  app.add_option("--out", c.out_dir, "output directory")->capture_default_str();
  app.add_option("--seed", c.seed, "top-level seed")->capture_default_str();

  app.add_option("--count", c.count, "frames to generate")->capture_default_str();
  app.add_option("--width", c.width, "frame width")->capture_default_str();
  app.add_option("--height", c.height, "frame height")->capture_default_str();
  app.add_option("--placement", c.placement, "gaussian or uniform")->capture_default_str();
  app.add_option("--sigma-x", c.sigma_x, "placement sigma, negative for width/6")
      ->capture_default_str();
  app.add_option("--sigma-y", c.sigma_y, "placement sigma, negative for height/6")
      ->capture_default_str();
  app.add_option("--dark-fraction", c.dark_fraction)->capture_default_str();
  app.add_option("--left-weight", c.left_weight)->capture_default_str();

  app.add_option("--train-size", c.train_size, "hand training resize")->capture_default_str();
  app.add_option("--crop-size", c.crop_size, "hand net input")->capture_default_str();
  app.add_option("--mfd-patch", c.mfd_patch, "finger net input")->capture_default_str();
  app.add_option("--margin", c.margin, "finger crop inflation per side")->capture_default_str();
  app.add_option("--channels", c.channels, "conv channel ladder")->delimiter(',')
      ->capture_default_str();
  app.add_option("--hidden", c.hidden, "hidden fc widths")->delimiter(',')
      ->capture_default_str();
  add_stage_options(app, "hand", c.hand);
  add_stage_options(app, "finetune", c.finetune);
  add_stage_options(app, "finger", c.finger);
  app.add_option("--affine-scale-min", c.affine_scale_min)->capture_default_str();
  app.add_option("--affine-scale-max", c.affine_scale_max)->capture_default_str();
  app.add_option("--affine-rotation", c.affine_rotation, "degrees")->capture_default_str();

  app.add_option("--focus-zone", c.focus_zone, "x1,y1,x2,y2 as image fractions")
      ->delimiter(',')->capture_default_str();
  app.add_option("--overlap-thresholds", c.overlap_thresholds)->delimiter(',');
  app.add_option("--error-thresholds", c.error_thresholds)->delimiter(',');

  app.add_option("--hand", c.hand_strategy, "RHD, AHD or AHD-reuse")->capture_default_str();
  app.add_option("--finger", c.finger_strategy, "MFD or SPD")->capture_default_str();
  app.add_option("--reps", c.reps, "timed repetitions")->capture_default_str();
  app.add_option("--warmup", c.warmup, "untimed warm-up runs")->capture_default_str();

  auto* gen = app.add_subcommand("gen-data", "render a synthetic dataset");
  auto* train = app.add_subcommand("train", "train one network");
  std::string stage;
  train->add_option("--stage", stage, "hand, finetune, finger-mfd or finger-spd")
      ->required()
      ->check(CLI::IsMember({"hand", "finetune", "finger-mfd", "finger-spd"}));
  auto* ev = app.add_subcommand("eval", "curves, cross table and zone metrics");
  auto* bench = app.add_subcommand("bench", "per-stage latency report");
  auto* detect = app.add_subcommand("detect", "run the cascade on one image");
  fs::path image, annotate;
  detect->add_option("--image", image, "PNG to process")->required();
  detect->add_option("--annotate", annotate, "write an annotated PNG here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    validate(c);
    if (*gen) return cmd_gen_data(c, out);
    if (*train) return cmd_train(c, stage, out);
    if (*ev) return cmd_eval(c, out);
    if (*bench) return cmd_bench(c, out);
    if (*detect) return cmd_detect(c, image, annotate, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"ftip"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(int(argv.size()), argv.data(), out, err);
}

}  // namespace ftip::cli
