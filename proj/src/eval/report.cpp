#include "ftip/eval.hpp"
#include "ftip/image_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace ftip::eval {

namespace fs = std::filesystem;

namespace {

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / double(v.size());
}

// Nearest-rank 95th percentile.
double p95(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * double(v.size())));
  return v[std::max<std::size_t>(rank, 1) - 1];
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return in;
}

void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(item);
  if (!line.empty() && line.back() == sep) parts.emplace_back();
  return parts;
}

double parse_double(const std::string& s, const fs::path& path, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(path.string() + ":" + std::to_string(line) +
                             ": bad number '" + s + "'");
  }
}

std::string first_line_of(const fs::path& file, const std::string& key) {
  std::ifstream in(file);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(key, 0) == 0) {
      const auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      auto v = line.substr(colon + 1);
      v.erase(0, v.find_first_not_of(" \t"));
      return v;
    }
  return "unknown";
}

}  // namespace

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string environment_note() {
  std::ostringstream os;
  os << "cpu: " << first_line_of("/proc/cpuinfo", "model name")
     << "; hardware threads: " << std::thread::hardware_concurrency()
     << "; benchmark threads: 1; compiler: "
#if defined(__clang__)
     << "clang " << __clang_major__ << "." << __clang_minor__
#elif defined(__GNUC__)
     << "gcc " << __GNUC__ << "." << __GNUC_MINOR__
#else
     << "unknown"
#endif
     << "; eigen " << EIGEN_WORLD_VERSION << "." << EIGEN_MAJOR_VERSION << "."
     << EIGEN_MINOR_VERSION << "; simd: " << Eigen::SimdInstructionSetsInUse();
  return os.str();
}

TimingReport benchmark_latency(const cascade::TrainedModels& models,
                               std::span<const geometry::Image> images,
                               int repetitions, int warmup, HandStrategy hand,
                               FingerStrategy finger) {
  if (repetitions < kMinRepetitions)
    throw std::invalid_argument("repetitions ≥ 30 required");
  if (images.empty()) throw std::invalid_argument("no images to benchmark");
  if (hand == HandStrategy::GT)
    throw std::invalid_argument("benchmark needs a predicted hand strategy");
  if (warmup < 0) throw std::invalid_argument("warm-up count must be >= 0");

  using Clock = std::chrono::steady_clock;
  for (int i = 0; i < warmup; ++i)
    cascade::run_cascade(models, images[std::size_t(i) % images.size()], hand, finger);

  std::vector<double> hand_ms, finger_ms, proc_ms, total_ms;
  for (int i = 0; i < repetitions; ++i) {
    const auto& img = images[std::size_t(i) % images.size()];
    const auto t0 = Clock::now();
    const auto d = cascade::run_cascade(models, img, hand, finger);
    total_ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
    hand_ms.push_back(d.timings.hand_ms);
    finger_ms.push_back(d.timings.finger_ms);
    proc_ms.push_back(d.timings.processing_ms);
  }

  TimingReport r;
  r.stages = {{"hand", mean(hand_ms), p95(hand_ms)},
              {"finger", mean(finger_ms), p95(finger_ms)},
              {"processing", mean(proc_ms), p95(proc_ms)}};
  r.total_mean_ms = mean(total_ms);
  r.total_p95_ms = p95(total_ms);
  double var = 0;
  for (double t : total_ms) var += (t - r.total_mean_ms) * (t - r.total_mean_ms);
  var /= double(total_ms.size() - 1);
  r.total_stderr_ms = std::sqrt(var / double(total_ms.size()));
  r.n = std::size_t(repetitions);
  r.warmup = std::size_t(warmup);
  r.env = environment_note();
  return r;
}

TimingReport benchmark_latency(const cascade::TrainedModels& models,
                               const datagen::DatasetManifest& manifest,
                               int repetitions, int warmup) {
  if (repetitions < kMinRepetitions)
    throw std::invalid_argument("repetitions ≥ 30 required");
  std::vector<geometry::Image> images;
  for (const auto& rec : manifest.records) {
    images.push_back(read_png(manifest.image_path(rec)));
    if (images.size() >= std::size_t(repetitions)) break;
  }
  return benchmark_latency(models, images, repetitions, warmup);
}

void write_curve_csv(const EvalCurve& curve, const fs::path& path) {
  if (curve.thresholds.empty() || curve.thresholds.size() != curve.detection_rates.size())
    throw std::invalid_argument("refusing to write an empty or ragged curve");
  auto out = open_out(path);
  out << "threshold,detection_rate\n";
  for (std::size_t i = 0; i < curve.thresholds.size(); ++i)
    out << format_value(curve.thresholds[i]) << ','
        << format_value(curve.detection_rates[i]) << '\n';
  finish(out, path);
}

EvalCurve read_curve_csv(const fs::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || line != "threshold,detection_rate")
    throw std::runtime_error(path.string() + ": bad curve header");
  EvalCurve c;
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    const auto f = split(line, ',');
    if (f.size() != 2) throw std::runtime_error(path.string() + ":" + std::to_string(n) +
                                                ": expected 2 fields");
    c.thresholds.push_back(parse_double(f[0], path, n));
    c.detection_rates.push_back(parse_double(f[1], path, n));
  }
  return c;
}

void write_cross_csv(const CrossTable& table, const fs::path& path) {
  if (table.cells.empty()) throw std::invalid_argument("refusing to write an empty table");
  auto out = open_out(path);
  out << "hand_strategy,finger_strategy,mean_error_px,frames\n";
  for (const auto& c : table.cells)
    out << cascade::to_string(c.hand) << ',' << cascade::to_string(c.finger) << ','
        << format_value(c.mean_error_px) << ',' << c.frames << '\n';
  finish(out, path);
}

CrossTable read_cross_csv(const fs::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || line != "hand_strategy,finger_strategy,mean_error_px,frames")
    throw std::runtime_error(path.string() + ": bad cross-table header");
  CrossTable t;
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    const auto f = split(line, ',');
    if (f.size() != 4) throw std::runtime_error(path.string() + ":" + std::to_string(n) +
                                                ": expected 4 fields");
    t.cells.push_back({cascade::hand_strategy_from_string(f[0]),
                       cascade::finger_strategy_from_string(f[1]),
                       parse_double(f[2], path, n),
                       std::size_t(parse_double(f[3], path, n))});
  }
  return t;
}

void write_zone_csv(const std::map<HandStrategy, ZoneStats>& zones, const fs::path& path) {
  if (zones.empty()) throw std::invalid_argument("refusing to write empty zone metrics");
  auto out = open_out(path);
  out << "hand_strategy,zone,mean_iou,frames\n";
  auto row = [&](HandStrategy h, const char* zone, const std::optional<double>& v,
                 std::size_t n) {
    out << cascade::to_string(h) << ',' << zone << ','
        << (v ? format_value(*v) : std::string("absent")) << ',' << n << '\n';
  };
  for (const auto& [h, s] : zones) {
    row(h, "focus", s.focus_mean_iou, s.focus_frames);
    row(h, "surrounding", s.surround_mean_iou, s.surround_frames);
  }
  finish(out, path);
}

void write_timing_json(const TimingReport& r, const fs::path& path) {
  nlohmann::ordered_json j;
  for (const auto& s : r.stages) j[s.name] = {{"mean_ms", s.mean_ms}, {"p95_ms", s.p95_ms}};
  j["total_ms"] = {{"mean_ms", r.total_mean_ms}, {"p95_ms", r.total_p95_ms},
                   {"stderr_ms", r.total_stderr_ms}};
  j["n"] = r.n;
  j["warmup"] = r.warmup;
  j["env"] = r.env;
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  finish(out, path);
}

TimingReport read_timing_json(const fs::path& path) {
  auto in = open_in(path);
  try {
    const auto j = nlohmann::json::parse(in);
    TimingReport r;
    for (const char* name : {"hand", "finger", "processing"})
      r.stages.push_back({name, j.at(name).at("mean_ms").get<double>(),
                          j.at(name).at("p95_ms").get<double>()});
    r.total_mean_ms = j.at("total_ms").at("mean_ms").get<double>();
    r.total_p95_ms = j.at("total_ms").at("p95_ms").get<double>();
    r.total_stderr_ms = j.at("total_ms").value("stderr_ms", 0.0);
    r.n = j.at("n").get<std::size_t>();
    r.warmup = j.value("warmup", std::size_t{0});
    r.env = j.at("env").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": bad timing report: " + e.what());
  }
}

}  // namespace ftip::eval
