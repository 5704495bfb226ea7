#pragma once

#include "ftip/cascade.hpp"
#include "ftip/datagen.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ftip::eval {

using cascade::FingerStrategy;
using cascade::HandStrategy;
using geometry::BBox;
using geometry::Point2;

// ------------------------------------------------------------------ curves

struct EvalCurve {
  std::vector<double> thresholds;       // ascending
  std::vector<double> detection_rates;  // in [0, 1]
};

// 0.00, 0.05, ..., 1.00
std::vector<double> overlap_thresholds();
// 0, 1, ..., 100
std::vector<double> error_thresholds();

// Fraction of values >= tau (overlap) or <= tau (error) per threshold.
// Empty inputs and unordered thresholds are rejected.
EvalCurve overlap_curve(std::span<const double> ious,
                        std::span<const double> thresholds);
EvalCurve error_curve(std::span<const double> errors,
                      std::span<const double> thresholds);

// Box agreement. IoU is the default; intersection over the ground-truth area
// is kept as the alternative reading of "overlap rate".
enum class OverlapDefinition { iou, intersection_over_gt };
double overlap_rate(const BBox& predicted, const BBox& truth,
                    OverlapDefinition def = OverlapDefinition::iou);

// --------------------------------------------------------------- records

using Combination = std::pair<HandStrategy, FingerStrategy>;

struct EvalRecord {
  std::string frame_id;
  geometry::Size image_size;
  BBox gt_box;
  std::map<HandStrategy, double> hand_iou;     // predicted hand strategies
  std::map<Combination, double> finger_error;  // pixels, original frame
};

struct FrameFailure {
  std::string frame_id;
  std::string message;
};

struct EvalRun {
  std::vector<EvalRecord> records;
  std::vector<FrameFailure> failures;
};

struct EvalOptions {
  std::vector<HandStrategy> hand{HandStrategy::RHD, HandStrategy::AHD,
                                 HandStrategy::GT};
  std::vector<FingerStrategy> finger{FingerStrategy::MFD, FingerStrategy::SPD};
  OverlapDefinition overlap = OverlapDefinition::iou;
};

// Runs every (hand, finger) combination on every frame. A frame that throws
// is recorded as a failure and excluded.
EvalRun evaluate(const cascade::TrainedModels& models,
                 std::span<const datagen::LabeledFrame> frames,
                 const EvalOptions& options = {},
                 std::span<const std::string> frame_ids = {});
EvalRun evaluate(const cascade::TrainedModels& models,
                 const datagen::DatasetManifest& manifest,
                 const EvalOptions& options = {});

double mean_iou(std::span<const EvalRecord> records, HandStrategy hand);
double mean_error(std::span<const EvalRecord> records, Combination c);
std::vector<double> iou_values(std::span<const EvalRecord> records, HandStrategy hand);
std::vector<double> error_values(std::span<const EvalRecord> records, Combination c);

// ------------------------------------------------------------ cross table

struct CrossCell {
  HandStrategy hand;
  FingerStrategy finger;
  double mean_error_px = 0;
  std::size_t frames = 0;
};

// Rows RHD, AHD, GT; columns MFD, SPD.
struct CrossTable {
  std::vector<CrossCell> cells;
  std::size_t failures = 0;

  const CrossCell& at(HandStrategy h, FingerStrategy f) const;
};

CrossTable cross_table(const EvalRun& run);
CrossTable cross_comparison(const cascade::TrainedModels& models,
                            const datagen::DatasetManifest& manifest);

// ------------------------------------------------------------------ zones

struct ZoneStats {
  std::optional<double> focus_mean_iou;     // absent when no frame is inside
  std::optional<double> surround_mean_iou;  // absent when no frame is outside
  std::size_t focus_frames = 0;
  std::size_t surround_frames = 0;
};

// Middle 50% of width and height, as fractions of the image.
inline constexpr BBox kDefaultFocusZone{0.25, 0.25, 0.75, 0.75};

// Frames split by whether the ground-truth hand center is inside the zone
// (half-open, like every box).
bool in_focus_zone(const EvalRecord& r, const BBox& zone);
std::map<HandStrategy, ZoneStats> zone_metrics(std::span<const EvalRecord> records,
                                               const BBox& zone = kDefaultFocusZone);

// ---------------------------------------------------------------- latency

struct StageStat {
  std::string name;
  double mean_ms = 0;
  double p95_ms = 0;
};

struct TimingReport {
  std::vector<StageStat> stages;  // hand, finger, processing
  double total_mean_ms = 0;
  double total_p95_ms = 0;
  double total_stderr_ms = 0;
  std::size_t n = 0;
  std::size_t warmup = 0;
  std::string env;
};

inline constexpr int kMinRepetitions = 30;

// Times `repetitions` cascade runs cycling through the images, after
// `warmup` untimed runs. Throws std::invalid_argument when repetitions < 30.
TimingReport benchmark_latency(const cascade::TrainedModels& models,
                               std::span<const geometry::Image> images,
                               int repetitions, int warmup = 5,
                               HandStrategy hand = HandStrategy::AHD,
                               FingerStrategy finger = FingerStrategy::MFD);
TimingReport benchmark_latency(const cascade::TrainedModels& models,
                               const datagen::DatasetManifest& manifest,
                               int repetitions, int warmup = 5);

std::string environment_note();

// ---------------------------------------------------------------- outputs

void write_curve_csv(const EvalCurve& curve, const std::filesystem::path& path);
EvalCurve read_curve_csv(const std::filesystem::path& path);

void write_cross_csv(const CrossTable& table, const std::filesystem::path& path);
CrossTable read_cross_csv(const std::filesystem::path& path);

void write_zone_csv(const std::map<HandStrategy, ZoneStats>& zones,
                    const std::filesystem::path& path);

void write_timing_json(const TimingReport& report, const std::filesystem::path& path);
TimingReport read_timing_json(const std::filesystem::path& path);

// Shortest "%.6g" rendering used by every CSV.
std::string format_value(double v);

}  // namespace ftip::eval
