#include "ftip/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace ftip::eval {

namespace {

void check_thresholds(std::span<const double> thresholds) {
  if (thresholds.empty()) throw std::invalid_argument("no thresholds");
  if (!std::is_sorted(thresholds.begin(), thresholds.end()))
    throw std::invalid_argument("thresholds must be ascending");
}

template <typename Pred>
EvalCurve make_curve(std::span<const double> values,
                     std::span<const double> thresholds, Pred pass) {
  if (values.empty()) throw std::invalid_argument("empty input for curve");
  check_thresholds(thresholds);
  EvalCurve c;
  c.thresholds.assign(thresholds.begin(), thresholds.end());
  for (double t : thresholds) {
    std::size_t hits = 0;
    for (double v : values) hits += pass(v, t);
    c.detection_rates.push_back(double(hits) / double(values.size()));
  }
  return c;
}

}  // namespace

std::vector<double> overlap_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= 20; ++i) t.push_back(i / 20.0);
  return t;
}

std::vector<double> error_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= 100; ++i) t.push_back(i);
  return t;
}

EvalCurve overlap_curve(std::span<const double> ious,
                        std::span<const double> thresholds) {
  for (double v : ious)
    if (!(v >= 0 && v <= 1)) throw std::invalid_argument("IoU outside [0, 1]");
  return make_curve(ious, thresholds, [](double v, double t) { return v >= t; });
}

EvalCurve error_curve(std::span<const double> errors,
                      std::span<const double> thresholds) {
  for (double v : errors)
    if (!(v >= 0)) throw std::invalid_argument("negative or NaN error");
  return make_curve(errors, thresholds, [](double v, double t) { return v <= t; });
}

double overlap_rate(const BBox& predicted, const BBox& truth, OverlapDefinition def) {
  if (def == OverlapDefinition::iou) return geometry::iou(predicted, truth);
  const double a = truth.area();
  return a > 0 ? geometry::intersection(predicted, truth).area() / a : 0.0;
}

EvalRun evaluate(const cascade::TrainedModels& models,
                 std::span<const datagen::LabeledFrame> frames,
                 const EvalOptions& options, std::span<const std::string> frame_ids) {
  if (!frame_ids.empty() && frame_ids.size() != frames.size())
    throw std::invalid_argument("frame id count does not match frames");
  EvalRun run;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    EvalRecord r;
    r.frame_id = frame_ids.empty() ? std::to_string(i) : frame_ids[i];
    r.image_size = f.image.size();
    r.gt_box = f.hand_box;
    try {
      for (HandStrategy h : options.hand)
        for (FingerStrategy fs : options.finger) {
          const std::optional<BBox> gt =
              h == HandStrategy::GT ? std::optional<BBox>(f.hand_box) : std::nullopt;
          const auto d = cascade::run_cascade(models, f.image, h, fs, gt);
          if (h != HandStrategy::GT)
            r.hand_iou[h] = overlap_rate(d.hand_box, f.hand_box, options.overlap);
          r.finger_error[{h, fs}] = geometry::distance(d.fingertip, f.fingertip);
        }
    } catch (const std::exception& e) {
      run.failures.push_back({r.frame_id, e.what()});
      continue;
    }
    run.records.push_back(std::move(r));
  }
  return run;
}

EvalRun evaluate(const cascade::TrainedModels& models,
                 const datagen::DatasetManifest& manifest, const EvalOptions& options) {
  const auto frames = datagen::load_frames(manifest);
  std::vector<std::string> ids;
  for (const auto& rec : manifest.records) ids.push_back(rec.image);
  return evaluate(models, frames, options, ids);
}

std::vector<double> iou_values(std::span<const EvalRecord> records, HandStrategy hand) {
  std::vector<double> v;
  for (const auto& r : records)
    if (auto it = r.hand_iou.find(hand); it != r.hand_iou.end()) v.push_back(it->second);
  return v;
}

std::vector<double> error_values(std::span<const EvalRecord> records, Combination c) {
  std::vector<double> v;
  for (const auto& r : records)
    if (auto it = r.finger_error.find(c); it != r.finger_error.end())
      v.push_back(it->second);
  return v;
}

namespace {
double mean_of(const std::vector<double>& v, const char* what) {
  if (v.empty()) throw std::invalid_argument(std::string("no values for ") + what);
  double s = 0;
  for (double x : v) s += x;
  return s / double(v.size());
}
}  // namespace

double mean_iou(std::span<const EvalRecord> records, HandStrategy hand) {
  return mean_of(iou_values(records, hand), cascade::to_string(hand));
}

double mean_error(std::span<const EvalRecord> records, Combination c) {
  return mean_of(error_values(records, c), cascade::to_string(c.first));
}

const CrossCell& CrossTable::at(HandStrategy h, FingerStrategy f) const {
  for (const auto& c : cells)
    if (c.hand == h && c.finger == f) return c;
  throw std::out_of_range(std::string("no cross-table cell ") + cascade::to_string(h) +
                          "+" + cascade::to_string(f));
}

CrossTable cross_table(const EvalRun& run) {
  CrossTable t;
  t.failures = run.failures.size();
  for (HandStrategy h : {HandStrategy::RHD, HandStrategy::AHD, HandStrategy::GT})
    for (FingerStrategy f : {FingerStrategy::MFD, FingerStrategy::SPD}) {
      const auto v = error_values(run.records, {h, f});
      if (v.empty()) continue;
      t.cells.push_back({h, f, mean_of(v, "cell"), v.size()});
    }
  return t;
}

CrossTable cross_comparison(const cascade::TrainedModels& models,
                            const datagen::DatasetManifest& manifest) {
  if (manifest.records.empty()) throw std::invalid_argument("empty manifest");
  return cross_table(evaluate(models, manifest));
}

bool in_focus_zone(const EvalRecord& r, const BBox& zone) {
  const Point2 c = r.gt_box.center();
  const BBox abs{zone.x1 * r.image_size.width, zone.y1 * r.image_size.height,
                 zone.x2 * r.image_size.width, zone.y2 * r.image_size.height};
  return abs.contains(c);
}

std::map<HandStrategy, ZoneStats> zone_metrics(std::span<const EvalRecord> records,
                                               const BBox& zone) {
  std::map<HandStrategy, std::pair<std::vector<double>, std::vector<double>>> split;
  for (const auto& r : records) {
    const bool focus = in_focus_zone(r, zone);
    for (const auto& [h, v] : r.hand_iou)
      (focus ? split[h].first : split[h].second).push_back(v);
  }
  std::map<HandStrategy, ZoneStats> out;
  for (const auto& [h, parts] : split) {
    ZoneStats s;
    s.focus_frames = parts.first.size();
    s.surround_frames = parts.second.size();
    if (!parts.first.empty()) s.focus_mean_iou = mean_of(parts.first, "focus");
    if (!parts.second.empty()) s.surround_mean_iou = mean_of(parts.second, "surround");
    out[h] = s;
  }
  return out;
}

}  // namespace ftip::eval
