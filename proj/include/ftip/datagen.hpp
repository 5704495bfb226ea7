#pragma once

#include "ftip/geometry.hpp"
#include "ftip/random.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ftip::datagen {

using geometry::BBox;
using geometry::Image;
using geometry::Point2;
using geometry::Rgb;
using geometry::Size;

enum class Direction { left, up, right };

const char* to_string(Direction d);
Direction direction_from_string(const std::string& s);

// Analytic description of a rendered hand: an elliptical palm plus one
// index-finger capsule running from finger_base to finger_end.
struct HandGeometry {
  Point2 palm_center;
  double palm_rx = 0;
  double palm_ry = 0;
  double angle = 0;  // finger direction, radians, clockwise-positive (y down)
  Point2 finger_base;
  Point2 finger_end;
  double finger_radius = 0;

  // Outermost point of the finger capsule.
  Point2 fingertip() const;
  // Point on the capsule axis at 55% of the capsule length from the tip.
  Point2 joint() const;
  bool contains(const Point2& p) const;
};

inline constexpr double kJointFraction = 0.55;

struct FrameMeta {
  bool dark = false;
  Direction dir = Direction::left;
};

struct LabeledFrame {
  Image image;
  BBox hand_box;
  Point2 fingertip;
  Point2 joint;
  FrameMeta meta;
  // Present for generated frames; absent for frames loaded from disk.
  std::optional<HandGeometry> hand;
};

enum class Placement { gaussian, uniform };

struct SceneParams {
  Size image_size{128, 128};
  Placement placement = Placement::gaussian;
  // Gaussian placement. Negative sigma components mean "1/6 of the image
  // extent"; location_mean defaults to the image center when unset.
  std::optional<Point2> location_mean;
  double sigma_x = -1;
  double sigma_y = -1;
  // Uniform placement keeps the palm center this fraction of the image
  // extent away from the border.
  double uniform_inset = 0.05;
  double left_weight = 0.6;  // the rest is split evenly between up and right
  double dark_fraction = 0.3;
  int distractors_min = 2;
  int distractors_max = 5;
  // Palm semi-axis as a fraction of min(width, height).
  double hand_scale_min = 0.09;
  double hand_scale_max = 0.13;
  std::uint64_t seed = 1;

  Point2 mean() const;
  double sx() const;
  double sy() const;
  void validate() const;
};

// Deterministic in (params, index).
LabeledFrame generate_frame(const SceneParams& params, std::uint64_t index);

struct ManifestRecord {
  std::string image;  // path relative to the manifest directory
  BBox bbox;
  Point2 fingertip;
  Point2 joint;
  FrameMeta meta;
};

struct DatasetManifest {
  std::filesystem::path root;  // directory that record paths are relative to
  std::vector<ManifestRecord> records;

  std::filesystem::path image_path(const ManifestRecord& r) const {
    return root / r.image;
  }
};

std::string record_to_jsonl(const ManifestRecord& r);
ManifestRecord record_from_jsonl(const std::string& line);

void write_manifest(const DatasetManifest& manifest,
                    const std::filesystem::path& path);
// Checks that every referenced image exists unless check_files is false.
DatasetManifest read_manifest(const std::filesystem::path& path,
                              bool check_files = true);

inline constexpr const char* kManifestName = "manifest.jsonl";

// Renders `count` frames, writes PNGs under out_dir/images and the manifest
// to out_dir/manifest.jsonl.
DatasetManifest generate_dataset(const SceneParams& params, std::size_t count,
                                 const std::filesystem::path& out_dir);

LabeledFrame load_frame(const DatasetManifest& manifest,
                        const ManifestRecord& record);
std::vector<LabeledFrame> load_frames(const DatasetManifest& manifest);

// Per-channel mean over every pixel of every image, summed in order of
// sorted image path.
Rgb dataset_mean(const DatasetManifest& manifest);
// In-memory variant; sums in the given order.
Rgb dataset_mean(std::span<const LabeledFrame> frames);

// Shifts every label of a frame by t (image untouched).
LabeledFrame translate_labels(const LabeledFrame& frame,
                              const geometry::Translation& t);

struct AugmentedFrame {
  LabeledFrame frame;
  bool fallback = false;  // no admissible random crop was found
  int crop_x = 0;
  int crop_y = 0;
};

// Integer crop of a frame with labels shifted accordingly.
LabeledFrame crop_frame(const LabeledFrame& frame, int x, int y, Size size);

// Resize to train_size (labels scaled), then a random crop_size window that
// keeps at least half of the hand box area.
AugmentedFrame augment_detection_sample(const LabeledFrame& frame,
                                        Size train_size, Size crop_size,
                                        Rng& rng);

// Similarity transform about `center`: scale, then rotate by theta degrees,
// clockwise-positive in the y-down frame.
struct Similarity {
  double scale = 1;
  double theta_deg = 0;
  Point2 center;

  Point2 apply(const Point2& p) const;
  Similarity inverse() const;
};

// Warps an image by `sim`; destinations whose source falls outside the image
// take `fill`.
Image warp_similarity(const Image& img, const Similarity& sim, const Rgb& fill);

struct KeypointSample {
  Image image;
  std::vector<Point2> keypoints;
  Similarity transform;
  bool fallback = false;  // every draw pushed a keypoint out of the patch
};

struct AffineRange {
  double scale_min = 0.9;
  double scale_max = 1.1;
  double rotation_deg = 15;  // symmetric range [-r, r]
};

KeypointSample augment_keypoint_sample(const Image& patch,
                                       std::span<const Point2> keypoints,
                                       const AffineRange& range, Rng& rng,
                                       const Rgb& fill = {0, 0, 0});

struct CenteredSample {
  LabeledFrame frame;
  geometry::Translation translation;  // centering plus random bias
};

// Centralizes the frame on its hand box, then adds an integer bias drawn
// uniformly from [-bias_max, bias_max] per axis. Vacated pixels take fill.
CenteredSample synthesize_centered_sample(const LabeledFrame& frame,
                                          int bias_max, const Rgb& fill,
                                          Rng& rng);

struct DatasetSummary {
  std::size_t count = 0;
  double dark_fraction = 0;
  double left_fraction = 0;
  double up_fraction = 0;
  double right_fraction = 0;
};

DatasetSummary summarize(const DatasetManifest& manifest);

}  // namespace ftip::datagen
