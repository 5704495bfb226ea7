#pragma once

#include "ftip/datagen.hpp"
#include "ftip/geometry.hpp"
#include "ftip/nn/network.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ftip::cascade {

using geometry::BBox;
using geometry::Image;
using geometry::Point2;
using geometry::Rgb;
using geometry::Size;

// AHD_REUSE is centralized re-detection with the rough net's weights, the
// ablation setting between RHD and fine-tuned AHD.
enum class HandStrategy { RHD, AHD, GT, AHD_REUSE };
enum class FingerStrategy { SPD, MFD };

const char* to_string(HandStrategy s);
const char* to_string(FingerStrategy s);
HandStrategy hand_strategy_from_string(const std::string& s);
FingerStrategy finger_strategy_from_string(const std::string& s);

struct NetworkModel {
  nn::NetworkSpec spec;
  nn::NetworkWeights<float> weights;
};

// Square network inputs. The hand net sees crop_size pixels: training frames
// are resized to train_size and randomly cropped, inference frames are
// resized straight to crop_size.
struct InputGeometry {
  int train_size = 128;
  int crop_size = 112;
  int mfd_patch_size = 96;

  void validate() const;
};

struct TrainedModels {
  NetworkModel rough_hand;
  NetworkModel attention_hand;
  NetworkModel finger_multi;
  NetworkModel finger_single;
  Rgb fill_mean{0.5f, 0.5f, 0.5f};
  InputGeometry geometry;
  double margin = 0.15;  // finger crop inflation per side
  int bias_max = 10;     // fine-tuning bias, pixels of the training frames

  void validate() const;
};

// 50 px at width 640, scaled to the given width.
int scaled_bias_max(int image_width);

struct StageTimings {
  double hand_ms = 0;
  double finger_ms = 0;
  double processing_ms = 0;

  double total_ms() const { return hand_ms + finger_ms + processing_ms; }
};

struct Detection {
  BBox hand_box;
  Point2 fingertip;
  std::optional<Point2> joint;
  StageTimings timings;
  HandStrategy hand_strategy = HandStrategy::AHD;
  FingerStrategy finger_strategy = FingerStrategy::MFD;
  bool repaired = false;  // some stage's box needed repair
};

// Network input for one image: CHW planes minus the per-channel mean.
nn::Tensorf image_tensor(const Image& img, const Rgb& mean);
nn::Tensorf image_batch(std::span<const Image> images, const Rgb& mean);

// Raw regression of a hand net on img: resized to the net input, outputs
// scaled by the image extent and corners reordered. No clamping.
BBox regress_box(const NetworkModel& net, const Image& img, const Rgb& mean);

struct RepairedBox {
  BBox box;
  bool repaired = false;
};

// Clamps to the image, then replaces boxes under 1 px² by an 8x8 box
// centered on the prediction (shifted inside the image).
RepairedBox repair_box(const BBox& box, Size image);

RepairedBox rough_detect(const TrainedModels& models, const Image& img);

struct AttentionResult {
  BBox box;
  geometry::Translation translation;  // applied to img before re-detection
  BBox rough;
  bool repaired = false;
};

// Rough detection, centralization with fill_mean, re-detection by `net`
// and mapping back to the original frame.
AttentionResult attention_detect(const TrainedModels& models,
                                 const NetworkModel& net, const Image& img);
AttentionResult ahd_detect(const TrainedModels& models, const Image& img);

struct FingerPoints {
  Point2 fingertip;
  std::optional<Point2> joint;
};

// Finger crop for a hand box: inflated by models.margin per side.
BBox finger_crop_box(const BBox& hand_box, double margin);

FingerPoints finger_predict(const TrainedModels& models, const Image& img,
                            const BBox& box, FingerStrategy strategy);

Detection run_cascade(const TrainedModels& models, const Image& img,
                      HandStrategy hand, FingerStrategy finger,
                      std::optional<BBox> gt_box = std::nullopt);

// ---------------------------------------------------------------- training

struct Architecture {
  std::vector<int> channels{16, 32, 64, 64, 128};
  std::vector<int> hidden{256, 128};
};

struct TrainSettings {
  nn::TrainConfig train;
  InputGeometry geometry;
  Architecture arch;
  Rgb fill_mean{0.5f, 0.5f, 0.5f};
  double margin = 0.15;
  datagen::AffineRange affine;
  // Epoch-wise multiplicative learning-rate decay.
  double lr_decay = 1.0;
};

struct TrainResult {
  NetworkModel model;
  std::vector<double> loss_trace;  // mean training loss per epoch
};

nn::NetworkSpec hand_spec(const InputGeometry& g, const Architecture& arch);
nn::NetworkSpec finger_spec(const InputGeometry& g, const Architecture& arch,
                            FingerStrategy strategy);

// Normalized targets: corners over the frame extent, keypoints over the
// patch extent, packed (fingertip, joint).
std::vector<float> box_target(const BBox& box, Size frame);
std::vector<float> keypoint_target(std::span<const Point2> keypoints,
                                   Size patch, FingerStrategy strategy);

TrainResult train_hand_detector(std::span<const datagen::LabeledFrame> frames,
                                const TrainSettings& settings);
TrainResult finetune_hand_detector(std::span<const datagen::LabeledFrame> frames,
                                   const NetworkModel& base,
                                   const TrainSettings& settings);
TrainResult train_finger_detector(std::span<const datagen::LabeledFrame> frames,
                                  FingerStrategy strategy,
                                  const TrainSettings& settings);

// Manifest-level wrappers.
TrainResult train_hand_detector(const datagen::DatasetManifest& manifest,
                                const TrainSettings& settings);
TrainResult finetune_hand_detector(const datagen::DatasetManifest& manifest,
                                   const NetworkModel& base,
                                   const TrainSettings& settings);
TrainResult train_finger_detector(const datagen::DatasetManifest& manifest,
                                  FingerStrategy strategy,
                                  const TrainSettings& settings);

// ---------------------------------------------------------------- storage

inline constexpr const char* kRoughFile = "rough_hand.cdw";
inline constexpr const char* kAttentionFile = "attention_hand.cdw";
inline constexpr const char* kFingerMultiFile = "finger_mfd.cdw";
inline constexpr const char* kFingerSingleFile = "finger_spd.cdw";
inline constexpr const char* kDescriptorFile = "models.json";

struct ModelDescriptor {
  Rgb fill_mean{0.5f, 0.5f, 0.5f};
  InputGeometry geometry;
  double margin = 0.15;
  int bias_max = 10;
};

void write_descriptor(const ModelDescriptor& d, const std::filesystem::path& path);
ModelDescriptor read_descriptor(const std::filesystem::path& path);

void save_models(const TrainedModels& models, const std::filesystem::path& dir);
// Throws std::runtime_error naming the first missing file.
TrainedModels load_models(const std::filesystem::path& dir);

}  // namespace ftip::cascade
