#include "ftip/cascade.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace ftip::cascade {

using geometry::Translation;
using datagen::LabeledFrame;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void check_model(const NetworkModel& net, int outputs, const char* name) {
  nn::validate(net.spec);
  if (net.spec.output_dim != outputs)
    throw std::invalid_argument(std::string(name) + " must output " +
                                std::to_string(outputs) + " values");
  nn::check_weights(net.spec, net.weights);
}

Size net_input_size(const NetworkModel& net) {
  return {net.spec.input.width, net.spec.input.height};
}

// Forward pass on an image of exactly the net's input size. Time spent in
// the network itself is added to *forward_ms when given.
nn::Tensorf run_net(const NetworkModel& net, const Image& img, const Rgb& mean,
                    double* forward_ms = nullptr) {
  if (img.size() != net_input_size(net))
    throw std::invalid_argument("image does not match the network input");
  const nn::Tensorf input = image_tensor(img, mean);
  const auto t0 = Clock::now();
  nn::Tensorf out = nn::forward(net.spec, net.weights, input);
  if (forward_ms) *forward_ms += ms_since(t0);
  return out;
}

BBox regress(const NetworkModel& net, const Image& img, const Rgb& mean,
             double* forward_ms) {
  const Size in = net_input_size(net);
  const Image resized =
      img.size() == in ? img : geometry::resize_image(img, in).image;
  const nn::Tensorf out = run_net(net, resized, mean, forward_ms);
  const double w = img.width(), h = img.height();
  const double x1 = out[0] * w, y1 = out[1] * h, x2 = out[2] * w, y2 = out[3] * h;
  return {std::min(x1, x2), std::min(y1, y2), std::max(x1, x2), std::max(y1, y2)};
}

AttentionResult attend(const TrainedModels& models, const NetworkModel& net,
                       const Image& img, double* forward_ms) {
  const RepairedBox rough = repair_box(
      regress(models.rough_hand, img, models.fill_mean, forward_ms), img.size());
  const auto centered = geometry::centralize(img, rough.box, models.fill_mean);
  const BBox second = regress(net, centered.image, models.fill_mean, forward_ms);
  const RepairedBox back = repair_box(
      geometry::apply_translation(second, geometry::invert(centered.translation)),
      img.size());
  return {back.box, centered.translation, rough.box, rough.repaired || back.repaired};
}

FingerPoints predict_points(const TrainedModels& models, const Image& img,
                            const BBox& box, FingerStrategy strategy,
                            double* forward_ms) {
  const NetworkModel& net =
      strategy == FingerStrategy::MFD ? models.finger_multi : models.finger_single;
  const Size patch_size = net_input_size(net);
  const auto patch = geometry::crop_resize(img, finger_crop_box(box, models.margin),
                                           patch_size, models.fill_mean);
  const nn::Tensorf out = run_net(net, patch.image, models.fill_mean, forward_ms);
  auto to_frame = [&](Eigen::Index i) {
    const Point2 p = patch.transform.to_frame(
        {out[i] * double(patch_size.width), out[i + 1] * double(patch_size.height)});
    return Point2{std::clamp(p.x, 0.0, double(img.width())),
                  std::clamp(p.y, 0.0, double(img.height()))};
  };
  FingerPoints r{to_frame(0), std::nullopt};
  if (strategy == FingerStrategy::MFD) r.joint = to_frame(2);
  return r;
}

}  // namespace

const char* to_string(HandStrategy s) {
  switch (s) {
    case HandStrategy::RHD: return "RHD";
    case HandStrategy::AHD: return "AHD";
    case HandStrategy::GT: return "GT";
    case HandStrategy::AHD_REUSE: return "AHD-reuse";
  }
  return "?";
}

const char* to_string(FingerStrategy s) {
  return s == FingerStrategy::SPD ? "SPD" : "MFD";
}

HandStrategy hand_strategy_from_string(const std::string& s) {
  std::string u;
  for (char c : s) u += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (u == "RHD") return HandStrategy::RHD;
  if (u == "AHD") return HandStrategy::AHD;
  if (u == "GT") return HandStrategy::GT;
  if (u == "AHD-REUSE") return HandStrategy::AHD_REUSE;
  throw std::invalid_argument("unknown hand strategy: " + s);
}

FingerStrategy finger_strategy_from_string(const std::string& s) {
  std::string u;
  for (char c : s) u += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (u == "SPD") return FingerStrategy::SPD;
  if (u == "MFD") return FingerStrategy::MFD;
  throw std::invalid_argument("unknown finger strategy: " + s);
}

void InputGeometry::validate() const {
  if (crop_size < 1 || mfd_patch_size < 1)
    throw std::invalid_argument("network input sizes must be positive");
  if (train_size < crop_size)
    throw std::invalid_argument("train_size must be >= crop_size");
}

void TrainedModels::validate() const {
  geometry.validate();
  check_model(rough_hand, 4, "rough hand net");
  check_model(attention_hand, 4, "attention hand net");
  check_model(finger_multi, 4, "multi-point finger net");
  check_model(finger_single, 2, "single-point finger net");
  if (margin < 0) throw std::invalid_argument("margin must be >= 0");
  if (bias_max < 0) throw std::invalid_argument("bias_max must be >= 0");
}

int scaled_bias_max(int image_width) {
  return static_cast<int>(std::lround(50.0 * image_width / 640.0));
}

nn::Tensorf image_tensor(const Image& img, const Rgb& mean) {
  return image_batch(std::span<const Image>(&img, 1), mean);
}

nn::Tensorf image_batch(std::span<const Image> images, const Rgb& mean) {
  if (images.empty()) throw std::invalid_argument("empty image batch");
  const Size s = images.front().size();
  const Eigen::Index plane = Eigen::Index{s.width} * s.height;
  nn::Tensorf t({Eigen::Index(images.size()), 3, s.height, s.width});
  auto cols = t.samples();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].size() != s) throw std::invalid_argument("mixed image sizes in batch");
    float* dst = cols.col(Eigen::Index(i)).data();
    images[i].write_chw(dst);
    for (int c = 0; c < 3; ++c)
      Eigen::Map<Eigen::ArrayXf>(dst + c * plane, plane) -= mean[c];
  }
  return t;
}

BBox regress_box(const NetworkModel& net, const Image& img, const Rgb& mean) {
  return regress(net, img, mean, nullptr);
}

RepairedBox repair_box(const BBox& box, Size image) {
  const double w = image.width, h = image.height;
  BBox b{std::min(box.x1, box.x2), std::min(box.y1, box.y2),
         std::max(box.x1, box.x2), std::max(box.y1, box.y2)};
  bool repaired = !(b == box);
  const BBox clamped{std::clamp(b.x1, 0.0, w), std::clamp(b.y1, 0.0, h),
                     std::clamp(b.x2, 0.0, w), std::clamp(b.y2, 0.0, h)};
  repaired |= !(clamped == b);
  if (clamped.area() >= 1.0) return {clamped, repaired};

  // Center of the unclamped prediction, pulled inside the image.
  const double half_w = std::min(4.0, w / 2), half_h = std::min(4.0, h / 2);
  const Point2 c = b.center();
  const double cx = std::clamp(c.x, half_w, w - half_w);
  const double cy = std::clamp(c.y, half_h, h - half_h);
  return {{cx - half_w, cy - half_h, cx + half_w, cy + half_h}, true};
}

RepairedBox rough_detect(const TrainedModels& models, const Image& img) {
  return repair_box(regress_box(models.rough_hand, img, models.fill_mean), img.size());
}

AttentionResult attention_detect(const TrainedModels& models,
                                 const NetworkModel& net, const Image& img) {
  return attend(models, net, img, nullptr);
}

AttentionResult ahd_detect(const TrainedModels& models, const Image& img) {
  return attention_detect(models, models.attention_hand, img);
}

BBox finger_crop_box(const BBox& hand_box, double margin) {
  return hand_box.inflated(margin);
}

FingerPoints finger_predict(const TrainedModels& models, const Image& img,
                            const BBox& box, FingerStrategy strategy) {
  return predict_points(models, img, box, strategy, nullptr);
}

Detection run_cascade(const TrainedModels& models, const Image& img,
                      HandStrategy hand, FingerStrategy finger,
                      std::optional<BBox> gt_box) {
  if (hand == HandStrategy::GT && !gt_box)
    throw std::invalid_argument("GT hand strategy requires a ground-truth box");
  if (hand != HandStrategy::GT && gt_box)
    throw std::invalid_argument("ground-truth box given for a non-GT strategy");

  Detection d;
  d.hand_strategy = hand;
  d.finger_strategy = finger;
  const auto start = Clock::now();
  // Stage times cover the network passes; everything else is processing.
  double hand_ms = 0, finger_ms = 0;
  switch (hand) {
    case HandStrategy::GT:
      d.hand_box = *gt_box;
      break;
    case HandStrategy::RHD: {
      const auto r = repair_box(
          regress(models.rough_hand, img, models.fill_mean, &hand_ms), img.size());
      d.hand_box = r.box;
      d.repaired = r.repaired;
      break;
    }
    case HandStrategy::AHD:
    case HandStrategy::AHD_REUSE: {
      const auto r = attend(models,
                            hand == HandStrategy::AHD ? models.attention_hand
                                                      : models.rough_hand,
                            img, &hand_ms);
      d.hand_box = r.box;
      d.repaired = r.repaired;
      break;
    }
  }
  const FingerPoints p = predict_points(models, img, d.hand_box, finger, &finger_ms);
  d.fingertip = p.fingertip;
  d.joint = p.joint;
  d.timings.hand_ms = hand_ms;
  d.timings.finger_ms = finger_ms;
  d.timings.processing_ms = std::max(0.0, ms_since(start) - hand_ms - finger_ms);
  return d;
}

}  // namespace ftip::cascade
