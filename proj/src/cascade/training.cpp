#include "ftip/cascade.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ftip::cascade {

using datagen::LabeledFrame;

namespace {

// Fills one sample's input block (CHW, mean-subtracted) and target row.
using SampleFn =
    std::function<void(std::size_t index, Rng& rng, float* input, float* target)>;

std::uint64_t stage_seed(std::uint64_t seed, std::string_view stage) {
  return mix64(seed ^ hash_name(stage));
}

void write_input(const Image& img, const Rgb& mean, float* dst) {
  img.write_chw(dst);
  const Eigen::Index plane = Eigen::Index{img.width()} * img.height();
  for (int c = 0; c < 3; ++c)
    Eigen::Map<Eigen::ArrayXf>(dst + c * plane, plane) -= mean[c];
}

TrainResult run_training(const nn::NetworkSpec& spec,
                         nn::NetworkWeights<float> weights, std::size_t n,
                         const TrainSettings& s, const std::string& stage,
                         const SampleFn& make_sample) {
  s.train.validate();
  if (n == 0) throw std::invalid_argument(stage + ": empty training set");
  nn::check_weights(spec, weights);

  const Eigen::Index in_size = spec.input.size();
  const Eigen::Index out_size = spec.output_dim;
  auto velocity = weights.zeros_like();
  nn::TrainConfig step_config = s.train;
  const std::uint64_t seed = stage_seed(s.train.seed, stage);

  std::vector<std::size_t> order(n);
  TrainResult result;
  for (int epoch = 0; epoch < s.train.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = Rng::stream(seed, "shuffle", std::uint64_t(epoch));
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[std::size_t(shuffle.uniform_int(0, i - 1))]);
    step_config.learning_rate = s.train.learning_rate * std::pow(s.lr_decay, epoch);

    double loss_sum = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += std::size_t(s.train.batch_size)) {
      const std::size_t count = std::min<std::size_t>(s.train.batch_size, n - start);
      const auto b = Eigen::Index(count);
      nn::Tensorf inputs({b, spec.input.channels, spec.input.height, spec.input.width});
      nn::Tensorf targets({b, out_size});
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t idx = order[start + k];
        Rng rng = Rng::stream(seed, "augment", std::uint64_t(epoch) * n + idx);
        make_sample(idx, rng, inputs.data().data() + Eigen::Index(k) * in_size,
                    targets.data().data() + Eigen::Index(k) * out_size);
      }
      nn::LossAndGrad<float> lg;
      try {
        lg = nn::loss_and_grad(spec, weights, inputs, targets);
      } catch (const nn::NonFiniteLoss& e) {
        throw nn::NonFiniteLoss(stage + ": epoch " + std::to_string(epoch + 1) +
                                ", batch " + std::to_string(batch_index + 1) +
                                ": " + e.what());
      }
      loss_sum += double(lg.loss) * double(count);
      nn::sgd_step(weights, lg.grads, step_config, velocity);
      ++batch_index;
    }
    result.loss_trace.push_back(loss_sum / double(n));
  }
  result.model = {spec, std::move(weights)};
  return result;
}

Size square(int s) { return {s, s}; }

}  // namespace

nn::NetworkSpec hand_spec(const InputGeometry& g, const Architecture& arch) {
  return nn::make_cascade_net(g.crop_size, 4, arch.channels, arch.hidden);
}

nn::NetworkSpec finger_spec(const InputGeometry& g, const Architecture& arch,
                            FingerStrategy strategy) {
  return nn::make_cascade_net(g.mfd_patch_size,
                              strategy == FingerStrategy::MFD ? 4 : 2,
                              arch.channels, arch.hidden);
}

std::vector<float> box_target(const BBox& box, Size frame) {
  const double w = frame.width, h = frame.height;
  return {float(box.x1 / w), float(box.y1 / h), float(box.x2 / w), float(box.y2 / h)};
}

std::vector<float> keypoint_target(std::span<const Point2> keypoints, Size patch,
                                   FingerStrategy strategy) {
  const std::size_t used = strategy == FingerStrategy::MFD ? 2 : 1;
  if (keypoints.size() < used)
    throw std::invalid_argument("missing keypoints for the finger target");
  std::vector<float> t;
  for (std::size_t i = 0; i < used; ++i) {
    t.push_back(float(keypoints[i].x / patch.width));
    t.push_back(float(keypoints[i].y / patch.height));
  }
  return t;
}

TrainResult train_hand_detector(std::span<const LabeledFrame> frames,
                                const TrainSettings& s) {
  s.geometry.validate();
  const auto spec = hand_spec(s.geometry, s.arch);
  auto weights = nn::init_weights<float>(spec, s.train.weight_init_scale,
                                         stage_seed(s.train.seed, "hand/init"));
  const Size train = square(s.geometry.train_size), crop = square(s.geometry.crop_size);
  return run_training(
      spec, std::move(weights), frames.size(), s, "hand",
      [&](std::size_t i, Rng& rng, float* in, float* target) {
        const auto aug = datagen::augment_detection_sample(frames[i], train, crop, rng);
        write_input(aug.frame.image, s.fill_mean, in);
        const auto t = box_target(aug.frame.hand_box, crop);
        std::copy(t.begin(), t.end(), target);
      });
}

TrainResult finetune_hand_detector(std::span<const LabeledFrame> frames,
                                   const NetworkModel& base,
                                   const TrainSettings& s) {
  s.geometry.validate();
  nn::check_weights(base.spec, base.weights);
  if (base.spec.output_dim != 4)
    throw std::invalid_argument("base hand net must output 4 values");
  const Size input{base.spec.input.width, base.spec.input.height};
  return run_training(
      base.spec, base.weights, frames.size(), s, "finetune",
      [&](std::size_t i, Rng& rng, float* in, float* target) {
        const LabeledFrame& f = frames[i];
        const auto sample = datagen::synthesize_centered_sample(
            f, scaled_bias_max(f.image.width()), s.fill_mean, rng);
        const Image resized = geometry::resize_image(sample.frame.image, input).image;
        write_input(resized, s.fill_mean, in);
        const auto t = box_target(sample.frame.hand_box, f.image.size());
        std::copy(t.begin(), t.end(), target);
      });
}

TrainResult train_finger_detector(std::span<const LabeledFrame> frames,
                                  FingerStrategy strategy, const TrainSettings& s) {
  s.geometry.validate();
  const auto spec = finger_spec(s.geometry, s.arch, strategy);
  const std::string stage = strategy == FingerStrategy::MFD ? "finger-mfd" : "finger-spd";
  auto weights = nn::init_weights<float>(spec, s.train.weight_init_scale,
                                         stage_seed(s.train.seed, stage + "/init"));
  const Size patch = square(s.geometry.mfd_patch_size);

  // Ground-truth crops do not depend on the epoch; only the affine draw does.
  struct Crop {
    Image image;
    std::array<Point2, 2> keypoints;
  };
  std::vector<Crop> crops;
  crops.reserve(frames.size());
  for (const auto& f : frames) {
    const auto p = geometry::crop_resize(f.image, finger_crop_box(f.hand_box, s.margin),
                                         patch, s.fill_mean);
    crops.push_back({p.image, {p.transform.to_patch(f.fingertip),
                               p.transform.to_patch(f.joint)}});
  }
  return run_training(
      spec, std::move(weights), crops.size(), s, stage,
      [&](std::size_t i, Rng& rng, float* in, float* target) {
        const auto sample = datagen::augment_keypoint_sample(
            crops[i].image, crops[i].keypoints, s.affine, rng, s.fill_mean);
        write_input(sample.image, s.fill_mean, in);
        const auto t = keypoint_target(sample.keypoints, patch, strategy);
        std::copy(t.begin(), t.end(), target);
      });
}

TrainResult train_hand_detector(const datagen::DatasetManifest& manifest,
                                const TrainSettings& s) {
  const auto frames = datagen::load_frames(manifest);
  return train_hand_detector(std::span<const LabeledFrame>(frames), s);
}

TrainResult finetune_hand_detector(const datagen::DatasetManifest& manifest,
                                   const NetworkModel& base, const TrainSettings& s) {
  const auto frames = datagen::load_frames(manifest);
  return finetune_hand_detector(std::span<const LabeledFrame>(frames), base, s);
}

TrainResult train_finger_detector(const datagen::DatasetManifest& manifest,
                                  FingerStrategy strategy, const TrainSettings& s) {
  const auto frames = datagen::load_frames(manifest);
  return train_finger_detector(std::span<const LabeledFrame>(frames), strategy, s);
}

}  // namespace ftip::cascade
