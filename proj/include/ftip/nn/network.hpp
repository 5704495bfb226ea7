#pragma once

#include "ftip/nn/tensor.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ftip::nn {

enum class LayerKind { conv, relu, maxpool, flatten, fc };

const char* to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  // conv
  int out_channels = 0;
  int kernel_size = 0;
  int stride = 1;
  int padding = 0;
  // maxpool (stride shared with conv)
  int window = 0;
  // fc
  int out_features = 0;

  static LayerSpec conv(int out_channels, int kernel_size, int stride = 1,
                        int padding = 0);
  static LayerSpec relu();
  static LayerSpec maxpool(int window, int stride);
  static LayerSpec flatten();
  static LayerSpec fc(int out_features);

  bool has_parameters() const {
    return kind == LayerKind::conv || kind == LayerKind::fc;
  }
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Channels, height, width of one sample. After flatten or fc the activation
// is (features, 1, 1).
struct Extent3 {
  int channels = 0;
  int height = 0;
  int width = 0;

  Eigen::Index size() const {
    return Eigen::Index{channels} * height * width;
  }
  friend bool operator==(const Extent3&, const Extent3&) = default;
};

struct NetworkSpec {
  Extent3 input;
  std::vector<LayerSpec> layers;
  int output_dim = 0;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

// Thrown for any inconsistency between a spec, its weights or a batch.
// layer_index is -1 when the problem is not tied to one layer.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(int layer_index, const std::string& what)
      : std::invalid_argument(
            layer_index >= 0
                ? "layer " + std::to_string(layer_index) + ": " + what
                : what),
        layer_index_(layer_index) {}
  int layer_index() const { return layer_index_; }

 private:
  int layer_index_;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// floor((extent + 2 * padding - kernel) / stride) + 1, or nullopt when the
// result would not be a positive extent.
std::optional<int> conv_output_extent(int extent, int kernel, int stride,
                                      int padding);

// Activation extents after every layer; element 0 is the input. Throws
// ShapeError naming the first offending layer.
std::vector<Extent3> propagate_shapes(const NetworkSpec& spec);

void validate(const NetworkSpec& spec);

// Five conv blocks (conv 3x3 / relu / maxpool 2x2) with channel ladder
// 16/32/64/64/128, then fc 256 / relu / fc 128 / relu / fc output_dim.
NetworkSpec make_cascade_net(int input_size, int output_dim,
                             std::vector<int> channels = {16, 32, 64, 64, 128},
                             std::vector<int> hidden = {256, 128});

template <typename Scalar>
struct LayerParams {
  Matrix<Scalar> weight;  // conv: (out, in * k * k); fc: (out, in)
  Vector<Scalar> bias;

  bool empty() const { return weight.size() == 0; }
};

// One entry per layer of the spec; entries of parameter-free layers are empty.
template <typename Scalar>
struct NetworkWeights {
  std::vector<LayerParams<Scalar>> layers;

  Eigen::Index parameter_count() const;
  NetworkWeights zeros_like() const;

  template <typename Other>
  NetworkWeights<Other> cast() const {
    NetworkWeights<Other> out;
    for (const auto& l : layers)
      out.layers.push_back({l.weight.template cast<Other>(),
                            l.bias.template cast<Other>()});
    return out;
  }
};

// Logical parameter shapes, in storage order: conv weights are
// (out, in, k, k), fc weights are (out, in), biases are (out).
struct ParameterShape {
  int layer = 0;
  std::string name;  // "weight" or "bias"
  Shape shape;
};
std::vector<ParameterShape> parameter_shapes(const NetworkSpec& spec);

template <typename Scalar>
void check_weights(const NetworkSpec& spec,
                   const NetworkWeights<Scalar>& weights);

// Uniform in [-a, a] with a = scale / sqrt(fan_in); zero biases.
template <typename Scalar>
NetworkWeights<Scalar> init_weights(const NetworkSpec& spec, double scale,
                                    std::uint64_t seed);

template <typename Scalar>
Tensor<Scalar> forward(const NetworkSpec& spec,
                       const NetworkWeights<Scalar>& weights,
                       const Tensor<Scalar>& batch);

template <typename Scalar>
struct LossAndGrad {
  Scalar loss = 0;
  NetworkWeights<Scalar> grads;
};

// Mean over the batch of the squared Euclidean distance between prediction
// and target rows, and its gradient with respect to every parameter.
template <typename Scalar>
LossAndGrad<Scalar> loss_and_grad(const NetworkSpec& spec,
                                  const NetworkWeights<Scalar>& weights,
                                  const Tensor<Scalar>& batch,
                                  const Tensor<Scalar>& targets);

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 16;
  int epochs = 10;
  std::uint64_t seed = 1;
  double weight_init_scale = 2.449489742783178;  // sqrt(6)

  void validate() const;
};

// velocity <- momentum * velocity - lr * grads; weights <- weights + velocity
template <typename Scalar>
void sgd_step(NetworkWeights<Scalar>& weights,
              const NetworkWeights<Scalar>& grads, const TrainConfig& config,
              NetworkWeights<Scalar>& velocity);

// Worst relative discrepancy between analytic gradients and central
// differences, for random weights and a random batch. Each parameter tensor
// is compared as a whole, ||a - n|| / max(||a||, ||n||), and the maximum over
// all tensors of the network is returned.
template <typename Scalar>
double grad_check(const NetworkSpec& spec, std::uint64_t seed,
                  int batch_size = 2);

// Central-difference step used by grad_check.
template <typename Scalar>
constexpr Scalar finite_difference_step() {
  return sizeof(Scalar) == sizeof(float) ? Scalar(3e-4) : Scalar(1e-5);
}

}  // namespace ftip::nn
