#include "ftip/nn/network.hpp"

#include "ftip/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ftip::nn {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::flatten: return "flatten";
    case LayerKind::fc: return "fc";
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string& name) {
  for (auto k : {LayerKind::conv, LayerKind::relu, LayerKind::maxpool,
                 LayerKind::flatten, LayerKind::fc})
    if (name == to_string(k)) return k;
  throw std::invalid_argument("unknown layer kind '" + name + "'");
}

LayerSpec LayerSpec::conv(int out_channels, int kernel_size, int stride,
                          int padding) {
  LayerSpec l;
  l.kind = LayerKind::conv;
  l.out_channels = out_channels;
  l.kernel_size = kernel_size;
  l.stride = stride;
  l.padding = padding;
  return l;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::maxpool(int window, int stride) {
  LayerSpec l;
  l.kind = LayerKind::maxpool;
  l.window = window;
  l.stride = stride;
  return l;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec l;
  l.kind = LayerKind::flatten;
  return l;
}

LayerSpec LayerSpec::fc(int out_features) {
  LayerSpec l;
  l.kind = LayerKind::fc;
  l.out_features = out_features;
  return l;
}

std::optional<int> conv_output_extent(int extent, int kernel, int stride,
                                      int padding) {
  const int span = extent + 2 * padding - kernel;
  if (span < 0 || stride < 1) return std::nullopt;
  return span / stride + 1;
}

std::vector<Extent3> propagate_shapes(const NetworkSpec& spec) {
  const auto& in = spec.input;
  if (in.channels < 1 || in.height < 1 || in.width < 1)
    throw ShapeError(-1, "input extents must be >= 1");
  std::vector<Extent3> shapes{in};
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const int idx = static_cast<int>(i);
    const auto& l = spec.layers[i];
    Extent3 cur = shapes.back();
    switch (l.kind) {
      case LayerKind::conv: {
        if (l.out_channels < 1 || l.kernel_size < 1 || l.stride < 1 ||
            l.padding < 0)
          throw ShapeError(idx, "conv needs out_channels, kernel, stride >= 1 "
                                "and padding >= 0");
        auto h = conv_output_extent(cur.height, l.kernel_size, l.stride,
                                    l.padding);
        auto w = conv_output_extent(cur.width, l.kernel_size, l.stride,
                                    l.padding);
        if (!h || !w)
          throw ShapeError(idx, "conv kernel " + std::to_string(l.kernel_size) +
                                    " does not fit input " +
                                    std::to_string(cur.height) + "x" +
                                    std::to_string(cur.width));
        cur = {l.out_channels, *h, *w};
        break;
      }
      case LayerKind::maxpool: {
        if (l.window < 1 || l.stride < 1)
          throw ShapeError(idx, "maxpool needs window, stride >= 1");
        auto h = conv_output_extent(cur.height, l.window, l.stride, 0);
        auto w = conv_output_extent(cur.width, l.window, l.stride, 0);
        if (!h || !w)
          throw ShapeError(idx, "maxpool window " + std::to_string(l.window) +
                                    " does not fit input " +
                                    std::to_string(cur.height) + "x" +
                                    std::to_string(cur.width));
        cur = {cur.channels, *h, *w};
        break;
      }
      case LayerKind::relu:
        break;
      case LayerKind::flatten:
        cur = {static_cast<int>(cur.size()), 1, 1};
        break;
      case LayerKind::fc:
        if (l.out_features < 1)
          throw ShapeError(idx, "fc needs out_features >= 1");
        cur = {l.out_features, 1, 1};
        break;
    }
    shapes.push_back(cur);
  }
  return shapes;
}

void validate(const NetworkSpec& spec) {
  if (spec.output_dim < 1) throw ShapeError(-1, "output_dim must be >= 1");
  propagate_shapes(spec);
  auto last_fc = std::find_if(spec.layers.rbegin(), spec.layers.rend(),
                              [](const LayerSpec& l) {
                                return l.kind == LayerKind::fc;
                              });
  if (last_fc == spec.layers.rend())
    throw ShapeError(-1, "network has no fc layer");
  if (last_fc != spec.layers.rbegin())
    throw ShapeError(static_cast<int>(spec.layers.size()) - 1,
                     "network must end with an fc layer");
  if (last_fc->out_features != spec.output_dim)
    throw ShapeError(static_cast<int>(spec.layers.size()) - 1,
                     "final fc has " + std::to_string(last_fc->out_features) +
                         " outputs, spec declares " +
                         std::to_string(spec.output_dim));
}

NetworkSpec make_cascade_net(int input_size, int output_dim,
                             std::vector<int> channels,
                             std::vector<int> hidden) {
  NetworkSpec spec;
  spec.input = {3, input_size, input_size};
  for (int c : channels) {
    spec.layers.push_back(LayerSpec::conv(c, 3, 1, 1));
    spec.layers.push_back(LayerSpec::relu());
    spec.layers.push_back(LayerSpec::maxpool(2, 2));
  }
  spec.layers.push_back(LayerSpec::flatten());
  for (int h : hidden) {
    spec.layers.push_back(LayerSpec::fc(h));
    spec.layers.push_back(LayerSpec::relu());
  }
  spec.layers.push_back(LayerSpec::fc(output_dim));
  spec.output_dim = output_dim;
  validate(spec);
  return spec;
}

std::vector<ParameterShape> parameter_shapes(const NetworkSpec& spec) {
  const auto shapes = propagate_shapes(spec);
  std::vector<ParameterShape> out;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    const int idx = static_cast<int>(i);
    if (l.kind == LayerKind::conv) {
      out.push_back({idx, "weight",
                     {l.out_channels, shapes[i].channels, l.kernel_size,
                      l.kernel_size}});
      out.push_back({idx, "bias", {l.out_channels}});
    } else if (l.kind == LayerKind::fc) {
      out.push_back({idx, "weight", {l.out_features, shapes[i].size()}});
      out.push_back({idx, "bias", {l.out_features}});
    }
  }
  return out;
}

template <typename Scalar>
Eigen::Index NetworkWeights<Scalar>::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

template <typename Scalar>
NetworkWeights<Scalar> NetworkWeights<Scalar>::zeros_like() const {
  NetworkWeights out;
  for (const auto& l : layers)
    out.layers.push_back(
        {Matrix<Scalar>::Zero(l.weight.rows(), l.weight.cols()),
         Vector<Scalar>::Zero(l.bias.size())});
  return out;
}

template <typename Scalar>
void check_weights(const NetworkSpec& spec,
                   const NetworkWeights<Scalar>& weights) {
  if (weights.layers.size() != spec.layers.size())
    throw ShapeError(-1, "weights have " +
                             std::to_string(weights.layers.size()) +
                             " layers, spec has " +
                             std::to_string(spec.layers.size()));
  const auto shapes = propagate_shapes(spec);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    const auto& p = weights.layers[i];
    Eigen::Index rows = 0, cols = 0;
    if (l.kind == LayerKind::conv) {
      rows = l.out_channels;
      cols = Eigen::Index{shapes[i].channels} * l.kernel_size * l.kernel_size;
    } else if (l.kind == LayerKind::fc) {
      rows = l.out_features;
      cols = shapes[i].size();
    }
    if (p.weight.rows() != rows || p.weight.cols() != cols ||
        p.bias.size() != rows)
      throw ShapeError(static_cast<int>(i),
                       "parameter shape mismatch: expected weight " +
                           std::to_string(rows) + "x" + std::to_string(cols) +
                           ", got " + std::to_string(p.weight.rows()) + "x" +
                           std::to_string(p.weight.cols()));
  }
}

template <typename Scalar>
NetworkWeights<Scalar> init_weights(const NetworkSpec& spec, double scale,
                                    std::uint64_t seed) {
  validate(spec);
  const auto shapes = propagate_shapes(spec);
  Rng rng = Rng::stream(seed, "init");
  NetworkWeights<Scalar> w;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    LayerParams<Scalar> p;
    Eigen::Index rows = 0, cols = 0;
    if (l.kind == LayerKind::conv) {
      rows = l.out_channels;
      cols = Eigen::Index{shapes[i].channels} * l.kernel_size * l.kernel_size;
    } else if (l.kind == LayerKind::fc) {
      rows = l.out_features;
      cols = shapes[i].size();
    }
    if (rows > 0) {
      const double a = scale / std::sqrt(static_cast<double>(cols));
      p.weight.resize(rows, cols);
      // Row-major fill so the draw order matches the serialized layout.
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
          p.weight(r, c) = static_cast<Scalar>(rng.uniform(-a, a));
      p.bias = Vector<Scalar>::Zero(rows);
    }
    w.layers.push_back(std::move(p));
  }
  return w;
}

namespace {

template <typename Scalar>
void im2col_strided(const Scalar* in, const Extent3& e, const LayerSpec& l,
                    int out_h, int out_w, Scalar* col,
                    Eigen::Index row_stride) {
  const int k = l.kernel_size, s = l.stride, pad = l.padding;
  for (int c = 0; c < e.channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        Scalar* dst = col + ((Eigen::Index{c} * k + ky) * k + kx) * row_stride;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * s - pad + ky;
          Scalar* row = dst + Eigen::Index{oy} * out_w;
          if (iy < 0 || iy >= e.height) {
            std::fill(row, row + out_w, Scalar(0));
            continue;
          }
          const Scalar* src = in + (Eigen::Index{c} * e.height + iy) * e.width;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * s - pad + kx;
            row[ox] = (ix < 0 || ix >= e.width) ? Scalar(0) : src[ix];
          }
        }
      }
}

template <typename Scalar>
void col2im_strided(const Scalar* col, Eigen::Index row_stride,
                    const Extent3& e, const LayerSpec& l, int out_h, int out_w,
                    Scalar* in) {
  const int k = l.kernel_size, s = l.stride, pad = l.padding;
  for (int c = 0; c < e.channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const Scalar* src = col + ((Eigen::Index{c} * k + ky) * k + kx) * row_stride;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * s - pad + ky;
          if (iy < 0 || iy >= e.height) continue;
          const Scalar* row = src + Eigen::Index{oy} * out_w;
          Scalar* dst = in + (Eigen::Index{c} * e.height + iy) * e.width;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * s - pad + kx;
            if (ix >= 0 && ix < e.width) dst[ix] += row[ox];
          }
        }
      }
}

// Activations are (sample_size x N) column-major matrices: one column per
// sample, each column a row-major CHW block.
template <typename Scalar>
struct Trace {
  std::vector<Matrix<Scalar>> acts;  // acts[i] is the input of layer i
  std::vector<std::vector<std::int32_t>> argmax;
};

template <typename Scalar>
void run_forward(const NetworkSpec& spec, const NetworkWeights<Scalar>& w,
                 const std::vector<Extent3>& shapes, Matrix<Scalar> input,
                 Trace<Scalar>& trace) {
  const Eigen::Index n = input.cols();
  trace.acts.clear();
  trace.acts.reserve(spec.layers.size() + 1);
  trace.acts.push_back(std::move(input));
  trace.argmax.assign(spec.layers.size(), {});
  RowMatrix<Scalar> col;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    const Extent3& ie = shapes[i];
    const Extent3& oe = shapes[i + 1];
    const Matrix<Scalar>& x = trace.acts.back();
    Matrix<Scalar> y;
    switch (l.kind) {
      case LayerKind::conv: {
        // One GEMM for the whole batch: columns of `col` are grouped by sample.
        const Eigen::Index plane = Eigen::Index{oe.height} * oe.width;
        col.resize(w.layers[i].weight.cols(), plane * n);
        for (Eigen::Index s = 0; s < n; ++s)
          im2col_strided(x.col(s).data(), ie, l, oe.height, oe.width,
                         col.data() + s * plane, plane * n);
        RowMatrix<Scalar> out = w.layers[i].weight * col;
        out.colwise() += w.layers[i].bias;
        y.resize(oe.size(), n);
        for (Eigen::Index s = 0; s < n; ++s)
          Eigen::Map<RowMatrix<Scalar>>(y.col(s).data(), oe.channels, plane) =
              out.middleCols(s * plane, plane);
        break;
      }
      case LayerKind::relu:
        y = x.cwiseMax(Scalar(0));
        break;
      case LayerKind::maxpool: {
        y.resize(oe.size(), n);
        auto& am = trace.argmax[i];
        am.resize(static_cast<std::size_t>(oe.size() * n));
        for (Eigen::Index s = 0; s < n; ++s) {
          const Scalar* src = x.col(s).data();
          Scalar* dst = y.col(s).data();
          std::int32_t* arg = am.data() + s * oe.size();
          for (int c = 0; c < oe.channels; ++c)
            for (int oy = 0; oy < oe.height; ++oy)
              for (int ox = 0; ox < oe.width; ++ox) {
                // First maximum in row-major window order wins ties.
                const int y0 = oy * l.stride, x0 = ox * l.stride;
                std::int32_t best = (c * ie.height + y0) * ie.width + x0;
                Scalar best_v = src[best];
                for (int wy = 0; wy < l.window; ++wy) {
                  const std::int32_t row = (c * ie.height + y0 + wy) * ie.width;
                  for (int wx = 0; wx < l.window; ++wx) {
                    const std::int32_t idx = row + x0 + wx;
                    if (src[idx] > best_v) {
                      best_v = src[idx];
                      best = idx;
                    }
                  }
                }
                const auto o = (c * oe.height + oy) * oe.width + ox;
                dst[o] = best_v;
                arg[o] = best;
              }
        }
        break;
      }
      case LayerKind::flatten:
        y = x;
        break;
      case LayerKind::fc:
        y.noalias() = w.layers[i].weight * x;
        y.colwise() += w.layers[i].bias;
        break;
    }
    trace.acts.push_back(std::move(y));
  }
}

template <typename Scalar>
NetworkWeights<Scalar> run_backward(const NetworkSpec& spec,
                                    const NetworkWeights<Scalar>& w,
                                    const std::vector<Extent3>& shapes,
                                    const Trace<Scalar>& trace,
                                    Matrix<Scalar> grad) {
  NetworkWeights<Scalar> g = w.zeros_like();
  RowMatrix<Scalar> col, dcol;
  for (std::size_t i = spec.layers.size(); i-- > 0;) {
    const auto& l = spec.layers[i];
    const Extent3& ie = shapes[i];
    const Extent3& oe = shapes[i + 1];
    const Matrix<Scalar>& x = trace.acts[i];
    const Eigen::Index n = x.cols();
    const bool need_input_grad = i > 0;
    Matrix<Scalar> gin;
    switch (l.kind) {
      case LayerKind::conv: {
        const Eigen::Index plane = Eigen::Index{oe.height} * oe.width;
        const auto& wt = w.layers[i].weight;
        col.resize(wt.cols(), plane * n);
        RowMatrix<Scalar> gout(oe.channels, plane * n);
        for (Eigen::Index s = 0; s < n; ++s) {
          im2col_strided(x.col(s).data(), ie, l, oe.height, oe.width,
                         col.data() + s * plane, plane * n);
          gout.middleCols(s * plane, plane) =
              Eigen::Map<const RowMatrix<Scalar>>(grad.col(s).data(),
                                                  oe.channels, plane);
        }
        g.layers[i].weight.noalias() = gout * col.transpose();
        g.layers[i].bias = gout.rowwise().sum();
        if (need_input_grad) {
          dcol.noalias() = wt.transpose() * gout;
          gin = Matrix<Scalar>::Zero(ie.size(), n);
          for (Eigen::Index s = 0; s < n; ++s)
            col2im_strided(dcol.data() + s * plane, plane * n, ie, l, oe.height,
                           oe.width, gin.col(s).data());
        }
        break;
      }
      case LayerKind::relu:
        gin = (trace.acts[i + 1].array() > Scalar(0))
                  .select(grad, Scalar(0));
        break;
      case LayerKind::maxpool: {
        gin = Matrix<Scalar>::Zero(ie.size(), n);
        const auto& am = trace.argmax[i];
        for (Eigen::Index s = 0; s < n; ++s) {
          const std::int32_t* arg = am.data() + s * oe.size();
          for (Eigen::Index o = 0; o < oe.size(); ++o)
            gin(arg[o], s) += grad(o, s);
        }
        break;
      }
      case LayerKind::flatten:
        gin = std::move(grad);
        break;
      case LayerKind::fc:
        g.layers[i].weight.noalias() = grad * x.transpose();
        g.layers[i].bias = grad.rowwise().sum();
        if (need_input_grad) gin.noalias() = w.layers[i].weight.transpose() * grad;
        break;
    }
    grad = std::move(gin);
  }
  return g;
}

template <typename Scalar>
Matrix<Scalar> batch_matrix(const NetworkSpec& spec,
                            const Tensor<Scalar>& batch) {
  const auto& in = spec.input;
  const Shape expected{batch.rank() >= 1 ? batch.extent(0) : 0, in.channels,
                       in.height, in.width};
  if (batch.shape() != expected)
    throw ShapeError(0, "batch shape " + shape_string(batch.shape()) +
                            " does not match network input " +
                            shape_string(expected));
  return batch.samples();
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> forward(const NetworkSpec& spec,
                       const NetworkWeights<Scalar>& weights,
                       const Tensor<Scalar>& batch) {
  validate(spec);
  check_weights(spec, weights);
  const auto shapes = propagate_shapes(spec);
  Trace<Scalar> trace;
  run_forward(spec, weights, shapes, batch_matrix(spec, batch), trace);
  Matrix<Scalar>& out = trace.acts.back();
  const Eigen::Index n = out.cols();
  return Tensor<Scalar>({n, spec.output_dim},
                        Eigen::Map<Vector<Scalar>>(out.data(), out.size()));
}

template <typename Scalar>
LossAndGrad<Scalar> loss_and_grad(const NetworkSpec& spec,
                                  const NetworkWeights<Scalar>& weights,
                                  const Tensor<Scalar>& batch,
                                  const Tensor<Scalar>& targets) {
  validate(spec);
  check_weights(spec, weights);
  const auto shapes = propagate_shapes(spec);
  const Eigen::Index n = batch.rank() >= 1 ? batch.extent(0) : 0;
  if (targets.shape() != Shape{n, spec.output_dim})
    throw ShapeError(static_cast<int>(spec.layers.size()) - 1,
                     "targets shape " + shape_string(targets.shape()) +
                         " does not match " +
                         shape_string({n, spec.output_dim}));
  Trace<Scalar> trace;
  run_forward(spec, weights, shapes, batch_matrix(spec, batch), trace);
  const Matrix<Scalar> residual = trace.acts.back() - targets.samples();
  LossAndGrad<Scalar> out;
  out.loss = residual.squaredNorm() / static_cast<Scalar>(n);
  if (!std::isfinite(static_cast<double>(out.loss)))
    throw NonFiniteLoss("non-finite loss");
  out.grads = run_backward(spec, weights, shapes, trace,
                           Matrix<Scalar>(residual * (Scalar(2) / Scalar(n))));
  return out;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0))  // lr 0 is allowed: a frozen run
    throw std::invalid_argument("learning_rate must be >= 0");
  if (!(momentum >= 0 && momentum < 1))
    throw std::invalid_argument("momentum must be in [0, 1)");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (!(weight_init_scale > 0))
    throw std::invalid_argument("weight_init_scale must be > 0");
}

template <typename Scalar>
void sgd_step(NetworkWeights<Scalar>& weights,
              const NetworkWeights<Scalar>& grads, const TrainConfig& config,
              NetworkWeights<Scalar>& velocity) {
  if (grads.layers.size() != weights.layers.size() ||
      velocity.layers.size() != weights.layers.size())
    throw ShapeError(-1, "sgd_step: layer count mismatch");
  const auto mu = static_cast<Scalar>(config.momentum);
  const auto lr = static_cast<Scalar>(config.learning_rate);
  for (std::size_t i = 0; i < weights.layers.size(); ++i) {
    auto& w = weights.layers[i];
    auto& v = velocity.layers[i];
    const auto& g = grads.layers[i];
    if (g.weight.rows() != w.weight.rows() ||
        g.weight.cols() != w.weight.cols() ||
        v.weight.rows() != w.weight.rows() ||
        v.weight.cols() != w.weight.cols() || g.bias.size() != w.bias.size() ||
        v.bias.size() != w.bias.size())
      throw ShapeError(static_cast<int>(i), "sgd_step: shape mismatch");
    v.weight = mu * v.weight - lr * g.weight;
    v.bias = mu * v.bias - lr * g.bias;
    w.weight += v.weight;
    w.bias += v.bias;
  }
}

template <typename Scalar>
double grad_check(const NetworkSpec& spec, std::uint64_t seed,
                  int batch_size) {
  auto weights = init_weights<Scalar>(spec, 2.449489742783178, seed);
  Rng rng = Rng::stream(seed, "grad_check");
  // Non-zero biases so relu kinks are not aligned with zero inputs.
  for (auto& l : weights.layers)
    for (Eigen::Index i = 0; i < l.bias.size(); ++i)
      l.bias[i] = static_cast<Scalar>(rng.uniform(-0.1, 0.1));
  const auto& in = spec.input;
  Tensor<Scalar> batch({batch_size, in.channels, in.height, in.width});
  for (Eigen::Index i = 0; i < batch.size(); ++i)
    batch[i] = static_cast<Scalar>(rng.uniform(-1, 1));
  Tensor<Scalar> targets({batch_size, spec.output_dim});
  for (Eigen::Index i = 0; i < targets.size(); ++i)
    targets[i] = static_cast<Scalar>(rng.uniform(-1, 1));

  const auto analytic = loss_and_grad(spec, weights, batch, targets).grads;
  const Matrix<double> target_rows = targets.samples().template cast<double>();
  // Forward-only loss, reduced in double so the difference quotient is not
  // dominated by rounding of the loss itself.
  auto loss_at = [&]() {
    const auto pred = forward(spec, weights, batch);
    return (pred.samples().template cast<double>() - target_rows)
               .squaredNorm() /
           static_cast<double>(batch_size);
  };
  const Scalar h = finite_difference_step<Scalar>();
  auto numeric_grad = [&](Scalar& param) {
    const Scalar saved = param;
    param = saved + h;
    const double up = loss_at();
    param = saved - h;
    const double down = loss_at();
    param = saved;
    // Use the step actually represented, not the nominal one.
    return (up - down) / (double(saved + h) - double(saved - h));
  };
  auto tensor_error = [](const Vector<double>& a, const Vector<double>& n) {
    const double denom = std::max(a.norm(), n.norm());
    return denom > 0 ? (a - n).norm() / denom : 0.0;
  };

  double worst = 0;
  for (std::size_t li = 0; li < weights.layers.size(); ++li) {
    auto& l = weights.layers[li];
    const auto& g = analytic.layers[li];
    if (l.empty()) continue;
    Vector<double> a = Eigen::Map<const Vector<Scalar>>(g.weight.data(), g.weight.size())
                           .template cast<double>();
    Vector<double> n(l.weight.size());
    for (Eigen::Index i = 0; i < l.weight.size(); ++i)
      n[i] = numeric_grad(l.weight.data()[i]);
    worst = std::max(worst, tensor_error(a, n));
    a = g.bias.template cast<double>();
    n.resize(l.bias.size());
    for (Eigen::Index i = 0; i < l.bias.size(); ++i)
      n[i] = numeric_grad(l.bias.data()[i]);
    worst = std::max(worst, tensor_error(a, n));
  }
  return worst;
}

#define FTIP_INSTANTIATE(S)                                                   \
  template struct NetworkWeights<S>;                                          \
  template void check_weights(const NetworkSpec&, const NetworkWeights<S>&);  \
  template NetworkWeights<S> init_weights<S>(const NetworkSpec&, double,      \
                                             std::uint64_t);                  \
  template Tensor<S> forward(const NetworkSpec&, const NetworkWeights<S>&,    \
                             const Tensor<S>&);                               \
  template LossAndGrad<S> loss_and_grad(const NetworkSpec&,                   \
                                        const NetworkWeights<S>&,             \
                                        const Tensor<S>&, const Tensor<S>&);  \
  template void sgd_step(NetworkWeights<S>&, const NetworkWeights<S>&,        \
                         const TrainConfig&, NetworkWeights<S>&);             \
  template double grad_check<S>(const NetworkSpec&, std::uint64_t, int);

FTIP_INSTANTIATE(float)
FTIP_INSTANTIATE(double)

#undef FTIP_INSTANTIATE

}  // namespace ftip::nn
