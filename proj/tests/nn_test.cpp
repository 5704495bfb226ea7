#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ftip/nn/network.hpp"
#include "ftip/nn/serialize.hpp"
#include "ftip/random.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace ftip::nn;

namespace {

NetworkSpec single(LayerSpec layer, Extent3 in, int out_dim) {
  NetworkSpec s;
  s.input = in;
  s.layers = {layer};
  s.output_dim = out_dim;
  return s;
}

// Direct (nested-loop) convolution used as an oracle for the im2col path.
Tensorf direct_conv(const Tensorf& x, const Matrix<float>& w,
                    const Vector<float>& b, int k, int stride, int pad) {
  const int c = int(x.extent(1)), h = int(x.extent(2)), wd = int(x.extent(3));
  const int oc = int(w.rows());
  const int oh = (h + 2 * pad - k) / stride + 1;
  const int ow = (wd + 2 * pad - k) / stride + 1;
  Tensorf y({x.extent(0), oc, oh, ow});
  for (Eigen::Index n = 0; n < x.extent(0); ++n)
    for (int o = 0; o < oc; ++o)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = b[o];
          for (int ci = 0; ci < c; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                if (iy < 0 || ix < 0 || iy >= h || ix >= wd) continue;
                acc += double(w(o, (ci * k + ky) * k + kx)) *
                       x[((n * c + ci) * h + iy) * wd + ix];
              }
          y[((n * oc + o) * oh + oy) * ow + ox] = float(acc);
        }
  return y;
}

}  // namespace

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensorf({2, 0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensorf({2, 2}, Vector<float>::Zero(3)), std::invalid_argument);
  Tensorf t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.samples().rows() == 3);
  CHECK(t.samples().cols() == 2);
}

TEST_CASE("shape algebra") {
  CHECK(conv_output_extent(112, 3, 1, 1) == 112);
  CHECK(conv_output_extent(227, 11, 4, 0) == 55);
  CHECK(conv_output_extent(7, 2, 2, 0) == 3);
  CHECK_FALSE(conv_output_extent(2, 5, 1, 0).has_value());

  auto spec = make_cascade_net(112, 4);
  auto shapes = propagate_shapes(spec);
  CHECK(shapes.back() == Extent3{4, 1, 1});
  // 112 / 2^5 = 3 after five pools
  CHECK(shapes[15] == Extent3{128, 3, 3});

  try {
    make_cascade_net(16, 2, {4, 4, 4, 4, 4}, {});
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(e.layer_index() == 14);  // fifth pool on a 1x1 plane
  }

  NetworkSpec wrong_out = make_cascade_net(32, 4, {4}, {8});
  wrong_out.output_dim = 2;
  CHECK_THROWS_AS(validate(wrong_out), ShapeError);
}

TEST_CASE("relu, maxpool and identity conv") {
  auto relu_net = single(LayerSpec::relu(), {1, 1, 3}, 3);
  relu_net.layers.push_back(LayerSpec::fc(3));
  NetworkWeights<float> w;
  w.layers.resize(2);
  w.layers[1].weight = Matrix<float>::Identity(3, 3);
  w.layers[1].bias = Vector<float>::Zero(3);
  Tensorf x({1, 1, 1, 3});
  x.data() << -1, 0, 2;
  auto y = forward(relu_net, w, x);
  CHECK(y[0] == 0.0f);
  CHECK(y[1] == 0.0f);
  CHECK(y[2] == 2.0f);

  NetworkSpec pool;
  pool.input = {1, 2, 2};
  pool.layers = {LayerSpec::maxpool(2, 2), LayerSpec::fc(1)};
  pool.output_dim = 1;
  NetworkWeights<float> pw;
  pw.layers.resize(2);
  pw.layers[1].weight = Matrix<float>::Ones(1, 1);
  pw.layers[1].bias = Vector<float>::Zero(1);
  Tensorf px({1, 1, 2, 2});
  px.data() << 1, 2, 3, 4;
  CHECK(forward(pool, pw, px)[0] == 4.0f);

  NetworkSpec conv;
  conv.input = {1, 3, 3};
  conv.layers = {LayerSpec::conv(1, 1), LayerSpec::fc(9)};
  conv.output_dim = 9;
  NetworkWeights<float> cw;
  cw.layers.resize(2);
  cw.layers[0].weight = Matrix<float>::Ones(1, 1);
  cw.layers[0].bias = Vector<float>::Zero(1);
  cw.layers[1].weight = Matrix<float>::Identity(9, 9);
  cw.layers[1].bias = Vector<float>::Zero(9);
  Tensorf cx({1, 1, 3, 3});
  for (int i = 0; i < 9; ++i) cx[i] = float(i) - 4.5f;
  auto cy = forward(conv, cw, cx);
  CHECK(cy.data() == cx.data());
}

TEST_CASE("conv forward matches direct convolution") {
  ftip::Rng rng(7);
  for (auto [k, s, p] : {std::tuple{3, 1, 1}, {3, 2, 0}, {5, 2, 2}, {2, 1, 0}}) {
    NetworkSpec spec;
    spec.input = {2, 7, 6};
    spec.layers = {LayerSpec::conv(3, k, s, p), LayerSpec::flatten()};
    auto shapes = propagate_shapes(spec);
    const int feat = int(shapes.back().size());
    spec.layers.push_back(LayerSpec::fc(feat));
    spec.output_dim = feat;
    auto w = init_weights<float>(spec, 1.0, 3);
    w.layers[0].bias.setRandom();
    w.layers[2].weight = Matrix<float>::Identity(feat, feat);
    Tensorf x({2, 2, 7, 6});
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = float(rng.uniform(-1, 1));
    auto y = forward(spec, w, x);
    auto ref = direct_conv(x, w.layers[0].weight, w.layers[0].bias, k, s, p);
    REQUIRE(ref.size() == y.size());
    CHECK((y.data() - ref.data()).cwiseAbs().maxCoeff() < 1e-5f);
  }
}

TEST_CASE("batch shape mismatch names layer 0") {
  auto spec = make_cascade_net(32, 4, {4}, {8});
  auto w = init_weights<float>(spec, 1.0, 1);
  try {
    forward(spec, w, Tensorf({1, 3, 16, 32}));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(e.layer_index() == 0);
  }
}

TEST_CASE("loss and gradient: zero residual and scalar quadratic") {
  NetworkSpec lin;
  lin.input = {1, 1, 1};
  lin.layers = {LayerSpec::fc(1)};
  lin.output_dim = 1;
  NetworkWeights<double> w;
  w.layers.resize(1);
  w.layers[0].weight = Matrix<double>::Constant(1, 1, 1.5);
  w.layers[0].bias = Vector<double>::Zero(1);
  Tensord x({1, 1, 1, 1});
  x[0] = 2.0;
  Tensord t({1, 1});
  t[0] = 1.0;
  auto lg = loss_and_grad(lin, w, x, t);
  // (wx - t)^2 = (3 - 1)^2, d/dw = 2 (wx - t) x = 8
  CHECK(lg.loss == doctest::Approx(4.0));
  CHECK(lg.grads.layers[0].weight(0, 0) == doctest::Approx(8.0));
  CHECK(lg.grads.layers[0].bias[0] == doctest::Approx(4.0));

  t[0] = 3.0;
  auto zero = loss_and_grad(lin, w, x, t);
  CHECK(zero.loss == 0.0);
  CHECK(zero.grads.layers[0].weight(0, 0) == 0.0);
  CHECK(zero.grads.layers[0].bias[0] == 0.0);

  CHECK_THROWS_AS(loss_and_grad(lin, w, x, Tensord({1, 2})), ShapeError);
}

TEST_CASE("loss is non-negative and non-finite values are reported") {
  auto spec = make_cascade_net(16, 2, {4, 4}, {8});
  auto w = init_weights<float>(spec, 2.0, 11);
  ftip::Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    Tensorf x({3, 3, 16, 16}), t({3, 2});
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = float(rng.uniform(-1, 1));
    for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = float(rng.uniform(-1, 1));
    CHECK(loss_and_grad(spec, w, x, t).loss >= 0.0f);
  }
  Tensorf x({1, 3, 16, 16}), t({1, 2});
  x[0] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(loss_and_grad(spec, w, x, t), NonFiniteLoss);
}

TEST_CASE("sgd step") {
  NetworkWeights<float> w, g, v;
  w.layers = {{Matrix<float>::Constant(1, 1, 1.0f), Vector<float>::Zero(1)}};
  g.layers = {{Matrix<float>::Constant(1, 1, 2.0f), Vector<float>::Zero(1)}};
  v = w.zeros_like();
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.0;
  sgd_step(w, g, cfg, v);
  CHECK(w.layers[0].weight(0, 0) == doctest::Approx(0.8));

  // zero gradient, zero velocity: fixed point
  auto g0 = w.zeros_like();
  auto before = w.layers[0].weight(0, 0);
  sgd_step(w, g0, cfg, v = w.zeros_like());
  CHECK(w.layers[0].weight(0, 0) == before);

  // momentum 0.9: the second step is lr * g * (1 + 0.9)
  cfg.momentum = 0.9;
  v = w.zeros_like();
  const float w0 = w.layers[0].weight(0, 0);
  sgd_step(w, g, cfg, v);
  const float w1 = w.layers[0].weight(0, 0);
  sgd_step(w, g, cfg, v);
  const float w2 = w.layers[0].weight(0, 0);
  CHECK(w0 - w1 == doctest::Approx(0.2));
  CHECK(w1 - w2 == doctest::Approx(0.1 * 2.0 * 1.9));

  NetworkWeights<float> bad;
  bad.layers = {{Matrix<float>::Zero(2, 1), Vector<float>::Zero(2)}};
  CHECK_THROWS_AS(sgd_step(w, bad, cfg, v), ShapeError);
}

TEST_CASE("gradient check") {
  NetworkSpec tiny;
  tiny.input = {2, 6, 6};
  tiny.layers = {LayerSpec::conv(3, 3, 1, 1), LayerSpec::relu(),
                 LayerSpec::flatten(), LayerSpec::fc(2)};
  tiny.output_dim = 2;
  const double e32 = grad_check<float>(tiny, 1);
  CHECK(e32 < 1e-2);
  CHECK(grad_check<float>(tiny, 1) == e32);
  CHECK(grad_check<double>(tiny, 1) < 1e-5);

  NetworkSpec linear;
  linear.input = {1, 2, 3};
  linear.layers = {LayerSpec::fc(2)};
  linear.output_dim = 2;
  CHECK(grad_check<float>(linear, 4) < 1e-4);
  CHECK(grad_check<double>(linear, 4) < 1e-8);

  NetworkSpec pooled = make_cascade_net(12, 4, {3, 4}, {5});
  CHECK(grad_check<float>(pooled, 9) < 1e-2);
  CHECK(grad_check<double>(pooled, 9) < 1e-5);
}

TEST_CASE("forward is deterministic") {
  auto spec = make_cascade_net(32, 4, {8, 8}, {16});
  auto w = init_weights<float>(spec, 2.0, 21);
  Tensorf x({4, 3, 32, 32});
  ftip::Rng rng(1);
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = float(rng.uniform());
  CHECK(forward(spec, w, x).data() == forward(spec, w, x).data());
  auto w2 = init_weights<float>(spec, 2.0, 21);
  CHECK(w2.layers[0].weight == w.layers[0].weight);
}

TEST_CASE("weights file round trip and corruption") {
  namespace fs = std::filesystem;
  auto spec = make_cascade_net(24, 4, {4, 8}, {16});
  auto w = init_weights<float>(spec, 2.0, 99);
  w.layers[0].bias.setConstant(0.125f);
  const fs::path path = fs::temp_directory_path() / "ftip_nn_test.cdw";
  save_weights(spec, w, path);
  auto back = load_weights(path);
  CHECK(back.spec == spec);
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    CHECK(back.weights.layers[i].weight == w.layers[i].weight);
    CHECK(back.weights.layers[i].bias == w.layers[i].bias);
  }

  const std::string bytes = encode_weights(spec, w);
  const std::string truncated = bytes.substr(0, bytes.size() - 10);
  try {
    decode_weights(truncated);
    FAIL("expected truncation error");
  } catch (const WeightsFormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("missing bytes [" + std::to_string(truncated.size())) !=
          std::string::npos);
  }
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_WITH_AS(decode_weights(bad_magic),
                       doctest::Contains("not a weights file"),
                       WeightsFormatError);
  CHECK_THROWS_AS(decode_weights(bytes + "x"), WeightsFormatError);
  fs::remove(path);
}
