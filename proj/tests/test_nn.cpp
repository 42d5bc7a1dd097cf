#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "rliv/encoder.hpp"
#include "rliv/nn/adam.hpp"
#include "rliv/nn/checkpoint.hpp"
#include "rliv/nn/dense.hpp"
#include "rliv/nn/embedding.hpp"
#include "rliv/nn/grad_check.hpp"
#include "rliv/nn/loss.hpp"
#include "rliv/nn/target.hpp"

using namespace rliv;
using namespace rliv::nn;

namespace {

DenseLayer<double> layer(Mat<double> w, Mat<double> b, Activation act) {
  DenseLayer<double> l;
  l.weight = std::move(w);
  l.bias = std::move(b);
  l.activation = act;
  return l;
}

Mat<double> col(std::initializer_list<double> v) {
  Mat<double> m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

}  // namespace

TEST(DenseForward, IdentityLayer) {
  DenseNetwork<double> net({layer(Mat<double>::Identity(2, 2), Mat<double>::Zero(2, 1), Activation::identity)});
  const auto y = net.forward(col({1, 2}));
  EXPECT_EQ(y(0, 0), 1.0);
  EXPECT_EQ(y(1, 0), 2.0);
}

TEST(DenseForward, ReluClampsNegativePreactivation) {
  DenseNetwork<double> net({layer(Mat<double>::Identity(2, 2), Mat<double>::Zero(2, 1), Activation::relu)});
  const auto y = net.forward(col({-1, 3}));
  EXPECT_EQ(y(0, 0), 0.0);
  EXPECT_EQ(y(1, 0), 3.0);
}

TEST(DenseForward, TwoLayerMatchesHandComputedChain) {
  Mat<double> w1(2, 3);
  w1 << 0.5, -1.0, 2.0,
        1.5, 0.25, -0.5;
  Mat<double> w2(1, 2);
  w2 << 2.0, -3.0;
  DenseNetwork<double> net({layer(w1, col({0.1, -0.2}), Activation::relu), layer(w2, col({0.3}), Activation::identity)});
  // x = (1, 2, 3): z1 = (0.5 - 2 + 6 + 0.1, 1.5 + 0.5 - 1.5 - 0.2) = (4.6, 0.3)
  // y = 2 * 4.6 - 3 * 0.3 + 0.3 = 8.6
  EXPECT_NEAR(net.forward(col({1, 2, 3}))(0, 0), 8.6, 1e-12);
}

TEST(DenseForward, RejectsWrongInputWidth) {
  Rng rng(1);
  DenseNetwork<double> net(3, {4}, 1, rng);
  EXPECT_THROW(net.forward(Mat<double>::Zero(2, 1)), ConfigError);
}

TEST(DenseBackward, ZeroUpstreamGivesZeroGradients) {
  Rng rng(2);
  DenseNetwork<double> net(3, {5, 4}, 2, rng);
  Mat<double> x(3, 7);
  fill_uniform(x, 1.0, rng);
  DenseCache<double> cache;
  net.forward(x, cache);
  auto params = net.params();
  GradBundle<double> g(params);
  const auto gx = net.backward(Mat<double>::Zero(2, 7), cache, g.slice(0, g.size()));
  EXPECT_EQ(g.squared_norm(), 0.0);
  EXPECT_EQ(gx.squaredNorm(), 0.0);
}

TEST(DenseBackward, SingleLinearNeuron) {
  Mat<double> w(1, 1);
  w << 0.7;
  DenseNetwork<double> net({layer(w, Mat<double>::Zero(1, 1), Activation::identity)});
  DenseCache<double> cache;
  net.forward(col({3.0}), cache);
  auto params = net.params();
  GradBundle<double> g(params);
  Mat<double> gy(1, 1);
  gy << 2.0;
  const auto gx = net.backward(gy, cache, g.slice(0, g.size()));
  EXPECT_DOUBLE_EQ(g.tensors[0](0, 0), 6.0);  // grad_y * x
  EXPECT_DOUBLE_EQ(g.tensors[1](0, 0), 2.0);
  EXPECT_DOUBLE_EQ(gx(0, 0), 1.4);
}

TEST(DenseBackward, RejectsForeignCache) {
  Rng rng(3);
  DenseNetwork<double> a(2, {3}, 1, rng), b(2, {3}, 1, rng);
  DenseCache<double> cache;
  a.forward(Mat<double>::Ones(2, 1), cache);
  auto params = b.params();
  GradBundle<double> g(params);
  EXPECT_THROW(b.backward(Mat<double>::Ones(1, 1), cache, g.slice(0, g.size())), ContractError);
}

TEST(GradCheck, LinearNetIsExact) {
  Rng rng(4);
  DenseNetwork<double> net(4, {}, 3, rng);
  Mat<double> x(4, 5);
  fill_uniform(x, 1.0, rng);
  EXPECT_LT(grad_check(net, x), 1e-8);
}

TEST(GradCheck, ReluNetAwayFromKinks) {
  Rng rng(5);
  DenseNetwork<double> net(6, {16, 16}, 2, rng);
  Mat<double> x(6, 4);
  fill_uniform(x, 1.0, rng);
  ASSERT_GT(min_abs_relu_preactivation(net, x), 1e-4);  // ten times the step
  EXPECT_LT(grad_check(net, x, 1e-5, 5), 1e-4);
}

TEST(GradCheck, SigmoidOutput) {
  Rng rng(6);
  DenseNetwork<double> net(3, {8}, 2, rng, Activation::relu, Activation::sigmoid);
  Mat<double> x(3, 3);
  fill_uniform(x, 1.0, rng);
  EXPECT_LT(grad_check(net, x, 1e-5, 6), 1e-4);
}

TEST(GradCheck, EmbeddingThroughMlp) {
  Rng rng(7);
  EmbeddingTable<double> table(10, 4, rng, 0.5);
  DenseNetwork<double> net(4, {8}, 1, rng);
  const std::vector<std::int64_t> ids = {0, 3, 3, 9, 12};  // 12 falls into the shared OOV column
  auto loss = [&] {
    Mat<double> e = Mat<double>::Zero(4, 5);
    table.gather_add(ids, e);
    return net.forward(e).sum();
  };
  std::vector<Mat<double>*> params = {&table.table()};
  net.append_params(params);
  GradBundle<double> g(params);
  Mat<double> e = Mat<double>::Zero(4, 5);
  table.gather_add(ids, e);
  DenseCache<double> cache;
  net.forward(e, cache);
  const auto ge = net.backward(Mat<double>::Ones(1, 5), cache, g.slice(1, net.num_tensors()));
  table.scatter_add(ids, ge, g.tensors[0]);
  EXPECT_LT(grad_check(params, loss, g), 1e-4);
}

TEST(Huber, Examples) {
  EXPECT_EQ(huber(0.3, 0.3, 1.0).value, 0.0);
  EXPECT_DOUBLE_EQ(huber(0.5, 0.0, 1.0).value, 0.125);
  EXPECT_DOUBLE_EQ(huber(2.0, 0.0, 1.0).value, 1.5);
  EXPECT_DOUBLE_EQ(huber(-2.0, 0.0, 1.0).grad, -1.0);
  EXPECT_THROW(huber(1.0, 0.0, 0.0), ValidationError);
  EXPECT_THROW(huber(std::nan(""), 0.0), NumericError);
}

TEST(Bce, Examples) {
  EXPECT_NEAR(bce(0.0, 1).value, std::log(2.0), 1e-12);
  EXPECT_NEAR(bce(0.0, 0).value, std::log(2.0), 1e-12);
  EXPECT_NEAR(bce(20.0, 1).value, 2.0611536203143807e-9, 1e-18);
  EXPECT_NEAR(bce(-800.0, 1).value, 800.0, 1e-9);  // no overflow
  EXPECT_THROW(bce(0.0, 2), ValidationError);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Mat<double> w = Mat<double>::Constant(2, 2, 0.5);
  std::vector<Mat<double>*> p = {&w};
  AdamState<double> st(p);
  GradBundle<double> g(p);
  adam_step<double>(p, g, st, 1e-3);
  EXPECT_EQ(w, Mat<double>::Constant(2, 2, 0.5));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Mat<double> w = Mat<double>::Zero(1, 1);
  std::vector<Mat<double>*> p = {&w};
  AdamState<double> st(p);
  GradBundle<double> g(p);
  g.tensors[0](0, 0) = 1.0;
  adam_step<double>(p, g, st, 1e-3);
  EXPECT_NEAR(w(0, 0), -1e-3, 1e-11);
}

TEST(Adam, MatchesScalarReferenceOnSquare) {
  // Reference: textbook Adam on f(w) = w^2.
  double w_ref = 1.0, m = 0.0, v = 0.0;
  const double lr = 1e-2, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Mat<double> w = Mat<double>::Ones(1, 1);
  std::vector<Mat<double>*> p = {&w};
  AdamState<double> st(p);
  for (int t = 1; t <= 100; ++t) {
    const double g = 2.0 * w_ref;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    w_ref -= lr * mh / (std::sqrt(vh) + eps);

    GradBundle<double> gb(p);
    gb.tensors[0](0, 0) = 2.0 * w(0, 0);
    adam_step<double>(p, gb, st, lr);
  }
  EXPECT_NEAR(w(0, 0), w_ref, 1e-10);
}

TEST(SoftUpdate, TauOneCopies) {
  Mat<double> t = Mat<double>::Zero(2, 3), o = Mat<double>::Random(2, 3);
  std::vector<Mat<double>*> tv = {&t}, ov = {&o};
  soft_update<double>(tv, ov, 1.0);
  EXPECT_EQ(t, o);
}

TEST(SoftUpdate, SingleStepArithmetic) {
  Mat<double> t = Mat<double>::Zero(1, 1), o = Mat<double>::Ones(1, 1);
  std::vector<Mat<double>*> tv = {&t}, ov = {&o};
  soft_update<double>(tv, ov, 0.005);
  EXPECT_DOUBLE_EQ(t(0, 0), 0.005);
}

TEST(SoftUpdate, GeometricGap) {
  Mat<double> t = Mat<double>::Zero(1, 1), o = Mat<double>::Ones(1, 1);
  std::vector<Mat<double>*> tv = {&t}, ov = {&o};
  for (int n = 0; n < 1000; ++n) soft_update<double>(tv, ov, 0.005);
  EXPECT_NEAR(1.0 - t(0, 0), std::pow(0.995, 1000), 1e-12);
}

TEST(SoftUpdate, TauZeroFreezesAndOutOfRangeThrows) {
  Mat<double> t = Mat<double>::Zero(1, 1), o = Mat<double>::Ones(1, 1);
  std::vector<Mat<double>*> tv = {&t}, ov = {&o};
  soft_update<double>(tv, ov, 0.0);
  EXPECT_EQ(t(0, 0), 0.0);
  EXPECT_THROW(soft_update<double>(tv, ov, 1.5), ValidationError);
  EXPECT_THROW(soft_update<double>(tv, ov, -0.1), ValidationError);
}

TEST(ClipGlobalNorm, RescalesOnlyAboveThreshold) {
  GradBundle<double> g;
  g.tensors = {Mat<double>::Constant(1, 1, 3.0), Mat<double>::Constant(1, 1, 4.0)};
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 10.0), 5.0);
  EXPECT_DOUBLE_EQ(g.tensors[0](0, 0), 3.0);
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 1.0), 5.0);
  EXPECT_NEAR(std::sqrt(g.squared_norm()), 1.0, 1e-12);
}

TEST(Encoder, StaticBlocksIgnoreCounters) {
  StateEncoder<double> enc(Vocab{5, 2, 2, 4, 8, 3}, 6, 11);
  UAState a;
  a.user = {1, 1, 0};
  a.author = {2, 5, 1};
  UAState b = a;
  b.dynamic.click_count = 7;
  b.dynamic.cumulative_watch_seconds = 120.0;
  const std::vector<UAState> s = {a, b, a};
  const auto H = enc.encode(s);
  EXPECT_EQ(H.col(0).head(12), H.col(1).head(12));
  EXPECT_NE(H.col(0).tail(6), H.col(1).tail(6));
  EXPECT_EQ(H.col(0), H.col(2));
}

TEST(Encoder, HugeCountersStayFinite) {
  StateEncoder<float> enc(Vocab{2, 1, 1, 2, 2, 1}, 4, 12);
  UAState s;
  s.dynamic.click_count = 1'000'000;
  s.dynamic.cumulative_watch_seconds = 1e12;
  EXPECT_TRUE(enc.encode(std::span(&s, 1)).allFinite());
}

TEST(Checkpoint, RoundTripAndCorruption) {
  Checkpoint ck;
  ck.seed = 42;
  ck.header = {{"policy", "x"}};
  Mat<float> m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  ck.put_tensor("w", m);
  ck.put_bytes("blob", std::string("abc\0def", 7));
  const std::string bytes = ck.encode();
  const auto back = Checkpoint::decode(bytes);
  EXPECT_EQ(back.seed, 42u);
  EXPECT_EQ(back.header["policy"], "x");
  Mat<float> out(2, 3);
  back.get_tensor("w", out);
  EXPECT_EQ(out, m);
  EXPECT_EQ(back.get_bytes("blob"), std::string("abc\0def", 7));
  EXPECT_EQ(back.encode(), bytes);

  Mat<float> wrong(3, 2);
  EXPECT_THROW(back.get_tensor("w", wrong), IntegrityError);
  EXPECT_THROW(back.get_bytes("missing"), IntegrityError);

  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x01;
  EXPECT_THROW(Checkpoint::decode(flipped), IntegrityError);
  EXPECT_THROW(Checkpoint::decode(bytes.substr(0, bytes.size() - 3)), IntegrityError);
  EXPECT_THROW(Checkpoint::decode("not a checkpoint at all"), IntegrityError);
}
