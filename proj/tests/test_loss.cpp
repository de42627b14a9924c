#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <random>

#include "mtt/errors.hpp"
#include "mtt/loss.hpp"
#include "mtt/rng.hpp"

using namespace mtt::nn;
using mtt::uniform_range;
using mtt::ValidationError;

namespace {

using DTensor = TensorT<double>;

DTensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 g(seed);
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (double& x : v) x = uniform_range(g, lo, hi);
  return DTensor::from(std::move(shape), std::move(v));
}

}  // namespace

TEST_SUITE("loss") {

TEST_CASE("feature extractor is frozen, seeded and shaped as documented") {
  const LossNetwork net = make_loss_network<float>();
  REQUIRE(net.weights.size() == 4);
  CHECK(net.weights[0].shape() == Shape{16, 3, 3, 3});
  CHECK(net.weights[1].shape() == Shape{32, 16, 3, 3});
  CHECK(net.weights[2].shape() == Shape{64, 32, 3, 3});
  CHECK(net.weights[3].shape() == Shape{128, 64, 3, 3});
  for (const auto& w : net.weights) CHECK_FALSE(w.requires_grad());
  CHECK(net.content_stage == 2);
  CHECK(net.texture_stages == std::vector<int>{1, 2, 3, 4});

  const LossNetwork again = make_loss_network<float>();
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(net.weights[i].values() == again.weights[i].values());
  }
}

TEST_CASE("features halve spatially and are non-negative") {
  const LossNetwork net = make_loss_network<float>();
  std::mt19937_64 g(5);
  std::vector<float> v(static_cast<std::size_t>(1 * 3 * 32 * 32));
  for (float& x : v) x = static_cast<float>(mtt::uniform_unit(g));
  NoGradGuard ng;
  const auto feats = loss_features(net, Tensor::from({1, 3, 32, 32}, std::move(v)));
  REQUIRE(feats.size() == 4);
  CHECK(feats[0].shape() == Shape{1, 16, 16, 16});
  CHECK(feats[1].shape() == Shape{1, 32, 8, 8});
  CHECK(feats[2].shape() == Shape{1, 64, 4, 4});
  CHECK(feats[3].shape() == Shape{1, 128, 2, 2});
  for (const auto& f : feats) {
    for (float x : f.values()) CHECK(x >= 0.0f);
  }
}

TEST_CASE("content loss is half the squared feature distance") {
  const DTensor f = random_tensor({1, 4, 5, 5}, 1);
  const DTensor p = random_tensor({1, 4, 5, 5}, 2);
  double want = 0.0;
  for (long i = 0; i < f.numel(); ++i) {
    const double d = f.values()[static_cast<std::size_t>(i)] -
                     p.values()[static_cast<std::size_t>(i)];
    want += d * d;
  }
  CHECK(content_loss(f, p).item() == doctest::Approx(0.5 * want).epsilon(1e-12));
  CHECK(content_loss_mean(f, p).item() ==
        doctest::Approx(0.5 * want / static_cast<double>(f.numel())).epsilon(1e-12));
}

TEST_CASE("texture loss matches a naive gram-distance computation") {
  // Two stages with different geometry.
  const DTensor x1 = random_tensor({1, 3, 4, 4}, 3);
  const DTensor x2 = random_tensor({1, 5, 2, 2}, 4);
  const DTensor t1 = random_tensor({1, 3, 4, 4}, 5);
  const DTensor t2 = random_tensor({1, 5, 2, 2}, 6);

  auto naive_gram = [](const DTensor& x, bool normalized) {
    const int C = x.dim(1);
    const long M = static_cast<long>(x.dim(2)) * x.dim(3);
    std::vector<double> g(static_cast<std::size_t>(C) * C, 0.0);
    for (int i = 0; i < C; ++i)
      for (int j = 0; j < C; ++j) {
        double acc = 0.0;
        for (long k = 0; k < M; ++k)
          acc += x.values()[static_cast<std::size_t>(i) * M + k] *
                 x.values()[static_cast<std::size_t>(j) * M + k];
        g[static_cast<std::size_t>(i) * C + j] = normalized ? acc / (C * M) : acc;
      }
    return g;
  };

  // Literal quadratic form over unnormalized grams.
  double want = 0.0;
  for (auto [x, t] : {std::pair{&x1, &t1}, std::pair{&x2, &t2}}) {
    const auto gx = naive_gram(*x, false), gt = naive_gram(*t, false);
    for (std::size_t i = 0; i < gx.size(); ++i) want += (gx[i] - gt[i]) * (gx[i] - gt[i]);
  }
  const std::vector<DTensor> g = {gram(x1, false), gram(x2, false)};
  const std::vector<DTensor> a = {gram(t1, false), gram(t2, false)};
  CHECK(texture_loss(g, a).item() == doctest::Approx(0.5 * want).epsilon(1e-10));

  // Stage-averaged normalized variant.
  double want_mean = 0.0;
  for (auto [x, t] : {std::pair{&x1, &t1}, std::pair{&x2, &t2}}) {
    const auto gx = naive_gram(*x, true), gt = naive_gram(*t, true);
    double stage = 0.0;
    for (std::size_t i = 0; i < gx.size(); ++i) stage += (gx[i] - gt[i]) * (gx[i] - gt[i]);
    want_mean += 0.5 * stage / static_cast<double>(gx.size());
  }
  want_mean /= 2.0;
  const std::vector<DTensor> gn = {gram(x1, true), gram(x2, true)};
  const std::vector<DTensor> an = {gram(t1, true), gram(t2, true)};
  CHECK(texture_loss_mean(gn, an).item() == doctest::Approx(want_mean).epsilon(1e-10));

  CHECK_THROWS_AS(texture_loss_mean(gn, std::vector<DTensor>{}), ValidationError);
}

TEST_CASE("gram outputs are positive semidefinite across 100 instances") {
  for (int trial = 0; trial < 100; ++trial) {
    const DTensor x = random_tensor({1, 6, 4, 5}, 1000 + static_cast<std::uint64_t>(trial));
    const DTensor g = gram(x, true);
    Eigen::Matrix<double, 6, 6> m;
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j)
        m(i, j) = g.values()[static_cast<std::size_t>(i) * 6 + j];
    CHECK(m == m.transpose());  // exact symmetry
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(m);
    CHECK(es.eigenvalues().minCoeff() >= -1e-8);
  }
}

TEST_CASE("total loss combines weighted terms and rejects non-finite ones") {
  const DTensor c = DTensor::full({1}, 0.25);
  const DTensor t = DTensor::full({1}, 0.5);
  const DTensor v = DTensor::full({1}, 2.0);
  const LossWeights w{7.5, 500.0, 200.0};
  CHECK(total_loss(c, t, v, w).item() ==
        doctest::Approx(7.5 * 0.25 + 500.0 * 0.5 + 200.0 * 2.0).epsilon(1e-12));

  const DTensor bad = DTensor::full({1}, std::numeric_limits<double>::quiet_NaN());
  CHECK_THROWS_WITH_AS(total_loss(bad, t, v, w), doctest::Contains("content"), ValidationError);
  CHECK_THROWS_WITH_AS(total_loss(c, bad, v, w), doctest::Contains("texture"), ValidationError);
  const DTensor inf = DTensor::full({1}, std::numeric_limits<double>::infinity());
  CHECK_THROWS_WITH_AS(total_loss(c, t, inf, w), doctest::Contains("tv"), ValidationError);
}

TEST_CASE("training objective passes a finite-difference check end to end") {
  // Double-precision loss network on a small input, content + texture + tv.
  const LossNetworkT<double> net = make_loss_network<double>(kLossNetworkSeed, {4, 6, 8, 10});
  const DTensor target_img = random_tensor({1, 3, 16, 16}, 70, 0.0, 1.0);
  std::vector<DTensor> targets;
  {
    NoGradGuard ng;
    const auto tf = loss_features(net, target_img);
    for (int stage : net.texture_stages) {
      targets.push_back(gram(tf[static_cast<std::size_t>(stage - 1)], true));
    }
  }
  // Stage 2 of a 16x16 input: two stride-2 convs leave (1, 6, 4, 4).
  const DTensor content_ref = random_tensor({1, 6, 4, 4}, 71, 0.0, 0.5);

  auto objective = [&](const std::vector<DTensor>& in) {
    const auto feats = loss_features(net, in[0]);
    std::vector<DTensor> grams;
    for (int stage : net.texture_stages) {
      grams.push_back(gram(feats[static_cast<std::size_t>(stage - 1)], true));
    }
    const DTensor lc = content_loss_mean(feats[1], content_ref);
    const DTensor lt = texture_loss_mean(grams, targets);
    const DTensor lv = tv_loss_mean(in[0]);
    return total_loss(lc, lt, lv, LossWeights{7.5, 500.0, 200.0});
  };

  DTensor img = random_tensor({1, 3, 16, 16}, 72, 0.05, 0.95);
  img.set_requires_grad(true);
  const GradCheckResult r = gradient_check(objective, {img}, 1e-4, 120, 7);
  INFO("max rel error " << r.max_rel_error);
  CHECK(r.max_rel_error < 1e-3);
}

}  // TEST_SUITE
