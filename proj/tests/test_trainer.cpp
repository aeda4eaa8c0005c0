#include <doctest.h>

#include <cmath>

#include "dsdgp/errors.hpp"
#include "dsdgp/kmeans.hpp"
#include "dsdgp/trainer.hpp"
#include "helpers.hpp"

using namespace dsdgp;

TEST_CASE("adam leaves parameters alone under zero gradients") {
  Mat p = Mat::Constant(2, 2, 1.5);
  std::vector<ParamRef> params{{"p", &p}};
  GradientTape tape;
  tape.value = 0.0;
  tape.names = {"p"};
  tape.grads = {Mat::Zero(2, 2)};
  Adam adam;
  const Mat before = p;
  for (int i = 0; i < 5; ++i) adam.step(params, tape);
  CHECK((p - before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adam first step with unit gradient moves by ~lr") {
  // Bias-corrected first step: m_hat = g, v_hat = g^2, update = lr/(1+eps').
  Mat p = Mat::Zero(1, 1);
  std::vector<ParamRef> params{{"p", &p}};
  GradientTape tape;
  tape.names = {"p"};
  tape.grads = {Mat::Ones(1, 1)};
  AdamConfig cfg;
  cfg.lr = 0.01;
  Adam adam(cfg);
  adam.step(params, tape);
  CHECK(p(0, 0) == doctest::Approx(0.01 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("adam converges to lr-sized steps under a constant gradient") {
  Mat p = Mat::Zero(1, 1);
  std::vector<ParamRef> params{{"p", &p}};
  GradientTape tape;
  tape.names = {"p"};
  tape.grads = {Mat::Constant(1, 1, 3.7)};
  AdamConfig cfg;
  cfg.lr = 0.01;
  Adam adam(cfg);
  double prev = 0.0;
  double step_size = 0.0;
  for (int i = 0; i < 2000; ++i) {
    adam.step(params, tape);
    step_size = p(0, 0) - prev;
    prev = p(0, 0);
  }
  CHECK(step_size == doctest::Approx(0.01).epsilon(1e-4));
}

TEST_CASE("adam ascends the recorded objective") {
  // Maximize -(p - 3)^2 from p = 0.
  Mat p = Mat::Zero(1, 1);
  std::vector<ParamRef> params{{"p", &p}};
  Adam adam(AdamConfig{.lr = 0.05});
  for (int i = 0; i < 3000; ++i) {
    GradientTape tape = gradient_of(params, [](Tape& t, const std::vector<Expr>& pp) {
      Expr d = sub(pp[0], t.constant(Mat::Constant(1, 1, 3.0)));
      return scale(cw_square(d), -1.0);
    });
    adam.step(params, tape);
  }
  CHECK(p(0, 0) == doctest::Approx(3.0).epsilon(1e-3));
}

TEST_CASE("adam rejects mismatched tapes") {
  Mat p = Mat::Zero(1, 1);
  std::vector<ParamRef> params{{"p", &p}};
  GradientTape tape;
  tape.names = {"other"};
  tape.grads = {Mat::Zero(1, 1)};
  Adam adam;
  CHECK_THROWS_AS(adam.step(params, tape), UnregisteredParameter);
}

TEST_CASE("kmeans centroids are deterministic and well formed") {
  RngStream rng(201);
  Mat x = rng.normal_matrix(60, 2);
  RngStream a(5), b(5);
  Mat c1 = kmeans(x, 8, a);
  Mat c2 = kmeans(x, 8, b);
  CHECK((c1 - c2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(c1.rows() == 8);
  CHECK(c1.allFinite());
}

TEST_CASE("kmeans with k = n on distinct rows returns distinct centroids") {
  RngStream rng(202);
  Mat x = rng.normal_matrix(10, 2);
  RngStream seed(1);
  Mat c = kmeans(x, 10, seed);
  CHECK(c.rows() == 10);
  for (int i = 0; i < 10; ++i)
    for (int j = i + 1; j < 10; ++j)
      CHECK((c.row(i) - c.row(j)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("kmeans falls back to distinct rows and reports degenerate data") {
  Mat x(6, 1);
  x << 1, 1, 2, 2, 3, 3;  // three distinct values
  RngStream seed(2);
  Mat c = kmeans(x, 3, seed);
  CHECK(c.rows() == 3);
  CHECK_THROWS_AS(kmeans(x, 4, seed), DegenerateData);
}

TEST_CASE("initialize follows the documented protocol") {
  RngStream rng(203);
  Mat x = rng.normal_matrix(40, 8);
  Mat y = rng.normal_matrix(40, 1);

  SUBCASE("single layer") {
    RngStream seed(7);
    DGPModel m = initialize(x, y, 1, 10, LikelihoodKind::kGaussian, seed);
    REQUIRE(m.layers().size() == 1);
    const GPLayer& l = m.layers()[0];
    CHECK(l.mean_fn().is_zero());
    CHECK_FALSE(kernel_is_noisy(l.kernel()));
    CHECK(kernel_base(l.kernel()).variance() == doctest::Approx(2.0));
    CHECK((kernel_base(l.kernel()).lengthscales().array() - 2.0).abs().maxCoeff() < 1e-12);
    CHECK(l.q_mu().cwiseAbs().maxCoeff() == 0.0);
    CHECK((l.q_sqrt(0).m - Mat::Identity(10, 10)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(m.likelihood().noise_variance() == doctest::Approx(0.01));
    CHECK(m.num_data() == 40);
  }

  SUBCASE("three layers on 8-dimensional inputs") {
    RngStream seed(8);
    DGPModel m = initialize(x, y, 3, 10, LikelihoodKind::kGaussian, seed);
    REQUIRE(m.layers().size() == 3);
    // Inner widths are min(30, 8) = 8 with identity mean maps.
    CHECK(m.layers()[0].d_out() == 8);
    CHECK(m.layers()[1].d_out() == 8);
    CHECK(m.layers()[2].d_out() == 1);
    CHECK((m.layers()[0].mean_fn().w() - Mat::Identity(8, 8)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((m.layers()[1].mean_fn().w() - Mat::Identity(8, 8)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(m.layers()[2].mean_fn().is_zero());
    for (int l = 0; l < 2; ++l) {
      CHECK(kernel_is_noisy(m.layers()[static_cast<std::size_t>(l)].kernel()));
      CHECK(std::get<NoisyKernel>(m.layers()[static_cast<std::size_t>(l)].kernel()).noise_variance() ==
            doctest::Approx(1e-5));
      // Inner covariance factors are sqrt(1e-5) I.
      Mat qs = m.layers()[static_cast<std::size_t>(l)].q_sqrt(0).m;
      CHECK((qs - std::sqrt(1e-5) * Mat::Identity(10, 10)).cwiseAbs().maxCoeff() < 1e-18);
    }
    // Identity maps keep the inducing inputs equal across layers.
    CHECK((m.layers()[1].z() - m.layers()[0].z()).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("inner width caps at 30") {
    RngStream wide_rng(204);
    Mat xw = wide_rng.normal_matrix(50, 33);
    RngStream seed(9);
    DGPModel m = initialize(xw, y.topRows(50), 2, 10, LikelihoodKind::kGaussian, seed);
    CHECK(m.layers()[0].d_out() == 30);
    CHECK(m.layers()[0].mean_fn().w().rows() == 33);
    CHECK(m.layers()[0].mean_fn().w().cols() == 30);
    CHECK(m.layers()[1].d_in() == 30);
  }
}

TEST_CASE("training with lr = 0 leaves parameters bit-identical") {
  RngStream rng(205);
  Mat x = rng.normal_matrix(20, 1);
  Mat y = rng.normal_matrix(20, 1);
  RngStream seed(3);
  DGPModel m = initialize(x, y, 2, 5, LikelihoodKind::kGaussian, seed);
  auto params = m.parameters();
  std::vector<Mat> before;
  for (auto& p : params) before.push_back(*p.value);

  TrainConfig cfg;
  cfg.iterations = 25;
  cfg.adam.lr = 0.0;
  RngStream train_rng(4);
  train(m, x, y, cfg, train_rng);
  for (std::size_t i = 0; i < params.size(); ++i) {
    REQUIRE(params[i].value->rows() == before[i].rows());
    for (Eigen::Index r = 0; r < before[i].rows(); ++r)
      for (Eigen::Index c = 0; c < before[i].cols(); ++c)
        CHECK((*params[i].value)(r, c) == before[i](r, c));
  }
}

TEST_CASE("training is deterministic given the seed") {
  RngStream rng(206);
  Mat x = rng.normal_matrix(24, 2);
  Mat y = rng.normal_matrix(24, 1);

  auto run = [&]() {
    RngStream seed(10);
    DGPModel m = initialize(x, y, 2, 6, LikelihoodKind::kGaussian, seed);
    TrainConfig cfg;
    cfg.iterations = 60;
    cfg.minibatch = 8;
    cfg.trace_every = 10;
    RngStream train_rng(11);
    return train(m, x, y, cfg, train_rng);
  };
  auto t1 = run();
  auto t2 = run();
  REQUIRE(t1.size() == t2.size());
  for (std::size_t i = 0; i < t1.size(); ++i) {
    CHECK(t1[i].step == t2[i].step);
    CHECK(t1[i].elbo == t2[i].elbo);
    CHECK(t1[i].data_fit == t2[i].data_fit);
    CHECK(t1[i].kl == t2[i].kl);
  }
}

TEST_CASE("noise-free linear data trains to small RMSE") {
  // y = x on a 1-D grid; after training, de-normalized predictions should
  // be accurate to a few hundredths.
  const int n = 50;
  Mat x(n, 1), y(n, 1);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = -1.0 + 2.0 * i / (n - 1);
    y(i, 0) = x(i, 0);
  }
  RngStream seed(12);
  DGPModel m = initialize(x, y, 1, 10, LikelihoodKind::kGaussian, seed);
  TrainConfig cfg;
  cfg.iterations = 2000;
  RngStream train_rng(13);
  auto trace = train(m, x, y, cfg, train_rng);

  Mat mean, var;
  RngStream pred_rng(14);
  m.predict_moments(x, pred_rng, 10, mean, var);
  const double rmse = std::sqrt((mean - y).array().square().mean());
  CHECK(rmse < 0.05);

  // The loss trace is finite and improves over training.
  for (const TraceRow& r : trace) {
    CHECK(std::isfinite(r.elbo));
    CHECK(std::isfinite(r.data_fit));
    CHECK(std::isfinite(r.kl));
  }
  CHECK(trace.back().elbo > trace.front().elbo);
}

TEST_CASE("positivity constraints hold after optimization steps") {
  RngStream rng(207);
  Mat x = rng.normal_matrix(16, 2);
  Mat y = rng.normal_matrix(16, 1);
  RngStream seed(15);
  DGPModel m = initialize(x, y, 2, 4, LikelihoodKind::kGaussian, seed);
  TrainConfig cfg;
  cfg.iterations = 40;
  cfg.adam.lr = 0.05;
  RngStream train_rng(16);
  train(m, x, y, cfg, train_rng);

  for (const GPLayer& l : m.layers()) {
    CHECK(kernel_base(l.kernel()).variance() > 0.0);
    CHECK((kernel_base(l.kernel()).lengthscales().array() > 0.0).all());
    for (Eigen::Index d = 0; d < l.d_out(); ++d)
      CHECK((l.q_sqrt(d).m.diagonal().array() > 0.0).all());
  }
  CHECK(m.likelihood().noise_variance() > 0.0);
}
