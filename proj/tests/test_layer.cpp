#include <doctest.h>

#include <cmath>

#include "dsdgp/errors.hpp"
#include "dsdgp/layer.hpp"
#include "dsdgp/rng.hpp"
#include "helpers.hpp"

using namespace dsdgp;

namespace {

// Brute-force marginal posterior with explicit inverses: for each point,
//   mean_d = m_d(x) + k(Z,x)^T K^{-1} (q_mu_d - m_d(Z))
//   var_d  = k(x,x) - k(Z,x)^T K^{-1} (K - S_d) K^{-1} k(Z,x),
// with K = k(Z,Z) including any same-set noise and the cross terms plain.
struct MarginalOracle {
  Mat mean, var;
};
MarginalOracle marginal_oracle(const GPLayer& layer, const Mat& x) {
  const Mat& z = layer.z();
  const RbfArdKernel& base = kernel_base(layer.kernel());
  const double variance = base.variance();
  const Vec ls = base.lengthscales();
  const double noise =
      kernel_is_noisy(layer.kernel()) ? std::get<NoisyKernel>(layer.kernel()).noise_variance()
                                      : 0.0;

  Mat kzz = testutil::rbf_gram_oracle(z, z, variance, ls);
  kzz.diagonal().array() += noise;
  Mat kinv = kzz.inverse();
  Mat kzx = testutil::rbf_gram_oracle(z, x, variance, ls);
  Mat mz = layer.mean_fn().eval(z);
  Mat mx = layer.mean_fn().eval(x);

  MarginalOracle out;
  out.mean.resize(x.rows(), layer.d_out());
  out.var.resize(x.rows(), layer.d_out());
  for (Eigen::Index d = 0; d < layer.d_out(); ++d) {
    Mat l = layer.q_sqrt(d).m;
    Mat s = l * l.transpose();
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      Vec kx = kzx.col(i);
      Vec alpha = kinv * kx;
      out.mean(i, d) = mx(i, d) + alpha.dot(layer.q_mu().col(d) - mz.col(d));
      out.var(i, d) = variance + noise - alpha.dot((kzz - s) * alpha);
    }
  }
  return out;
}

GPLayer random_layer(RngStream& rng, Eigen::Index m, Eigen::Index d_in, Eigen::Index d_out,
                     bool noisy, bool linear_mean) {
  Mat z = rng.normal_matrix(m, d_in);
  Vec ls = (rng.normal_matrix(d_in, 1).array() * 0.2 + 1.1).abs().matrix();
  KernelVariant kernel;
  if (noisy)
    kernel = NoisyKernel::create(RbfArdKernel::create(1.4, ls), 0.05);
  else
    kernel = RbfArdKernel::create(1.4, ls);
  MeanFunction mean = linear_mean ? MeanFunction::linear(rng.normal_matrix(d_in, d_out))
                                  : MeanFunction::zero(d_out);
  GPLayer layer(std::move(z), std::move(kernel), std::move(mean), d_out);
  layer.q_mu() = 0.7 * rng.normal_matrix(m, d_out);
  for (Eigen::Index d = 0; d < d_out; ++d) {
    Mat u = 0.3 * rng.normal_matrix(m, m);
    u.diagonal() = (-0.8 + 0.3 * rng.normal_matrix(m, 1).array()).matrix();
    layer.q_sqrt_unconstrained(d) = u.triangularView<Eigen::Lower>();
  }
  return layer;
}

}  // namespace

TEST_CASE("prior recovery: q at the prior reproduces mean and kernel variance") {
  RngStream rng(51);
  Mat z = rng.normal_matrix(6, 2);
  KernelVariant kernel = RbfArdKernel::create(1.3, 0.9, 2);
  Mat w = rng.normal_matrix(2, 1);
  GPLayer layer(z, kernel, MeanFunction::linear(w), 1);

  // q_mu = m(Z), S = k(Z,Z).
  layer.q_mu() = z * w;
  Mat kzz = gram(kernel, z, z, true);
  auto chol = cholesky_with_jitter(kzz, 1e-10);
  REQUIRE(chol.jitter == 0.0);
  layer.set_q_sqrt(0, chol.l);

  Mat x = rng.normal_matrix(9, 2);
  MarginalGaussians mg = layer.marginal_posterior(x);
  CHECK((mg.mean - x * w).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((mg.variance.array() - 1.3).abs().maxCoeff() < 1e-10);
}

TEST_CASE("interpolation at inducing inputs when S shrinks to zero") {
  RngStream rng(52);
  Mat z = rng.normal_matrix(5, 1);
  GPLayer layer(z, KernelVariant(RbfArdKernel::create(2.0, 1.0, 1)), MeanFunction::zero(1), 1);
  layer.q_mu() = rng.normal_matrix(5, 1);
  Mat u = Mat::Zero(5, 5);
  u.diagonal().setConstant(0.5 * std::log(1e-12));  // S = 1e-12 I
  layer.q_sqrt_unconstrained(0) = u;

  MarginalGaussians mg = layer.marginal_posterior(z);
  CHECK((mg.mean - layer.q_mu()).cwiseAbs().maxCoeff() < 1e-5);
  CHECK(mg.variance.maxCoeff() < 1e-5);
  CHECK(mg.variance.minCoeff() > 0.0);
}

TEST_CASE("marginal posterior matches the explicit-inverse oracle") {
  RngStream rng(53);
  for (bool noisy : {false, true}) {
    GPLayer layer = random_layer(rng, 3, 2, 2, noisy, true);
    Mat x = rng.normal_matrix(5, 2);
    MarginalGaussians mg = layer.marginal_posterior(x);
    MarginalOracle ref = marginal_oracle(layer, x);
    CHECK((mg.mean - ref.mean).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((mg.variance - ref.var).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(mg.variance.minCoeff() > 0.0);
  }
}

TEST_CASE("full-covariance consistency on a small instance") {
  // The diagonal of the full conditional covariance (explicit inverses)
  // must match the per-point variance path.
  RngStream rng(54);
  GPLayer layer = random_layer(rng, 4, 2, 1, false, false);
  Mat x = rng.normal_matrix(8, 2);

  const RbfArdKernel& base = kernel_base(layer.kernel());
  Mat kzz = testutil::rbf_gram_oracle(layer.z(), layer.z(), base.variance(), base.lengthscales());
  Mat kzx = testutil::rbf_gram_oracle(layer.z(), x, base.variance(), base.lengthscales());
  Mat kxx = testutil::rbf_gram_oracle(x, x, base.variance(), base.lengthscales());
  Mat kinv = kzz.inverse();
  Mat l = layer.q_sqrt(0).m;
  Mat s = l * l.transpose();
  Mat alpha = kinv * kzx;
  Mat full_cov = kxx - alpha.transpose() * (kzz - s) * alpha;

  MarginalGaussians mg = layer.marginal_posterior(x);
  CHECK((full_cov.diagonal() - mg.variance.col(0)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("marginal locality: permutation and append leave rows unchanged") {
  RngStream rng(55);
  GPLayer layer = random_layer(rng, 4, 2, 2, true, true);
  Mat x = rng.normal_matrix(6, 2);
  MarginalGaussians base = layer.marginal_posterior(x);

  std::vector<int> perm{3, 0, 5, 1, 4, 2};
  Mat xp(6, 2);
  for (int i = 0; i < 6; ++i) xp.row(i) = x.row(perm[i]);
  MarginalGaussians permuted = layer.marginal_posterior(xp);
  for (int i = 0; i < 6; ++i) {
    CHECK((permuted.mean.row(i) - base.mean.row(perm[i])).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((permuted.variance.row(i) - base.variance.row(perm[i])).cwiseAbs().maxCoeff() <= 1e-12);
  }

  Mat extended(8, 2);
  extended.topRows(6) = x;
  extended.bottomRows(2) = rng.normal_matrix(2, 2);
  MarginalGaussians ext = layer.marginal_posterior(extended);
  CHECK((ext.mean.topRows(6) - base.mean).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((ext.variance.topRows(6) - base.variance).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("sample_through at eps = 0 and eps = 1") {
  RngStream rng(56);
  GPLayer layer = random_layer(rng, 4, 1, 1, false, false);
  Mat x = rng.normal_matrix(7, 1);
  MarginalGaussians mg = layer.marginal_posterior(x);

  Mat zero_eps = Mat::Zero(7, 1);
  CHECK((layer.sample_through(x, zero_eps) - mg.mean).cwiseAbs().maxCoeff() < 1e-14);

  Mat one_eps = Mat::Ones(7, 1);
  Mat expected = mg.mean + mg.variance.cwiseSqrt();
  CHECK((layer.sample_through(x, one_eps) - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("sample_through empirical moments match the marginals") {
  RngStream rng(57);
  GPLayer layer = random_layer(rng, 4, 1, 1, false, false);
  Mat x = rng.normal_matrix(3, 1);
  MarginalGaussians mg = layer.marginal_posterior(x);

  const int s = 100000;
  Mat sum = Mat::Zero(3, 1), sum2 = Mat::Zero(3, 1);
  // One marginal evaluation, then the reparameterized draws by hand; this
  // follows the sampler's definition exactly but averages over 1e5 draws.
  Mat sd = mg.variance.cwiseSqrt();
  for (int i = 0; i < s; ++i) {
    Mat eps = rng.normal_matrix(3, 1);
    Mat draw = mg.mean + eps.cwiseProduct(sd);
    sum += draw;
    sum2 += draw.cwiseProduct(draw);
  }
  Mat emp_mean = sum / s;
  Mat emp_var = sum2 / s - emp_mean.cwiseProduct(emp_mean);
  for (int i = 0; i < 3; ++i) {
    const double se_mean = sd(i, 0) / std::sqrt(double(s));
    const double se_var = mg.variance(i, 0) * std::sqrt(2.0 / s);
    CHECK(std::abs(emp_mean(i, 0) - mg.mean(i, 0)) < 3 * se_mean);
    CHECK(std::abs(emp_var(i, 0) - mg.variance(i, 0)) < 3 * se_var);
  }

  // And the sampler itself at fixed eps reproduces one such draw.
  Mat eps = rng.normal_matrix(3, 1);
  Mat via_layer = layer.sample_through(x, eps);
  Mat direct = mg.mean + eps.cwiseProduct(sd);
  CHECK((via_layer - direct).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("KL is zero at the prior") {
  RngStream rng(58);
  Mat z = rng.normal_matrix(5, 2);
  KernelVariant kernel = RbfArdKernel::create(1.2, 1.0, 2);
  Mat w = rng.normal_matrix(2, 2);
  GPLayer layer(z, kernel, MeanFunction::linear(w), 2);
  layer.q_mu() = z * w;
  auto chol = cholesky_with_jitter(gram(kernel, z, z, true), 1e-10);
  REQUIRE(chol.jitter == 0.0);
  layer.set_q_sqrt(0, chol.l);
  layer.set_q_sqrt(1, chol.l);
  CHECK(std::abs(layer.kl_to_prior()) < 1e-9);
}

TEST_CASE("KL scalar hand case equals one half") {
  // M=1, k(z,z)=1, m(Z)=0, q_mu=1, S=1:
  // 0.5 [tr(1) + 1 - 1 + log 1 - log 1] = 0.5.
  Mat z = Mat::Zero(1, 1);
  GPLayer layer(z, KernelVariant(RbfArdKernel::create(1.0, 1.0, 1)), MeanFunction::zero(1), 1);
  layer.q_mu() = Mat::Ones(1, 1);
  layer.q_sqrt_unconstrained(0) = Mat::Zero(1, 1);  // S = 1
  CHECK(layer.kl_to_prior() == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("KL nonnegative over random layer states") {
  RngStream rng(59);
  for (int trial = 0; trial < 200; ++trial) {
    GPLayer layer = random_layer(rng, 3, 2, 1, trial % 2 == 1, false);
    CHECK(layer.kl_to_prior() >= -1e-10);
  }
}

TEST_CASE("KL invariant under simultaneous inducing reorder") {
  RngStream rng(60);
  GPLayer layer = random_layer(rng, 4, 2, 1, false, false);
  // Make S denseSPD for a nontrivial permutation check.
  Mat l0 = layer.q_sqrt(0).m;
  Mat s = l0 * l0.transpose();
  const double kl_base = layer.kl_to_prior();

  std::vector<int> perm{2, 0, 3, 1};
  Mat zp(4, 2), qp(4, 1), sp(4, 4);
  for (int i = 0; i < 4; ++i) {
    zp.row(i) = layer.z().row(perm[i]);
    qp.row(i) = layer.q_mu().row(perm[i]);
    for (int j = 0; j < 4; ++j) sp(i, j) = s(perm[i], perm[j]);
  }
  GPLayer permuted(zp, layer.kernel(), MeanFunction::zero(1), 1);
  permuted.q_mu() = qp;
  auto sp_chol = cholesky_with_jitter(sp, 1e-12);
  REQUIRE(sp_chol.jitter == 0.0);
  permuted.set_q_sqrt(0, sp_chol.l);
  CHECK(permuted.kl_to_prior() == doctest::Approx(kl_base).epsilon(1e-9));
}

TEST_CASE("layer gradients pass finite differences") {
  RngStream rng(61);
  GPLayer layer = random_layer(rng, 3, 2, 2, true, true);
  Mat x = rng.normal_matrix(4, 2);
  Mat eps = rng.normal_matrix(4, 2);

  std::vector<ParamRef> params;
  layer.collect_params(params, "layer");

  SUBCASE("marginal posterior statistics") {
    auto objective = [&](Tape& t, Binder& b) {
      auto ctx = layer.build_ctx(t, b);
      auto m = layer.marginal_graph(t, ctx, t.constant(x));
      return add(sum(m.mean), scale(sum(m.var), 0.7));
    };
    Tape t;
    Binder b(t, params, true);
    GradientTape tape = t.backward(objective(t, b));
    auto eval = [&]() {
      Tape t2;
      Binder b2(t2, params, false);
      return objective(t2, b2).value()(0, 0);
    };
    testutil::check_gradients(params, eval, tape, 1e-5, 1e-4);
  }

  SUBCASE("fixed-noise sampler output") {
    auto objective = [&](Tape& t, Binder& b) {
      auto ctx = layer.build_ctx(t, b);
      auto m = layer.marginal_graph(t, ctx, t.constant(x));
      Expr sample = add(m.mean, hadamard(t.constant(eps), cw_sqrt(m.var)));
      return sum(cw_square(sample));
    };
    Tape t;
    Binder b(t, params, true);
    GradientTape tape = t.backward(objective(t, b));
    auto eval = [&]() {
      Tape t2;
      Binder b2(t2, params, false);
      return objective(t2, b2).value()(0, 0);
    };
    testutil::check_gradients(params, eval, tape, 1e-5, 1e-4);
  }

  SUBCASE("KL term") {
    auto objective = [&](Tape& t, Binder& b) {
      auto ctx = layer.build_ctx(t, b);
      return layer.kl_graph(t, ctx);
    };
    Tape t;
    Binder b(t, params, true);
    GradientTape tape = t.backward(objective(t, b));
    auto eval = [&]() {
      Tape t2;
      Binder b2(t2, params, false);
      return objective(t2, b2).value()(0, 0);
    };
    testutil::check_gradients(params, eval, tape, 1e-5, 1e-4);
  }
}

TEST_CASE("layer validates input dimensions") {
  RngStream rng(62);
  GPLayer layer = random_layer(rng, 3, 2, 1, false, false);
  CHECK_THROWS_AS(layer.marginal_posterior(Mat::Ones(4, 3)), DimensionMismatch);
  CHECK_THROWS_AS(layer.sample_through(Mat::Ones(4, 2), Mat::Ones(3, 1)), DimensionMismatch);
}
