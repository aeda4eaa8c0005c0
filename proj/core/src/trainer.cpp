#include "dsdgp/trainer.hpp"

#include <cmath>
#include <numeric>

#include "dsdgp/errors.hpp"
#include "dsdgp/kmeans.hpp"

namespace dsdgp {

namespace {

// Substream ids for the two stochasticity sources of the training loop.
constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kSamplingStream = 2;

}  // namespace

void Adam::step(const std::vector<ParamRef>& params, const GradientTape& tape) {
  if (tape.names.size() != params.size())
    throw UnregisteredParameter("adam: tape and parameter list sizes differ");
  if (m_.empty()) {
    names_.reserve(params.size());
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const ParamRef& p : params) {
      names_.push_back(p.name);
      m_.push_back(Mat::Zero(p.value->rows(), p.value->cols()));
      v_.push_back(Mat::Zero(p.value->rows(), p.value->cols()));
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (tape.names[i] != params[i].name || tape.names[i] != names_[i])
      throw UnregisteredParameter("adam: parameter '" + params[i].name +
                                  "' does not match tape entry '" + tape.names[i] + "'");
    const Mat& g = tape.grads[i];
    Mat& m = m_[i];
    Mat& v = v_[i];
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    // Ascent on the objective.
    params[i].value->array() +=
        cfg_.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg_.epsilon);
  }
}

std::vector<TraceRow> train(DGPModel& model, const Mat& x_train, const Mat& y_train,
                            const TrainConfig& cfg, RngStream& rng) {
  if (cfg.iterations < 1) throw InvalidInput("train: iterations must be >= 1");
  const Eigen::Index n = x_train.rows();
  const Eigen::Index batch = std::min<Eigen::Index>(cfg.minibatch, n);
  if (batch < 1) throw InvalidInput("train: minibatch must be >= 1");

  RngStream shuffle_rng = rng.substream(kShuffleStream);
  RngStream eps_rng = rng.substream(kSamplingStream);
  RngEps eps(eps_rng);

  auto params = model.parameters();
  Adam adam(cfg.adam);

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Eigen::Index pos = n;  // forces a shuffle on the first step

  std::vector<Mat> snapshot;
  snapshot.reserve(params.size());
  for (const ParamRef& p : params) snapshot.push_back(*p.value);
  bool have_snapshot = false;

  std::vector<TraceRow> trace;
  Mat x_batch(batch, x_train.cols());
  Mat y_batch(batch, y_train.cols());
  std::vector<int> rows(static_cast<std::size_t>(batch));

  for (long step = 1; step <= cfg.iterations; ++step) {
    if (pos + batch > n) {
      shuffle_rng.shuffle(order);
      pos = 0;
    }
    for (Eigen::Index i = 0; i < batch; ++i) {
      const int r = order[static_cast<std::size_t>(pos + i)];
      rows[static_cast<std::size_t>(i)] = r;
      x_batch.row(i) = x_train.row(r);
      y_batch.row(i) = y_train.row(r);
    }
    pos += batch;

    ElboEstimate est;
    GradientTape tape;
    bool finite = true;
    try {
      std::tie(est, tape) = model.elbo_with_gradients(x_batch, y_batch, eps, rows, cfg.mc_samples);
    } catch (const Error&) {
      finite = false;
    }
    if (finite) finite = std::isfinite(est.value);

    if (!finite) {
      if (have_snapshot)
        for (std::size_t i = 0; i < params.size(); ++i) *params[i].value = snapshot[i];
      throw NonFiniteLoss("train: non-finite objective at step " + std::to_string(step) +
                              "; parameters restored to the last finite state",
                          step);
    }

    for (std::size_t i = 0; i < params.size(); ++i) snapshot[i] = *params[i].value;
    have_snapshot = true;

    adam.step(params, tape);

    if (step == 1 || step % cfg.trace_every == 0 || step == cfg.iterations)
      trace.push_back({step, est.value, est.data_fit, est.kl_sum});
  }
  return trace;
}

DGPModel initialize(const Mat& x_train, const Mat& y_train, int n_layers, Eigen::Index n_inducing,
                    LikelihoodKind likelihood_kind, RngStream& rng) {
  if (n_layers < 1) throw InvalidInput("initialize: need at least one layer");
  if (x_train.rows() != y_train.rows()) throw DimensionMismatch("initialize: x/y rows differ");
  const Eigen::Index d0 = x_train.cols();
  const Eigen::Index d_inner = std::min<Eigen::Index>(30, d0);
  const Eigen::Index d_y =
      likelihood_kind == LikelihoodKind::kBernoulliProbit ? 1 : y_train.cols();

  constexpr double kKernelInit = 2.0;       // variance and lengthscales
  constexpr double kInterLayerNoise = 1e-5; // sigma_l^2
  constexpr double kLikNoise = 0.01;        // sigma_n^2
  constexpr double kInnerScale = 1e-5;      // inner-layer covariance scale

  RngStream kmeans_rng = rng.substream(0);
  Mat z_running = kmeans(x_train, n_inducing, kmeans_rng);
  Mat x_running = x_train;

  std::vector<GPLayer> layers;
  layers.reserve(static_cast<std::size_t>(n_layers));
  for (int l = 0; l < n_layers; ++l) {
    const bool final_layer = l == n_layers - 1;
    const Eigen::Index d_in = z_running.cols();
    const Eigen::Index d_out = final_layer ? d_y : d_inner;

    KernelVariant kernel;
    MeanFunction mean = MeanFunction::zero(d_out);
    if (final_layer) {
      kernel = RbfArdKernel::create(kKernelInit, kKernelInit, d_in);
    } else {
      kernel = NoisyKernel::create(RbfArdKernel::create(kKernelInit, kKernelInit, d_in),
                                   kInterLayerNoise);
      mean = build_inner_mean(x_running, d_out);
    }

    GPLayer layer(z_running, std::move(kernel), mean, d_out);
    if (!final_layer) {
      for (Eigen::Index d = 0; d < d_out; ++d)
        layer.q_sqrt_unconstrained(d).diagonal().setConstant(0.5 * std::log(kInnerScale));
      // Propagate inducing inputs and data through the fixed mean map so
      // deeper layers start on the initial function's image.
      x_running = mean.eval(x_running);
      z_running = mean.eval(z_running);
    }
    layers.push_back(std::move(layer));
  }

  Likelihood lik = likelihood_kind == LikelihoodKind::kGaussian
                       ? Likelihood::gaussian(kLikNoise)
                       : Likelihood::bernoulli_probit();
  return DGPModel(std::move(layers), std::move(lik), x_train.rows());
}

}  // namespace dsdgp
