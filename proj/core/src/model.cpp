#include "dsdgp/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dsdgp/errors.hpp"

namespace dsdgp {

namespace {

std::vector<int> iota_rows(Eigen::Index n) {
  std::vector<int> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

}  // namespace

double log_mean_exp(const Vec& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;  // all -inf stays -inf
  return m + std::log((v.array() - m).exp().mean());
}

Mat TableEps::draw(int sample, int layer, std::span<const int> rows, Eigen::Index cols) {
  const auto& per_layer = tables_.at(static_cast<std::size_t>(sample));
  const Mat& full = per_layer.at(static_cast<std::size_t>(layer));
  if (full.cols() != cols) throw DimensionMismatch("TableEps: table width mismatch");
  Mat out(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = full.row(rows[i]);
  return out;
}

DGPModel::DGPModel(std::vector<GPLayer> layers, Likelihood likelihood, Eigen::Index num_data)
    : layers_(std::move(layers)), likelihood_(std::move(likelihood)), num_data_(num_data) {
  if (layers_.empty()) throw InvalidInput("DGPModel: at least one layer is required");
  for (std::size_t l = 1; l < layers_.size(); ++l)
    if (layers_[l].d_in() != layers_[l - 1].d_out())
      throw DimensionMismatch("DGPModel: layer " + std::to_string(l) +
                              " input dim != previous layer output dim");
}

std::vector<ParamRef> DGPModel::parameters() {
  std::vector<ParamRef> out;
  for (std::size_t l = 0; l < layers_.size(); ++l)
    layers_[l].collect_params(out, "layer" + std::to_string(l));
  likelihood_.collect_params(out);
  return out;
}

std::vector<Mat> DGPModel::propagate(const Mat& x, RngStream& rng) const {
  RngEps eps(rng);
  auto rows = iota_rows(x.rows());
  return propagate(x, eps, rows);
}

std::vector<Mat> DGPModel::propagate(const Mat& x, EpsSource& eps, std::span<const int> rows) const {
  if (x.cols() != input_dim()) throw DimensionMismatch("propagate: input dim mismatch");
  std::vector<Mat> samples;
  samples.reserve(layers_.size());
  Mat current = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Mat e = eps.draw(0, static_cast<int>(l), rows, layers_[l].d_out());
    current = layers_[l].sample_through(current, e);
    samples.push_back(current);
  }
  return samples;
}

ElboEstimate DGPModel::elbo(const Mat& x_batch, const Mat& y_batch, RngStream& rng,
                            int mc_samples) const {
  RngEps eps(rng);
  auto rows = iota_rows(x_batch.rows());
  return elbo(x_batch, y_batch, eps, rows, mc_samples);
}

ElboEstimate DGPModel::elbo(const Mat& x_batch, const Mat& y_batch, EpsSource& eps,
                            std::span<const int> rows, int mc_samples) const {
  // Value-only path: same graph as the gradient path, with constant leaves.
  auto params = const_cast<DGPModel*>(this)->parameters();
  Tape t;
  Binder b(t, params, /*track_gradients=*/false);
  auto [est, root] = build_elbo_graph(t, b, x_batch, y_batch, eps, rows, mc_samples);
  (void)root;
  return est;
}

std::pair<ElboEstimate, GradientTape> DGPModel::elbo_with_gradients(const Mat& x_batch,
                                                                    const Mat& y_batch,
                                                                    EpsSource& eps,
                                                                    std::span<const int> rows,
                                                                    int mc_samples) {
  auto params = parameters();
  Tape t;
  Binder b(t, params, /*track_gradients=*/true);
  auto [est, root] = build_elbo_graph(t, b, x_batch, y_batch, eps, rows, mc_samples);
  return {est, t.backward(root)};
}

std::pair<ElboEstimate, Expr> DGPModel::build_elbo_graph(Tape& t, Binder& b, const Mat& x_batch,
                                                         const Mat& y_batch, EpsSource& eps,
                                                         std::span<const int> rows,
                                                         int mc_samples) const {
  if (x_batch.cols() != input_dim()) throw DimensionMismatch("elbo: input dim mismatch");
  if (y_batch.rows() != x_batch.rows()) throw DimensionMismatch("elbo: x/y row counts differ");
  if (y_batch.cols() != output_dim()) throw DimensionMismatch("elbo: target dim mismatch");
  if (mc_samples < 1) throw InvalidInput("elbo: mc_samples must be >= 1");
  if (static_cast<Eigen::Index>(rows.size()) != x_batch.rows())
    throw DimensionMismatch("elbo: row index count != batch size");

  const std::size_t n_layers = layers_.size();
  std::vector<GPLayer::Ctx> ctxs;
  ctxs.reserve(n_layers);
  for (const GPLayer& layer : layers_) ctxs.push_back(layer.build_ctx(t, b));

  Expr x0 = t.constant(x_batch);
  Expr data_fit_acc{};
  for (int s = 0; s < mc_samples; ++s) {
    Expr current = x0;
    for (std::size_t l = 0; l + 1 < n_layers; ++l) {
      auto marg = layers_[l].marginal_graph(t, ctxs[l], current);
      Mat e = eps.draw(s, static_cast<int>(l), rows, layers_[l].d_out());
      current = add(marg.mean, hadamard(t.constant(e), cw_sqrt(marg.var)));
    }
    auto final_marg = layers_.back().marginal_graph(t, ctxs.back(), current);
    Expr ell = likelihood_.expected_ll_sum_graph(t, b, final_marg.mean, final_marg.var, y_batch);
    data_fit_acc = s == 0 ? ell : add(data_fit_acc, ell);
  }

  const double scale_factor = static_cast<double>(num_data_) /
                              (static_cast<double>(x_batch.rows()) * mc_samples);
  Expr data_fit = scale(data_fit_acc, scale_factor);

  Expr kl_total{};
  for (std::size_t l = 0; l < n_layers; ++l) {
    Expr kl = layers_[l].kl_graph(t, ctxs[l]);
    kl_total = l == 0 ? kl : add(kl_total, kl);
  }

  Expr root = sub(data_fit, kl_total);
  ElboEstimate est;
  est.value = root.value()(0, 0);
  est.data_fit = data_fit.value()(0, 0);
  est.kl_sum = kl_total.value()(0, 0);
  est.samples_used = mc_samples;
  if (!std::isfinite(est.value) || !std::isfinite(est.data_fit) || !std::isfinite(est.kl_sum))
    throw Error("elbo: non-finite estimate");
  return {est, root};
}

std::vector<std::pair<Mat, Mat>> DGPModel::predict_components(const Mat& x_star, EpsSource& eps,
                                                              int s_pred) const {
  if (s_pred < 1) throw InvalidInput("predict: s_pred must be >= 1");
  if (x_star.cols() != input_dim()) throw DimensionMismatch("predict: input dim mismatch");
  auto params = const_cast<DGPModel*>(this)->parameters();
  Tape t;
  Binder b(t, params, /*track_gradients=*/false);
  std::vector<GPLayer::Ctx> ctxs;
  ctxs.reserve(layers_.size());
  for (const GPLayer& layer : layers_) ctxs.push_back(layer.build_ctx(t, b));

  auto rows = iota_rows(x_star.rows());
  Expr x0 = t.constant(x_star);
  std::vector<std::pair<Mat, Mat>> components;
  components.reserve(static_cast<std::size_t>(s_pred));
  for (int s = 0; s < s_pred; ++s) {
    Expr current = x0;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
      auto marg = layers_[l].marginal_graph(t, ctxs[l], current);
      Mat e = eps.draw(s, static_cast<int>(l), rows, layers_[l].d_out());
      current = add(marg.mean, hadamard(t.constant(e), cw_sqrt(marg.var)));
    }
    auto final_marg = layers_.back().marginal_graph(t, ctxs.back(), current);
    components.emplace_back(final_marg.mean.value(), final_marg.var.value());
  }
  return components;
}

Vec DGPModel::predict_density(const Mat& x_star, const Mat& y_star, RngStream& rng,
                              int s_pred) const {
  RngEps eps(rng);
  return predict_density(x_star, y_star, eps, s_pred);
}

Vec DGPModel::predict_density(const Mat& x_star, const Mat& y_star, EpsSource& eps,
                              int s_pred) const {
  if (y_star.rows() != x_star.rows()) throw DimensionMismatch("predict_density: x/y rows differ");
  auto components = predict_components(x_star, eps, s_pred);
  const Eigen::Index n = x_star.rows();
  Mat per_component(n, s_pred);
  for (int s = 0; s < s_pred; ++s)
    per_component.col(s) = likelihood_.component_log_density(components[static_cast<std::size_t>(s)].first,
                                                             components[static_cast<std::size_t>(s)].second,
                                                             y_star);
  Vec out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = log_mean_exp(per_component.row(i).transpose());
  return out;
}

void DGPModel::predict_moments(const Mat& x_star, RngStream& rng, int s_pred, Mat& mean_out,
                               Mat& var_out) const {
  RngEps eps(rng);
  predict_moments(x_star, eps, s_pred, mean_out, var_out);
}

void DGPModel::predict_moments(const Mat& x_star, EpsSource& eps, int s_pred, Mat& mean_out,
                               Mat& var_out) const {
  auto components = predict_components(x_star, eps, s_pred);
  std::tie(mean_out, var_out) = mixture_moments(components);
  if (likelihood_.kind() == LikelihoodKind::kGaussian)
    var_out.array() += likelihood_.noise_variance();
}

std::pair<Mat, Mat> DGPModel::mixture_moments(const std::vector<std::pair<Mat, Mat>>& components) {
  if (components.empty()) throw InvalidInput("mixture_moments: no components");
  const double s = static_cast<double>(components.size());
  Mat mean = Mat::Zero(components[0].first.rows(), components[0].first.cols());
  Mat var_sum = mean;
  for (const auto& [m, v] : components) {
    mean += m;
    var_sum += v;
  }
  mean /= s;
  // Centered spread term; identical components contribute exactly zero.
  Mat spread = Mat::Zero(mean.rows(), mean.cols());
  for (const auto& [m, v] : components) {
    Mat d = m - mean;
    spread += d.cwiseProduct(d);
  }
  Mat var = (var_sum + spread) / s;
  return {std::move(mean), std::move(var)};
}

}  // namespace dsdgp
