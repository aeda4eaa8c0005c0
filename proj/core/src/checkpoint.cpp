#include "dsdgp/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "dsdgp/errors.hpp"

namespace dsdgp {

namespace {

using nlohmann::json;

json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat mat_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw ParseError("checkpoint: expected a non-empty matrix", 0);
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(j[0].size());
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(row.size()) != cols)
      throw ParseError("checkpoint: ragged matrix rows", 0);
    for (Eigen::Index jj = 0; jj < cols; ++jj) m(i, jj) = row[static_cast<std::size_t>(jj)];
  }
  return m;
}

// Packed row-major lower triangle (diagonal entries hold the log of the
// constrained diagonal).
json packed_lower_to_json(const Mat& u) {
  json packed = json::array();
  for (Eigen::Index i = 0; i < u.rows(); ++i)
    for (Eigen::Index j = 0; j <= i; ++j) packed.push_back(u(i, j));
  return packed;
}

Mat packed_lower_from_json(const json& j, Eigen::Index m) {
  if (static_cast<Eigen::Index>(j.size()) != m * (m + 1) / 2)
    throw ParseError("checkpoint: packed factor has wrong length", 0);
  Mat u = Mat::Zero(m, m);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index jj = 0; jj <= i; ++jj) u(i, jj) = j[k++];
  return u;
}

}  // namespace

std::string model_to_json(const DGPModel& model) {
  json doc;
  doc["format"] = "dsdgp-model";
  doc["version"] = 1;
  doc["num_data"] = static_cast<long>(model.num_data());

  const Likelihood& lik = model.likelihood();
  if (lik.kind() == LikelihoodKind::kGaussian)
    doc["likelihood"] = {{"type", "gaussian"}, {"log_variance", lik.log_noise_storage()(0, 0)}};
  else
    doc["likelihood"] = {{"type", "bernoulli_probit"}};

  json layers = json::array();
  for (const GPLayer& layer : model.layers()) {
    json jl;
    jl["d_in"] = static_cast<long>(layer.d_in());
    jl["d_out"] = static_cast<long>(layer.d_out());
    jl["num_inducing"] = static_cast<long>(layer.num_inducing());

    const RbfArdKernel& base = kernel_base(layer.kernel());
    json jk;
    jk["type"] = "rbf_ard";
    jk["log_variance"] = base.log_variance(0, 0);
    json ls = json::array();
    for (Eigen::Index d = 0; d < base.log_lengthscales.cols(); ++d)
      ls.push_back(base.log_lengthscales(0, d));
    jk["log_lengthscales"] = std::move(ls);
    if (kernel_is_noisy(layer.kernel()))
      jk["log_noise"] = std::get<NoisyKernel>(layer.kernel()).log_noise(0, 0);
    jl["kernel"] = std::move(jk);

    if (layer.mean_fn().is_zero())
      jl["mean"] = {{"type", "zero"}};
    else
      jl["mean"] = {{"type", "linear"}, {"w", mat_to_json(layer.mean_fn().w())}};

    jl["z"] = mat_to_json(layer.z());
    jl["q_mu"] = mat_to_json(layer.q_mu());
    json factors = json::array();
    for (Eigen::Index d = 0; d < layer.d_out(); ++d)
      factors.push_back(packed_lower_to_json(layer.q_sqrt_unconstrained(d)));
    jl["q_sqrt_packed_logdiag"] = std::move(factors);
    layers.push_back(std::move(jl));
  }
  doc["layers"] = std::move(layers);
  return doc.dump(2);
}

DGPModel model_from_json(const std::string& text) {
  json doc = json::parse(text);
  if (doc.value("format", "") != "dsdgp-model")
    throw ParseError("checkpoint: unrecognized format field", 0);

  std::vector<GPLayer> layers;
  for (const auto& jl : doc.at("layers")) {
    const Eigen::Index d_out = jl.at("d_out").get<long>();
    Mat z = mat_from_json(jl.at("z"));

    const auto& jk = jl.at("kernel");
    RbfArdKernel base;
    base.log_variance = Mat::Constant(1, 1, jk.at("log_variance").get<double>());
    const auto& ls = jk.at("log_lengthscales");
    base.log_lengthscales.resize(1, static_cast<Eigen::Index>(ls.size()));
    for (std::size_t d = 0; d < ls.size(); ++d)
      base.log_lengthscales(0, static_cast<Eigen::Index>(d)) = ls[d].get<double>();
    KernelVariant kernel;
    if (jk.contains("log_noise")) {
      NoisyKernel nk;
      nk.base = std::move(base);
      nk.log_noise = Mat::Constant(1, 1, jk.at("log_noise").get<double>());
      kernel = std::move(nk);
    } else {
      kernel = std::move(base);
    }

    const auto& jm = jl.at("mean");
    MeanFunction mean = jm.at("type") == "zero"
                            ? MeanFunction::zero(d_out)
                            : MeanFunction::linear(mat_from_json(jm.at("w")));

    GPLayer layer(std::move(z), std::move(kernel), std::move(mean), d_out);
    layer.q_mu() = mat_from_json(jl.at("q_mu"));
    const auto& factors = jl.at("q_sqrt_packed_logdiag");
    if (static_cast<Eigen::Index>(factors.size()) != d_out)
      throw ParseError("checkpoint: factor count != d_out", 0);
    for (Eigen::Index d = 0; d < d_out; ++d)
      layer.q_sqrt_unconstrained(d) =
          packed_lower_from_json(factors[static_cast<std::size_t>(d)], layer.num_inducing());
    layers.push_back(std::move(layer));
  }

  const auto& jlik = doc.at("likelihood");
  Likelihood lik = jlik.at("type") == "gaussian" ? Likelihood::gaussian(1.0)
                                                 : Likelihood::bernoulli_probit();
  if (lik.kind() == LikelihoodKind::kGaussian)
    lik.log_noise_storage()(0, 0) = jlik.at("log_variance").get<double>();

  return DGPModel(std::move(layers), std::move(lik), doc.at("num_data").get<long>());
}

void save_model(const DGPModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("save_model: cannot open '" + path + "' for writing");
  out << model_to_json(model);
  if (!out) throw Error("save_model: write to '" + path + "' failed");
}

DGPModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_model: cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return model_from_json(text);
}

}  // namespace dsdgp
