#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "dsdgp/checkpoint.hpp"
#include "dsdgp/errors.hpp"
#include "dsdgp/rng.hpp"
#include "helpers.hpp"

using namespace dsdgp;

namespace {

DGPModel build_model(RngStream& rng) {
  std::vector<GPLayer> layers;
  {
    Mat z = rng.normal_matrix(4, 2);
    auto kernel = NoisyKernel::create(RbfArdKernel::create(1.7, 0.9, 2), 3e-4);
    Mat w = rng.normal_matrix(2, 2);
    GPLayer l(z, kernel, MeanFunction::linear(w), 2);
    l.q_mu() = rng.normal_matrix(4, 2);
    for (int d = 0; d < 2; ++d) {
      Mat u = 0.2 * rng.normal_matrix(4, 4);
      l.q_sqrt_unconstrained(d) = u.triangularView<Eigen::Lower>();
    }
    layers.push_back(std::move(l));
  }
  {
    Mat z = rng.normal_matrix(4, 2);
    GPLayer l(z, KernelVariant(RbfArdKernel::create(2.2, 1.3, 2)), MeanFunction::zero(1), 1);
    l.q_mu() = rng.normal_matrix(4, 1);
    layers.push_back(std::move(l));
  }
  return DGPModel(std::move(layers), Likelihood::gaussian(0.017), 321);
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  RngStream rng(91);
  DGPModel model = build_model(rng);
  std::string text = model_to_json(model);
  DGPModel reloaded = model_from_json(text);

  CHECK(reloaded.num_data() == model.num_data());
  REQUIRE(reloaded.layers().size() == model.layers().size());
  auto p1 = model.parameters();
  auto p2 = reloaded.parameters();
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(p1[i].name == p2[i].name);
    REQUIRE(p1[i].value->rows() == p2[i].value->rows());
    REQUIRE(p1[i].value->cols() == p2[i].value->cols());
    // bitwise equality, not approximate
    for (Eigen::Index r = 0; r < p1[i].value->rows(); ++r)
      for (Eigen::Index c = 0; c < p1[i].value->cols(); ++c)
        CHECK((*p1[i].value)(r, c) == (*p2[i].value)(r, c));
  }
  // Mean functions survive too.
  CHECK((model.layers()[0].mean_fn().w() - reloaded.layers()[0].mean_fn().w())
            .cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK(reloaded.layers()[1].mean_fn().is_zero());

  // Serializing the reloaded model reproduces the document exactly.
  CHECK(model_to_json(reloaded) == text);
}

TEST_CASE("checkpoint file save and load") {
  RngStream rng(92);
  DGPModel model = build_model(rng);
  auto path = (std::filesystem::temp_directory_path() / "dsdgp_ckpt_test.json").string();
  save_model(model, path);
  DGPModel reloaded = load_model(path);
  CHECK(model_to_json(reloaded) == model_to_json(model));
  std::remove(path.c_str());
}

TEST_CASE("malformed checkpoints are rejected") {
  CHECK_THROWS_AS(model_from_json("{\"format\": \"other\"}"), ParseError);
  CHECK_THROWS(model_from_json("not json"));
  CHECK_THROWS_AS(load_model("/nonexistent/path.json"), Error);
}
