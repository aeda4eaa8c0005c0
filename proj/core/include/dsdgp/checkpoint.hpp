#pragma once

#include <string>

#include "dsdgp/model.hpp"

namespace dsdgp {

/// Self-describing JSON checkpoint of a model: per-layer inducing inputs,
/// variational means, covariance factors (packed lower-triangular with
/// log diagonal, matching the unconstrained storage so the round trip is
/// bit-exact), log kernel parameters, mean functions and the likelihood.
std::string model_to_json(const DGPModel& model);
DGPModel model_from_json(const std::string& text);

void save_model(const DGPModel& model, const std::string& path);
DGPModel load_model(const std::string& path);

}  // namespace dsdgp
