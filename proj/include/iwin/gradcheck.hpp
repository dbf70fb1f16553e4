#pragma once

#include <functional>
#include <string>
#include <vector>

#include "iwin/tensor.hpp"

namespace iwin {

// Central finite-difference check of reverse-mode gradients.
//
// `f` maps the parameter list to a scalar loss tensor and must be pure; it is
// called once with watched parameters to get analytic gradients and then
// 2 * (#coordinates) times with perturbed copies.
struct GradCheckResult {
    bool pass = false;
    double max_rel_err = 0.0;
    std::string worst;  // "param <i> coord <j>" of the worst coordinate
};

using LossFn = std::function<Tensor(const std::vector<Tensor>&)>;

GradCheckResult finite_diff_check(const LossFn& f, const std::vector<Tensor>& params,
                                  double h = 1e-5, double tol = 1e-4);

}  // namespace iwin
