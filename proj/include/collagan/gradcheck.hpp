#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "collagan/tensor.hpp"

namespace collagan {

template <typename T>
using ScalarFn = std::function<BasicTensor<T>(const std::vector<BasicTensor<T>>& inputs)>;

// Compares backward() against central differences with step `h` for every
// element of every input. Returns max|analytic - numeric| over all elements
// divided by max|numeric| over all elements (the absolute difference when
// every numeric gradient is below 1e-12). Inputs are restored afterwards.
template <typename T>
double gradient_error(const ScalarFn<T>& f, std::vector<BasicTensor<T>> inputs, double h);

// Analytic 32-bit gradients of `f` against central differences of a 64-bit
// `reference` whose inputs hold the same values.
double gradient_error_against(const ScalarFn<float>& f, std::vector<Tensor> inputs, const ScalarFn<double>& reference,
                              std::vector<Tensor64> reference_inputs, double h);

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct GradCheckOptions {
  std::uint64_t seed = 1;
  // 0 selects the precision default: 1e-5 for double, 1e-3 for float.
  double tolerance = 0.0;
};

// Every differentiable op, layer and loss term, plus composite networks.
template <typename T>
std::vector<GradCheckResult> run_gradcheck_suite(const GradCheckOptions& options);

}  // namespace collagan
