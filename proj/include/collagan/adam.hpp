#pragma once

#include <cstdint>
#include <vector>

#include "collagan/tensor.hpp"

namespace collagan {

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed, ordered parameter list. Moment buffers
// are allocated on construction and keep their parameters' shapes.
template <typename T>
class Adam {
 public:
  Adam(std::vector<BasicTensor<T>> params, AdamConfig config);

  // Applies one update from the parameters' current gradients and clears
  // them. Parameters without a gradient are left untouched. Throws
  // NumericalError, with nothing modified, if any gradient is non-finite.
  void step();

  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<BasicTensor<T>>& params() const { return params_; }
  std::vector<BasicTensor<T>>& first_moments() { return m_; }
  std::vector<BasicTensor<T>>& second_moments() { return v_; }
  const std::vector<BasicTensor<T>>& first_moments() const { return m_; }
  const std::vector<BasicTensor<T>>& second_moments() const { return v_; }
  void set_steps(std::uint64_t t) { t_ = t; }

 private:
  std::vector<BasicTensor<T>> params_;
  std::vector<BasicTensor<T>> m_;
  std::vector<BasicTensor<T>> v_;
  AdamConfig config_;
  std::uint64_t t_ = 0;
};

}  // namespace collagan
