#include "collagan/adam.hpp"

#include <cmath>

namespace collagan {

template <typename T>
Adam<T>::Adam(std::vector<BasicTensor<T>> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  if (!(config_.lr > 0.0) || config_.beta1 < 0.0 || config_.beta1 >= 1.0 || config_.beta2 < 0.0 ||
      config_.beta2 >= 1.0 || !(config_.eps > 0.0)) {
    throw ConfigError("adam: hyperparameters out of range");
  }
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

template <typename T>
void Adam<T>::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].has_grad() && !all_finite(params_[i].grad())) {
      throw NumericalError("adam: non-finite gradient in parameter " + std::to_string(i) + " of shape " +
                           shape_str(params_[i].shape()));
    }
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const T step_size = static_cast<T>(config_.lr / c1);
  const T sqrt_c2 = static_cast<T>(std::sqrt(c2));
  const T eps = static_cast<T>(config_.eps);
  const T tb1 = static_cast<T>(b1), tb2 = static_cast<T>(b2);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = tb1 * m[k] + (T(1) - tb1) * g[k];
      v[k] = tb2 * v[k] + (T(1) - tb2) * g[k] * g[k];
      w[k] -= step_size * m[k] / (std::sqrt(v[k]) / sqrt_c2 + eps);
    }
    p.clear_grad();
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace collagan
