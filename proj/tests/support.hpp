#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "collagan/layers.hpp"
#include "collagan/tensor.hpp"

namespace testing {

template <typename T>
collagan::BasicTensor<T> random_tensor(collagan::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  collagan::BasicTensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(u(rng));
  return t;
}

inline collagan::Tensor to_float(const collagan::Tensor64& x) {
  collagan::Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = static_cast<float>(x[i]);
  return y;
}

template <typename T>
double max_abs_diff(const collagan::BasicTensor<T>& a, const collagan::BasicTensor<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

// Central differences of a scalar function of one tensor, evaluated in
// place. The tensor is restored afterwards.
inline std::vector<double> numeric_gradient(const std::function<double()>& f, collagan::Tensor64& x, double h) {
  std::vector<double> g(x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double relative_error(std::span<const double> analytic, const std::vector<double>& numeric) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    num = std::max(num, std::abs(analytic[i] - numeric[i]));
    den = std::max(den, std::abs(numeric[i]));
  }
  return den > 0.0 ? num / den : num;
}

// FNV-1a over the raw bytes of every parameter, in store order.
template <typename T>
std::uint64_t fingerprint(const collagan::nn::ParameterStore<T>& store) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& e : store.entries()) {
    const auto data = e.tensor.data();
    const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());
    for (std::size_t i = 0; i < data.size_bytes(); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  }
  return h;
}

template <typename T>
bool same_bytes(const collagan::BasicTensor<T>& a, const collagan::BasicTensor<T>& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.data().size_bytes()) == 0;
}

}  // namespace testing
