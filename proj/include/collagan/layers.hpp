#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "collagan/tensor.hpp"

namespace collagan::nn {

// Images are (batch, channels, height, width). Kernels are
// (out_channels, in_channels, kernel_h, kernel_w); biases are (out_channels).

// Zero padding of `padding` pixels on every side.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                      std::size_t stride, std::size_t padding, const std::string& layer = "conv2d");

// No padding; output extent (H - 1) * stride + kernel. With kernel 2 and
// stride 2 every output pixel receives exactly one contribution.
template <typename T>
BasicTensor<T> conv_transpose2d(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                                std::size_t stride, const std::string& layer = "conv_transpose2d");

// Per (batch, channel) normalization to zero mean, unit (biased) variance,
// followed by scale * xhat + shift with per-channel scale/shift.
template <typename T>
BasicTensor<T> instance_norm(const BasicTensor<T>& x, const BasicTensor<T>& scale, const BasicTensor<T>& shift,
                             T eps = T(1e-5));

// 2x2 mean pooling with stride 2; requires even spatial extents.
template <typename T>
BasicTensor<T> avg_pool2(const BasicTensor<T>& x);

enum class Mode { train, eval };

// Inverted dropout: in train mode each element is zeroed with probability
// `rate` and survivors are scaled by 1 / (1 - rate). Identity in eval mode.
template <typename T>
BasicTensor<T> dropout(const BasicTensor<T>& x, double rate, Mode mode, std::mt19937_64& rng);

// (batch, in) -> (batch, out) with weight (out, in).
template <typename T>
BasicTensor<T> fully_connected(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                               const std::string& layer = "fully_connected");

template <typename T>
BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>& parts);

// Per-channel 1-D correlation along axis 2 (rows) or 3 (columns) of an image
// tensor with an odd-length kernel; out-of-range taps are mirrored without
// repeating the edge sample (d c b | a b c d | c b a).
template <typename T>
BasicTensor<T> filter_reflect(const BasicTensor<T>& x, const std::vector<T>& kernel, std::size_t axis);

// Mirror index used by filter_reflect; valid for |overhang| < n.
std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n);

enum class Init { truncated_normal, zeros, ones };

// Ordered, named parameter collection. Handles returned by add() alias the
// stored tensors, so layers holding them see optimizer updates.
template <typename T>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    BasicTensor<T> tensor;
  };

  // Truncated normal: N(0, std) redrawn outside +-2 std.
  BasicTensor<T> add(const std::string& name, Shape shape, Init init, std::mt19937_64& rng, double std = 0.02);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<BasicTensor<T>> tensors() const;
  const BasicTensor<T>& get(const std::string& name) const;
  std::size_t parameter_count() const;

  // Toggles requires_grad on every parameter.
  void set_trainable(bool on);
  // Toggles requires_grad on parameters whose name starts with `prefix`.
  void set_trainable(const std::string& prefix, bool on);

 private:
  std::vector<Entry> entries_;
};

}  // namespace collagan::nn
