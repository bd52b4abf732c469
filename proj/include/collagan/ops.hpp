#pragma once

#include <cstddef>
#include <vector>

#include "collagan/tensor.hpp"

// Differentiable tensor operations. Binary elementwise ops require identical
// shapes; there is no implicit broadcasting. Every op records a node on the
// active graph when one of its inputs requires a gradient.
namespace collagan::ops {

template <typename T> BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> div(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T> BasicTensor<T> neg(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> add_scalar(const BasicTensor<T>& x, T c);
template <typename T> BasicTensor<T> mul_scalar(const BasicTensor<T>& x, T c);
template <typename T> BasicTensor<T> square(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> abs(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> log(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> exp(const BasicTensor<T>& x);

// Gradient passes where lo <= x <= hi, zero where the clamp is active.
template <typename T> BasicTensor<T> clamp(const BasicTensor<T>& x, T lo, T hi);
template <typename T> BasicTensor<T> clamp_min(const BasicTensor<T>& x, T lo);

template <typename T> BasicTensor<T> sigmoid(const BasicTensor<T>& x);
// y = x for x >= 0, slope * x otherwise; derivative at 0 is 1.
template <typename T> BasicTensor<T> leaky_relu(const BasicTensor<T>& x, T slope);

template <typename T> BasicTensor<T> sum(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> mean(const BasicTensor<T>& x);
// Weighted sum of scalars, sum_i w_i * s_i.
template <typename T>
BasicTensor<T> weighted_sum(const std::vector<BasicTensor<T>>& scalars, const std::vector<T>& weights);

// (m,k) x (k,n) -> (m,n)
template <typename T> BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Softmax over the last axis of a rank-2 tensor (rows are samples).
template <typename T> BasicTensor<T> softmax(const BasicTensor<T>& logits);

// out[i] = x[i, index[i]] for a rank-2 tensor.
template <typename T>
BasicTensor<T> pick(const BasicTensor<T>& x, const std::vector<std::size_t>& index);

template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, std::size_t axis);
template <typename T>
BasicTensor<T> slice(const BasicTensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end);

template <typename T> BasicTensor<T> flatten(const BasicTensor<T>& x);

}  // namespace collagan::ops
