#include "collagan/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace collagan::ops {
namespace {

template <typename T>
void require_same_shape(const char* op, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

// Elementwise unary op given value and derivative functors; the derivative
// sees the input and the output value.
template <typename T, typename F, typename DF>
BasicTensor<T> unary(const char* op, const BasicTensor<T>& x, F f, DF df) {
  auto xs = x.data();
  std::vector<T> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = f(xs[i]);
  BasicTensor<T> result(x.shape(), std::move(out));
  auto y = result.impl_ptr();
  return make_result<T>(op, x.shape(), std::vector<T>(y->data), {x},
                        [x, y, df](std::span<const T> g, GradTargets<T> gin) {
                          auto xs = x.data();
                          auto& dst = *gin[0];
                          for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * df(xs[i], y->data[i]);
                        });
}

}  // namespace

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape("add", a, b);
  auto as = a.data(), bs = b.data();
  std::vector<T> out(as.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = as[i] + bs[i];
  return make_result<T>("add", a.shape(), std::move(out), {a, b},
                        [](std::span<const T> g, GradTargets<T> gin) {
                          for (auto* dst : gin) {
                            if (!dst) continue;
                            for (std::size_t i = 0; i < g.size(); ++i) (*dst)[i] += g[i];
                          }
                        });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape("sub", a, b);
  auto as = a.data(), bs = b.data();
  std::vector<T> out(as.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = as[i] - bs[i];
  return make_result<T>("sub", a.shape(), std::move(out), {a, b},
                        [](std::span<const T> g, GradTargets<T> gin) {
                          if (gin[0]) for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
                          if (gin[1]) for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] -= g[i];
                        });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape("mul", a, b);
  auto as = a.data(), bs = b.data();
  std::vector<T> out(as.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = as[i] * bs[i];
  return make_result<T>("mul", a.shape(), std::move(out), {a, b},
                        [a, b](std::span<const T> g, GradTargets<T> gin) {
                          auto as = a.data(), bs = b.data();
                          if (gin[0]) for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * bs[i];
                          if (gin[1]) for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] += g[i] * as[i];
                        });
}

template <typename T>
BasicTensor<T> div(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape("div", a, b);
  auto as = a.data(), bs = b.data();
  std::vector<T> out(as.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = as[i] / bs[i];
  return make_result<T>("div", a.shape(), std::move(out), {a, b},
                        [a, b](std::span<const T> g, GradTargets<T> gin) {
                          auto as = a.data(), bs = b.data();
                          if (gin[0]) for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] / bs[i];
                          if (gin[1]) {
                            for (std::size_t i = 0; i < g.size(); ++i) {
                              (*gin[1])[i] -= g[i] * as[i] / (bs[i] * bs[i]);
                            }
                          }
                        });
}

template <typename T>
BasicTensor<T> neg(const BasicTensor<T>& x) {
  return unary<T>("neg", x, [](T v) { return -v; }, [](T, T) { return T(-1); });
}

template <typename T>
BasicTensor<T> add_scalar(const BasicTensor<T>& x, T c) {
  return unary<T>("add_scalar", x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <typename T>
BasicTensor<T> mul_scalar(const BasicTensor<T>& x, T c) {
  return unary<T>("mul_scalar", x, [c](T v) { return v * c; }, [c](T, T) { return c; });
}

template <typename T>
BasicTensor<T> square(const BasicTensor<T>& x) {
  return unary<T>("square", x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
BasicTensor<T> abs(const BasicTensor<T>& x) {
  return unary<T>(
      "abs", x, [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
BasicTensor<T> log(const BasicTensor<T>& x) {
  return unary<T>("log", x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
BasicTensor<T> exp(const BasicTensor<T>& x) {
  return unary<T>("exp", x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
BasicTensor<T> clamp(const BasicTensor<T>& x, T lo, T hi) {
  if (lo > hi) throw ShapeError("clamp: lower bound exceeds upper bound");
  return unary<T>(
      "clamp", x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
      [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

template <typename T>
BasicTensor<T> clamp_min(const BasicTensor<T>& x, T lo) {
  return unary<T>(
      "clamp_min", x, [lo](T v) { return v < lo ? lo : v; }, [lo](T v, T) { return v >= lo ? T(1) : T(0); });
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  return unary<T>(
      "sigmoid", x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x, T slope) {
  return unary<T>(
      "leaky_relu", x, [slope](T v) { return v >= T(0) ? v : slope * v; },
      [slope](T v, T) { return v >= T(0) ? T(1) : slope; });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  T acc = T(0);
  for (T v : x.data()) acc += v;
  return make_result<T>("sum", Shape{}, std::vector<T>{acc}, {x},
                        [](std::span<const T> g, GradTargets<T> gin) {
                          for (auto& d : *gin[0]) d += g[0];
                        });
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  if (x.numel() == 0) throw ShapeError("mean: empty tensor");
  T acc = T(0);
  for (T v : x.data()) acc += v;
  const T inv = T(1) / static_cast<T>(x.numel());
  return make_result<T>("mean", Shape{}, std::vector<T>{acc * inv}, {x},
                        [inv](std::span<const T> g, GradTargets<T> gin) {
                          for (auto& d : *gin[0]) d += g[0] * inv;
                        });
}

template <typename T>
BasicTensor<T> weighted_sum(const std::vector<BasicTensor<T>>& scalars, const std::vector<T>& weights) {
  if (scalars.size() != weights.size()) {
    throw ShapeError("weighted_sum: " + std::to_string(scalars.size()) + " terms but " +
                     std::to_string(weights.size()) + " weights");
  }
  T acc = T(0);
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i].numel() != 1) throw ShapeError("weighted_sum: term " + std::to_string(i) + " is not a scalar");
    acc += weights[i] * scalars[i][0];
  }
  return make_result<T>("weighted_sum", Shape{}, std::vector<T>{acc}, scalars,
                        [weights](std::span<const T> g, GradTargets<T> gin) {
                          for (std::size_t i = 0; i < gin.size(); ++i) {
                            if (gin[i]) (*gin[i])[0] += g[0] * weights[i];
                          }
                        });
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto as = a.data(), bs = b.data();
  std::vector<T> out(m * n, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const T av = as[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * bs[p * n + j];
    }
  }
  return make_result<T>("matmul", Shape{m, n}, std::move(out), {a, b},
                        [a, b, m, k, n](std::span<const T> g, GradTargets<T> gin) {
                          auto as = a.data(), bs = b.data();
                          if (gin[0]) {
                            auto& da = *gin[0];
                            for (std::size_t i = 0; i < m; ++i) {
                              for (std::size_t p = 0; p < k; ++p) {
                                T acc = T(0);
                                for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bs[p * n + j];
                                da[i * k + p] += acc;
                              }
                            }
                          }
                          if (gin[1]) {
                            auto& db = *gin[1];
                            for (std::size_t i = 0; i < m; ++i) {
                              for (std::size_t p = 0; p < k; ++p) {
                                const T av = as[i * k + p];
                                for (std::size_t j = 0; j < n; ++j) db[p * n + j] += av * g[i * n + j];
                              }
                            }
                          }
                        });
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax: expected (batch, classes), got " + shape_str(logits.shape()));
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  auto xs = logits.data();
  std::vector<T> out(xs.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xs.data() + r * cols;
    T peak = *std::max_element(row, row + cols);
    T total = T(0);
    for (std::size_t c = 0; c < cols; ++c) {
      out[r * cols + c] = std::exp(row[c] - peak);
      total += out[r * cols + c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] /= total;
  }
  auto probs = std::make_shared<std::vector<T>>(out);
  return make_result<T>("softmax", logits.shape(), std::move(out), {logits},
                        [probs, rows, cols](std::span<const T> g, GradTargets<T> gin) {
                          auto& dst = *gin[0];
                          const auto& p = *probs;
                          for (std::size_t r = 0; r < rows; ++r) {
                            T dot = T(0);
                            for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * p[r * cols + c];
                            for (std::size_t c = 0; c < cols; ++c) {
                              dst[r * cols + c] += p[r * cols + c] * (g[r * cols + c] - dot);
                            }
                          }
                        });
}

template <typename T>
BasicTensor<T> pick(const BasicTensor<T>& x, const std::vector<std::size_t>& index) {
  if (x.rank() != 2 || x.dim(0) != index.size()) {
    throw ShapeError("pick: expected (" + std::to_string(index.size()) + ", classes), got " + shape_str(x.shape()));
  }
  const std::size_t cols = x.dim(1);
  std::vector<T> out(index.size());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= cols) {
      throw ShapeError("pick: index " + std::to_string(index[r]) + " out of range for " + std::to_string(cols) +
                       " classes");
    }
    out[r] = x[r * cols + index[r]];
  }
  return make_result<T>("pick", Shape{index.size()}, std::move(out), {x},
                        [index, cols](std::span<const T> g, GradTargets<T> gin) {
                          for (std::size_t r = 0; r < index.size(); ++r) (*gin[0])[r * cols + index[r]] += g[r];
                        });
}

template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + shape_str(first));
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];

  std::vector<std::size_t> extents;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) {
      throw ShapeError("concat: shape " + shape_str(s) + " incompatible with " + shape_str(first) + " on axis " +
                       std::to_string(axis));
    }
    extents.push_back(s[axis]);
    total += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total;
  std::vector<T> out(outer * total * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const std::size_t chunk = extents[k] * inner;
      auto src = parts[k].data().subspan(o * chunk, chunk);
      std::copy(src.begin(), src.end(), out.begin() + (o * total + offset) * inner);
      offset += extents[k];
    }
  }
  return make_result<T>("concat", std::move(out_shape), std::move(out), parts,
                        [extents, outer, inner, total](std::span<const T> g, GradTargets<T> gin) {
                          for (std::size_t o = 0; o < outer; ++o) {
                            std::size_t offset = 0;
                            for (std::size_t k = 0; k < extents.size(); ++k) {
                              const std::size_t chunk = extents[k] * inner;
                              if (gin[k]) {
                                const T* src = g.data() + (o * total + offset) * inner;
                                T* dst = gin[k]->data() + o * chunk;
                                for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                              }
                              offset += extents[k];
                            }
                          }
                        });
}

template <typename T>
BasicTensor<T> slice(const BasicTensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (axis >= s.size() || begin > end || end > s[axis]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                     std::to_string(axis) + " invalid for " + shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t extent = s[axis], width = end - begin;
  Shape out_shape = s;
  out_shape[axis] = width;
  std::vector<T> out(outer * width * inner);
  auto xs = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xs.begin() + (o * extent + begin) * inner, width * inner, out.begin() + o * width * inner);
  }
  return make_result<T>("slice", std::move(out_shape), std::move(out), {x},
                        [outer, inner, extent, begin, width](std::span<const T> g, GradTargets<T> gin) {
                          auto& dst = *gin[0];
                          for (std::size_t o = 0; o < outer; ++o) {
                            for (std::size_t i = 0; i < width * inner; ++i) {
                              dst[(o * extent + begin) * inner + i] += g[o * width * inner + i];
                            }
                          }
                        });
}

template <typename T>
BasicTensor<T> flatten(const BasicTensor<T>& x) {
  if (x.rank() < 1) throw ShapeError("flatten: scalar input");
  const std::size_t batch = x.dim(0);
  return x.reshape(Shape{batch, batch ? x.numel() / batch : 0});
}

#define COLLAGAN_INSTANTIATE(T)                                                                         \
  template BasicTensor<T> add<T>(const BasicTensor<T>&, const BasicTensor<T>&);                         \
  template BasicTensor<T> sub<T>(const BasicTensor<T>&, const BasicTensor<T>&);                         \
  template BasicTensor<T> mul<T>(const BasicTensor<T>&, const BasicTensor<T>&);                         \
  template BasicTensor<T> div<T>(const BasicTensor<T>&, const BasicTensor<T>&);                         \
  template BasicTensor<T> neg<T>(const BasicTensor<T>&);                                                \
  template BasicTensor<T> add_scalar<T>(const BasicTensor<T>&, T);                                      \
  template BasicTensor<T> mul_scalar<T>(const BasicTensor<T>&, T);                                      \
  template BasicTensor<T> square<T>(const BasicTensor<T>&);                                             \
  template BasicTensor<T> abs<T>(const BasicTensor<T>&);                                                \
  template BasicTensor<T> log<T>(const BasicTensor<T>&);                                                \
  template BasicTensor<T> exp<T>(const BasicTensor<T>&);                                                \
  template BasicTensor<T> clamp<T>(const BasicTensor<T>&, T, T);                                        \
  template BasicTensor<T> clamp_min<T>(const BasicTensor<T>&, T);                                       \
  template BasicTensor<T> sigmoid<T>(const BasicTensor<T>&);                                            \
  template BasicTensor<T> leaky_relu<T>(const BasicTensor<T>&, T);                                      \
  template BasicTensor<T> sum<T>(const BasicTensor<T>&);                                                \
  template BasicTensor<T> mean<T>(const BasicTensor<T>&);                                               \
  template BasicTensor<T> weighted_sum<T>(const std::vector<BasicTensor<T>>&, const std::vector<T>&);   \
  template BasicTensor<T> matmul<T>(const BasicTensor<T>&, const BasicTensor<T>&);                      \
  template BasicTensor<T> softmax<T>(const BasicTensor<T>&);                                            \
  template BasicTensor<T> pick<T>(const BasicTensor<T>&, const std::vector<std::size_t>&);              \
  template BasicTensor<T> concat<T>(const std::vector<BasicTensor<T>>&, std::size_t);                   \
  template BasicTensor<T> slice<T>(const BasicTensor<T>&, std::size_t, std::size_t, std::size_t);       \
  template BasicTensor<T> flatten<T>(const BasicTensor<T>&);

COLLAGAN_INSTANTIATE(float)
COLLAGAN_INSTANTIATE(double)

#undef COLLAGAN_INSTANTIATE

}  // namespace collagan::ops
