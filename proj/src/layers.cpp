#include "collagan/layers.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "collagan/ops.hpp"

namespace collagan::nn {
namespace {

template <typename T>
void require_rank4(const char* layer, const BasicTensor<T>& x) {
  if (x.rank() != 4) {
    throw ShapeError(std::string(layer) + ": expected (batch, channels, height, width), got " + shape_str(x.shape()));
  }
}

template <typename T>
void require_vector(const std::string& layer, const char* what, const BasicTensor<T>& v, std::size_t n) {
  if (v.rank() != 1 || v.dim(0) != n) {
    throw ShapeError(layer + ": " + what + " must have shape (" + std::to_string(n) + "), got " + shape_str(v.shape()));
  }
}

struct ConvGeometry {
  std::size_t batch, in_ch, height, width;
  std::size_t out_ch, kh, kw, stride, pad;
  std::size_t out_h, out_w;
  std::size_t k() const { return in_ch * kh * kw; }
  std::size_t p() const { return out_h * out_w; }
  bool is_pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  const std::size_t P = g.p();
  for (std::size_t ci = 0; ci < g.in_ch; ++ci) {
    const T* plane = x + ci * g.height * g.width;
    for (std::size_t a = 0; a < g.kh; ++a) {
      for (std::size_t b = 0; b < g.kw; ++b) {
        T* row = col + ((ci * g.kh + a) * g.kw + b) * P;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + a) - static_cast<std::ptrdiff_t>(g.pad);
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill_n(dst, g.out_w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + b) - static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* col, T* dx) {
  const std::size_t P = g.p();
  for (std::size_t ci = 0; ci < g.in_ch; ++ci) {
    T* plane = dx + ci * g.height * g.width;
    for (std::size_t a = 0; a < g.kh; ++a) {
      for (std::size_t b = 0; b < g.kw; ++b) {
        const T* row = col + ((ci * g.kh + a) * g.kw + b) * P;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + a) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * g.width;
          const T* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + b) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                      std::size_t stride, std::size_t padding, const std::string& layer) {
  require_rank4(layer.c_str(), x);
  if (weight.rank() != 4) throw ShapeError(layer + ": kernel must be rank 4, got " + shape_str(weight.shape()));
  if (stride == 0) throw ShapeError(layer + ": stride must be positive");
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), weight.dim(0), weight.dim(2), weight.dim(3),
                 stride, padding, 0, 0};
  if (weight.dim(1) != g.in_ch) {
    throw ShapeError(layer + ": kernel " + shape_str(weight.shape()) + " expects " + std::to_string(weight.dim(1)) +
                     " input channels, input " + shape_str(x.shape()) + " has " + std::to_string(g.in_ch));
  }
  require_vector(layer, "bias", bias, g.out_ch);
  if (g.height + 2 * padding < g.kh || g.width + 2 * padding < g.kw) {
    throw ShapeError(layer + ": kernel larger than padded input " + shape_str(x.shape()));
  }
  g.out_h = (g.height + 2 * padding - g.kh) / stride + 1;
  g.out_w = (g.width + 2 * padding - g.kw) / stride + 1;

  const std::size_t K = g.k(), P = g.p();
  const std::size_t in_plane = g.in_ch * g.height * g.width;
  auto cols = std::make_shared<std::vector<T>>();
  if (!g.is_pointwise()) {
    cols->resize(g.batch * K * P);
    for (std::size_t n = 0; n < g.batch; ++n) im2col(g, x.data().data() + n * in_plane, cols->data() + n * K * P);
  }

  std::vector<T> out(g.batch * g.out_ch * P);
  auto ws = weight.data();
  auto bs = bias.data();
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* col = g.is_pointwise() ? x.data().data() + n * in_plane : cols->data() + n * K * P;
    for (std::size_t co = 0; co < g.out_ch; ++co) {
      T* row = out.data() + (n * g.out_ch + co) * P;
      std::fill_n(row, P, bs[co]);
      const T* wrow = ws.data() + co * K;
      for (std::size_t k = 0; k < K; ++k) axpy(wrow[k], col + k * P, row, P);
    }
  }

  Shape out_shape{g.batch, g.out_ch, g.out_h, g.out_w};
  return make_result<T>(
      "conv2d", std::move(out_shape), std::move(out), {x, weight, bias},
      [g, x, weight, cols](std::span<const T> grad, GradTargets<T> gin) {
        const std::size_t K = g.k(), P = g.p();
        const std::size_t in_plane = g.in_ch * g.height * g.width;
        auto ws = weight.data();
        std::vector<T> dcol(gin[0] ? K * P : 0);
        for (std::size_t n = 0; n < g.batch; ++n) {
          const T* gn = grad.data() + n * g.out_ch * P;
          const T* col = g.is_pointwise() ? x.data().data() + n * in_plane : cols->data() + n * K * P;
          if (gin[2]) {
            auto& db = *gin[2];
            for (std::size_t co = 0; co < g.out_ch; ++co) {
              T acc = T(0);
              for (std::size_t p = 0; p < P; ++p) acc += gn[co * P + p];
              db[co] += acc;
            }
          }
          if (gin[1]) {
            auto& dw = *gin[1];
            for (std::size_t co = 0; co < g.out_ch; ++co) {
              for (std::size_t k = 0; k < K; ++k) dw[co * K + k] += dot(gn + co * P, col + k * P, P);
            }
          }
          if (gin[0]) {
            std::fill(dcol.begin(), dcol.end(), T(0));
            for (std::size_t co = 0; co < g.out_ch; ++co) {
              const T* wrow = ws.data() + co * K;
              for (std::size_t k = 0; k < K; ++k) axpy(wrow[k], gn + co * P, dcol.data() + k * P, P);
            }
            T* dx = gin[0]->data() + n * in_plane;
            if (g.is_pointwise()) {
              for (std::size_t i = 0; i < K * P; ++i) dx[i] += dcol[i];
            } else {
              col2im_add(g, dcol.data(), dx);
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> conv_transpose2d(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                                std::size_t stride, const std::string& layer) {
  require_rank4(layer.c_str(), x);
  if (weight.rank() != 4) throw ShapeError(layer + ": kernel must be rank 4, got " + shape_str(weight.shape()));
  if (stride == 0) throw ShapeError(layer + ": stride must be positive");
  const std::size_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != cin) {
    throw ShapeError(layer + ": kernel " + shape_str(weight.shape()) + " expects " + std::to_string(weight.dim(1)) +
                     " input channels, input " + shape_str(x.shape()) + " has " + std::to_string(cin));
  }
  if (h == 0 || w == 0) throw ShapeError(layer + ": empty spatial input " + shape_str(x.shape()));
  require_vector(layer, "bias", bias, cout);
  const std::size_t oh = (h - 1) * stride + kh, ow = (w - 1) * stride + kw;
  const std::size_t P = h * w, taps = kh * kw;

  std::vector<T> out(batch * cout * oh * ow);
  std::vector<T> tmp(P);
  auto xs = x.data();
  auto ws = weight.data();
  auto bs = bias.data();
  for (std::size_t n = 0; n < batch; ++n) {
    const T* xn = xs.data() + n * cin * P;
    for (std::size_t co = 0; co < cout; ++co) {
      T* plane = out.data() + (n * cout + co) * oh * ow;
      std::fill_n(plane, oh * ow, bs[co]);
      for (std::size_t t = 0; t < taps; ++t) {
        const std::size_t a = t / kw, b = t % kw;
        std::fill(tmp.begin(), tmp.end(), T(0));
        for (std::size_t ci = 0; ci < cin; ++ci) axpy(ws[(co * cin + ci) * taps + t], xn + ci * P, tmp.data(), P);
        for (std::size_t i = 0; i < h; ++i) {
          T* dst = plane + (i * stride + a) * ow + b;
          for (std::size_t j = 0; j < w; ++j) dst[j * stride] += tmp[i * w + j];
        }
      }
    }
  }

  return make_result<T>(
      "conv_transpose2d", Shape{batch, cout, oh, ow}, std::move(out), {x, weight, bias},
      [x, weight, batch, cin, cout, h, w, kh, kw, oh, ow, stride](std::span<const T> grad, GradTargets<T> gin) {
        const std::size_t P = h * w, taps = kh * kw;
        auto xs = x.data();
        auto ws = weight.data();
        std::vector<T> gcol(P);
        for (std::size_t n = 0; n < batch; ++n) {
          const T* xn = xs.data() + n * cin * P;
          for (std::size_t co = 0; co < cout; ++co) {
            const T* gplane = grad.data() + (n * cout + co) * oh * ow;
            if (gin[2]) {
              T acc = T(0);
              for (std::size_t i = 0; i < oh * ow; ++i) acc += gplane[i];
              (*gin[2])[co] += acc;
            }
            for (std::size_t t = 0; t < taps; ++t) {
              const std::size_t a = t / kw, b = t % kw;
              for (std::size_t i = 0; i < h; ++i) {
                const T* src = gplane + (i * stride + a) * ow + b;
                for (std::size_t j = 0; j < w; ++j) gcol[i * w + j] = src[j * stride];
              }
              for (std::size_t ci = 0; ci < cin; ++ci) {
                const std::size_t widx = (co * cin + ci) * taps + t;
                if (gin[1]) (*gin[1])[widx] += dot(gcol.data(), xn + ci * P, P);
                if (gin[0]) axpy(ws[widx], gcol.data(), gin[0]->data() + (n * cin + ci) * P, P);
              }
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> instance_norm(const BasicTensor<T>& x, const BasicTensor<T>& scale, const BasicTensor<T>& shift,
                             T eps) {
  require_rank4("instance_norm", x);
  const std::size_t batch = x.dim(0), ch = x.dim(1), m = x.dim(2) * x.dim(3);
  if (m == 0) throw ShapeError("instance_norm: empty spatial slice in " + shape_str(x.shape()));
  require_vector(std::string("instance_norm"), "scale", scale, ch);
  require_vector(std::string("instance_norm"), "shift", shift, ch);

  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto inv_std = std::make_shared<std::vector<T>>(batch * ch);
  std::vector<T> out(x.numel());
  auto xs = x.data();
  for (std::size_t s = 0; s < batch * ch; ++s) {
    const std::size_t c = s % ch;
    const T* src = xs.data() + s * m;
    T mu = T(0);
    for (std::size_t i = 0; i < m; ++i) mu += src[i];
    mu /= static_cast<T>(m);
    T var = T(0);
    for (std::size_t i = 0; i < m; ++i) var += (src[i] - mu) * (src[i] - mu);
    var /= static_cast<T>(m);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[s] = is;
    T* xh = xhat->data() + s * m;
    T* dst = out.data() + s * m;
    const T sc = scale[c], sh = shift[c];
    for (std::size_t i = 0; i < m; ++i) {
      xh[i] = (src[i] - mu) * is;
      dst[i] = sc * xh[i] + sh;
    }
  }

  return make_result<T>("instance_norm", x.shape(), std::move(out), {x, scale, shift},
                        [xhat, inv_std, scale, batch, ch, m](std::span<const T> grad, GradTargets<T> gin) {
                          const T inv_m = T(1) / static_cast<T>(m);
                          for (std::size_t s = 0; s < batch * ch; ++s) {
                            const std::size_t c = s % ch;
                            const T* g = grad.data() + s * m;
                            const T* xh = xhat->data() + s * m;
                            T sum_g = T(0), sum_gx = T(0);
                            for (std::size_t i = 0; i < m; ++i) {
                              sum_g += g[i];
                              sum_gx += g[i] * xh[i];
                            }
                            if (gin[1]) (*gin[1])[c] += sum_gx;
                            if (gin[2]) (*gin[2])[c] += sum_g;
                            if (gin[0]) {
                              const T k = scale[c] * (*inv_std)[s];
                              const T mg = sum_g * inv_m, mgx = sum_gx * inv_m;
                              T* dx = gin[0]->data() + s * m;
                              for (std::size_t i = 0; i < m; ++i) dx[i] += k * (g[i] - mg - xh[i] * mgx);
                            }
                          }
                        });
}

template <typename T>
BasicTensor<T> avg_pool2(const BasicTensor<T>& x) {
  require_rank4("avg_pool2", x);
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("avg_pool2: spatial extents must be even, got " + shape_str(x.shape()));
  }
  const std::size_t oh = h / 2, ow = w / 2;
  std::vector<T> out(planes * oh * ow);
  auto xs = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = xs.data() + p * h * w;
    T* dst = out.data() + p * oh * ow;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        const T* tl = src + 2 * i * w + 2 * j;
        dst[i * ow + j] = T(0.25) * (tl[0] + tl[1] + tl[w] + tl[w + 1]);
      }
    }
  }
  return make_result<T>("avg_pool2", Shape{x.dim(0), x.dim(1), oh, ow}, std::move(out), {x},
                        [planes, h, w, oh, ow](std::span<const T> grad, GradTargets<T> gin) {
                          for (std::size_t p = 0; p < planes; ++p) {
                            const T* g = grad.data() + p * oh * ow;
                            T* dx = gin[0]->data() + p * h * w;
                            for (std::size_t i = 0; i < oh; ++i) {
                              for (std::size_t j = 0; j < ow; ++j) {
                                const T q = T(0.25) * g[i * ow + j];
                                T* tl = dx + 2 * i * w + 2 * j;
                                tl[0] += q;
                                tl[1] += q;
                                tl[w] += q;
                                tl[w + 1] += q;
                              }
                            }
                          }
                        });
}

template <typename T>
BasicTensor<T> dropout(const BasicTensor<T>& x, double rate, Mode mode, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ShapeError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  if (mode == Mode::eval || rate == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::bernoulli_distribution drop(rate);
  auto mask = std::make_shared<std::vector<T>>(x.numel());
  for (auto& v : *mask) v = drop(rng) ? T(0) : keep_scale;
  std::vector<T> out(x.numel());
  auto xs = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xs[i] * (*mask)[i];
  return make_result<T>("dropout", x.shape(), std::move(out), {x},
                        [mask](std::span<const T> grad, GradTargets<T> gin) {
                          auto& dx = *gin[0];
                          for (std::size_t i = 0; i < grad.size(); ++i) dx[i] += grad[i] * (*mask)[i];
                        });
}

template <typename T>
BasicTensor<T> fully_connected(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                               const std::string& layer) {
  if (x.rank() != 2 || weight.rank() != 2 || weight.dim(1) != x.dim(1)) {
    throw ShapeError(layer + ": input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(weight.shape()));
  }
  const std::size_t batch = x.dim(0), in = x.dim(1), outs = weight.dim(0);
  require_vector(layer, "bias", bias, outs);
  std::vector<T> out(batch * outs);
  auto xs = x.data();
  auto ws = weight.data();
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t o = 0; o < outs; ++o) out[n * outs + o] = bias[o] + dot(ws.data() + o * in, xs.data() + n * in, in);
  }
  return make_result<T>("fully_connected", Shape{batch, outs}, std::move(out), {x, weight, bias},
                        [x, weight, batch, in, outs](std::span<const T> grad, GradTargets<T> gin) {
                          auto xs = x.data();
                          auto ws = weight.data();
                          for (std::size_t n = 0; n < batch; ++n) {
                            for (std::size_t o = 0; o < outs; ++o) {
                              const T g = grad[n * outs + o];
                              if (gin[2]) (*gin[2])[o] += g;
                              if (gin[1]) axpy(g, xs.data() + n * in, gin[1]->data() + o * in, in);
                              if (gin[0]) axpy(g, ws.data() + o * in, gin[0]->data() + n * in, in);
                            }
                          }
                        });
}

template <typename T>
BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>& parts) {
  for (const auto& p : parts) require_rank4("concat_channels", p);
  return ops::concat(parts, 1);
}

std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

template <typename T>
BasicTensor<T> filter_reflect(const BasicTensor<T>& x, const std::vector<T>& kernel, std::size_t axis) {
  require_rank4("filter_reflect", x);
  if (axis != 2 && axis != 3) throw ShapeError("filter_reflect: axis must be 2 or 3");
  if (kernel.empty() || kernel.size() % 2 == 0) throw ShapeError("filter_reflect: kernel length must be odd");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::ptrdiff_t radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
  const std::ptrdiff_t extent = static_cast<std::ptrdiff_t>(axis == 2 ? h : w);
  if (radius >= extent) {
    throw ShapeError("filter_reflect: kernel of length " + std::to_string(kernel.size()) + " too long for " +
                     shape_str(x.shape()));
  }
  // Precomputed source offsets along the filtered axis.
  auto taps = std::make_shared<std::vector<std::ptrdiff_t>>(static_cast<std::size_t>(extent) * kernel.size());
  for (std::ptrdiff_t i = 0; i < extent; ++i) {
    for (std::size_t t = 0; t < kernel.size(); ++t) {
      (*taps)[static_cast<std::size_t>(i) * kernel.size() + t] =
          reflect_index(i + static_cast<std::ptrdiff_t>(t) - radius, extent);
    }
  }
  const std::size_t along = axis == 2 ? w : 1;  // stride between filtered samples
  const std::size_t lines = axis == 2 ? w : h;  // independent 1-D lines per plane
  const std::size_t line_stride = axis == 2 ? 1 : w;

  std::vector<T> out(x.numel(), T(0));
  auto xs = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t l = 0; l < lines; ++l) {
      const T* src = xs.data() + p * h * w + l * line_stride;
      T* dst = out.data() + p * h * w + l * line_stride;
      for (std::ptrdiff_t i = 0; i < extent; ++i) {
        const std::ptrdiff_t* tap = taps->data() + static_cast<std::size_t>(i) * kernel.size();
        T acc = T(0);
        for (std::size_t t = 0; t < kernel.size(); ++t) acc += kernel[t] * src[static_cast<std::size_t>(tap[t]) * along];
        dst[static_cast<std::size_t>(i) * along] = acc;
      }
    }
  }
  return make_result<T>("filter_reflect", x.shape(), std::move(out), {x},
                        [taps, kernel, planes, h, w, extent, along, lines, line_stride](std::span<const T> grad,
                                                                                       GradTargets<T> gin) {
                          for (std::size_t p = 0; p < planes; ++p) {
                            for (std::size_t l = 0; l < lines; ++l) {
                              const T* g = grad.data() + p * h * w + l * line_stride;
                              T* dx = gin[0]->data() + p * h * w + l * line_stride;
                              for (std::ptrdiff_t i = 0; i < extent; ++i) {
                                const std::ptrdiff_t* tap = taps->data() + static_cast<std::size_t>(i) * kernel.size();
                                const T gi = g[static_cast<std::size_t>(i) * along];
                                for (std::size_t t = 0; t < kernel.size(); ++t) {
                                  dx[static_cast<std::size_t>(tap[t]) * along] += kernel[t] * gi;
                                }
                              }
                            }
                          }
                        });
}

template <typename T>
BasicTensor<T> ParameterStore<T>::add(const std::string& name, Shape shape, Init init, std::mt19937_64& rng,
                                      double std) {
  for (const auto& e : entries_) {
    if (e.name == name) throw Error("parameter store: duplicate parameter '" + name + "'");
  }
  BasicTensor<T> t(std::move(shape));
  switch (init) {
    case Init::zeros:
      break;
    case Init::ones:
      std::fill(t.data().begin(), t.data().end(), T(1));
      break;
    case Init::truncated_normal: {
      std::normal_distribution<double> normal(0.0, std);
      for (auto& v : t.data()) {
        double z = normal(rng);
        while (std::abs(z) > 2.0 * std) z = normal(rng);
        v = static_cast<T>(z);
      }
      break;
    }
  }
  t.set_requires_grad(true);
  entries_.push_back({name, t});
  return t;
}

template <typename T>
std::vector<BasicTensor<T>> ParameterStore<T>::tensors() const {
  std::vector<BasicTensor<T>> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.tensor);
  return out;
}

template <typename T>
const BasicTensor<T>& ParameterStore<T>::get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw Error("parameter store: no parameter named '" + name + "'");
}

template <typename T>
std::size_t ParameterStore<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

template <typename T>
void ParameterStore<T>::set_trainable(bool on) {
  for (auto& e : entries_) e.tensor.set_requires_grad(on);
}

template <typename T>
void ParameterStore<T>::set_trainable(const std::string& prefix, bool on) {
  for (auto& e : entries_) {
    if (e.name.rfind(prefix, 0) == 0) e.tensor.set_requires_grad(on);
  }
}

#define COLLAGAN_INSTANTIATE(T)                                                                                  \
  template BasicTensor<T> conv2d<T>(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,         \
                                    std::size_t, std::size_t, const std::string&);                               \
  template BasicTensor<T> conv_transpose2d<T>(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                              std::size_t, const std::string&);                                  \
  template BasicTensor<T> instance_norm<T>(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, T); \
  template BasicTensor<T> avg_pool2<T>(const BasicTensor<T>&);                                                   \
  template BasicTensor<T> dropout<T>(const BasicTensor<T>&, double, Mode, std::mt19937_64&);                     \
  template BasicTensor<T> fully_connected<T>(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                             const std::string&);                                                \
  template BasicTensor<T> concat_channels<T>(const std::vector<BasicTensor<T>>&);                                \
  template BasicTensor<T> filter_reflect<T>(const BasicTensor<T>&, const std::vector<T>&, std::size_t);          \
  template class ParameterStore<T>;

COLLAGAN_INSTANTIATE(float)
COLLAGAN_INSTANTIATE(double)

#undef COLLAGAN_INSTANTIATE

}  // namespace collagan::nn
