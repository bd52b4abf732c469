#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "collagan/losses.hpp"

namespace testing {

using collagan::SsimConfig;
using collagan::Tensor64;

inline std::size_t mirror(long i, long n) {
  if (i < 0) i = -i;
  if (i >= n) i = 2 * (n - 1) - i;
  return static_cast<std::size_t>(i);
}

// Explicit 11x11 Gaussian window, sigma 1.5, mirrored borders, one channel.
inline std::vector<double> ssim_oracle(const Tensor64& x, const Tensor64& y, double c1, double c2) {
  const long H = long(x.dim(x.rank() - 2)), W = long(x.dim(x.rank() - 1));
  double w1[11], total = 0.0;
  for (int i = 0; i < 11; ++i) total += w1[i] = std::exp(-double((i - 5) * (i - 5)) / (2 * 1.5 * 1.5));
  std::vector<double> out(H * W);
  for (long r = 0; r < H; ++r)
    for (long c = 0; c < W; ++c) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (long i = -5; i <= 5; ++i)
        for (long j = -5; j <= 5; ++j) {
          const double w = w1[i + 5] * w1[j + 5] / (total * total);
          const std::size_t k = mirror(r + i, H) * W + mirror(c + j, W);
          mx += w * x[k];
          my += w * y[k];
          sxx += w * x[k] * x[k];
          syy += w * y[k] * y[k];
          sxy += w * x[k] * y[k];
        }
      const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
      out[r * W + c] = ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  return out;
}

inline double oracle_ssim_loss(const Tensor64& x, const Tensor64& y, const SsimConfig& cfg) {
  const auto map = ssim_oracle(x, y, cfg.c1(), cfg.c2());
  double s = 0.0;
  for (double v : map) s += (1.0 + v) / 2.0;
  return -std::log(std::max(s / map.size(), 1e-12));
}

}  // namespace testing
