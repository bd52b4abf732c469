#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "collagan/tensor.hpp"

namespace collagan {

enum class SsimWindow { gaussian, uniform };

// Local statistics use a separable window with mirrored borders.
// C1 = (k1 * L)^2, C2 = (k2 * L)^2 with L the dynamic range.
struct SsimConfig {
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
  SsimWindow window = SsimWindow::gaussian;
  std::size_t window_size = 11;
  double sigma = 1.5;

  void validate() const;
  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
  // Normalized 1-D window; the 2-D window is its outer product.
  std::vector<double> kernel() const;
};

struct LossWeights {
  double mcc = 10.0;
  double mcc_ssim = 1.0;
  double gan = 1.0;
  double clsf = 1.0;

  void validate() const;
};

struct LossParts {
  double mcc = 0.0;
  double mcc_ssim = 0.0;
  double gan_gen = 0.0;
  double gan_dsc = 0.0;
  double clsf_real = 0.0;
  double clsf_fake = 0.0;
};

struct LossReport {
  double mcc = 0.0;
  double mcc_ssim = 0.0;
  double gan_gen = 0.0;
  double gan_dsc = 0.0;
  double clsf_real = 0.0;
  double clsf_fake = 0.0;
  double total_gen = 0.0;
  double total_dsc = 0.0;

  std::string to_string() const;
};

// total_gen = w.mcc*mcc + w.mcc_ssim*mcc_ssim + w.gan*gan_gen + w.clsf*clsf_fake
// total_dsc = gan_dsc + clsf_real
// Throws NumericalError naming the first non-finite part.
LossReport aggregate(const LossParts& parts, const LossWeights& weights);

inline constexpr double kLogFloor = 1e-12;

// Per-pixel SSIM for images of shape (C,H,W) or (B,C,H,W); every channel is
// handled independently. Differentiable in both arguments.
template <typename T>
BasicTensor<T> ssim_map(const BasicTensor<T>& x, const BasicTensor<T>& y, const SsimConfig& cfg);

// -log(mean((1 + map) / 2)), the mean floored at kLogFloor.
template <typename T>
BasicTensor<T> ssim_loss_from_map(const BasicTensor<T>& map);

template <typename T>
BasicTensor<T> ssim_loss(const BasicTensor<T>& x, const BasicTensor<T>& y, const SsimConfig& cfg);

// Sum over domains of the mean absolute error between each original and its
// cycle reconstruction.
template <typename T>
BasicTensor<T> mcc_loss(const std::vector<BasicTensor<T>>& originals, const std::vector<BasicTensor<T>>& reconstructions);

// Sum over domains of ssim_loss(original, reconstruction).
template <typename T>
BasicTensor<T> mcc_ssim_loss(const std::vector<BasicTensor<T>>& originals,
                             const std::vector<BasicTensor<T>>& reconstructions, const SsimConfig& cfg);

// Least-squares adversarial terms on patch maps.
template <typename T>
BasicTensor<T> lsgan_dsc_loss(const BasicTensor<T>& d_real, const BasicTensor<T>& d_fake);
template <typename T>
BasicTensor<T> lsgan_gen_loss(const BasicTensor<T>& d_fake);

// Mean over the batch of -log(probs[i, target[i]]), probabilities floored at
// kLogFloor. `probs` is (batch, classes) with rows summing to one.
template <typename T>
BasicTensor<T> clsf_loss(const BasicTensor<T>& probs, const std::vector<std::size_t>& targets);

// ||x - ref||^2 / ||ref||^2. Throws DataError for a zero-energy reference.
template <typename T>
double nmse(const BasicTensor<T>& x, const BasicTensor<T>& ref);

// Mean of ssim_map, evaluated without recording.
template <typename T>
double mean_ssim(const BasicTensor<T>& x, const BasicTensor<T>& ref, const SsimConfig& cfg);

}  // namespace collagan
