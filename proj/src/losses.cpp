#include "collagan/losses.hpp"

#include <cmath>
#include <sstream>

#include "collagan/layers.hpp"
#include "collagan/ops.hpp"

namespace collagan {

void SsimConfig::validate() const {
  if (!(k1 > 0.0) || !(k2 > 0.0)) throw ConfigError("ssim: k1 and k2 must be positive");
  if (!(dynamic_range > 0.0)) throw ConfigError("ssim: dynamic range must be positive");
  if (window_size == 0 || window_size % 2 == 0) throw ConfigError("ssim: window size must be odd");
  if (window == SsimWindow::gaussian && !(sigma > 0.0)) throw ConfigError("ssim: gaussian sigma must be positive");
}

std::vector<double> SsimConfig::kernel() const {
  validate();
  std::vector<double> k(window_size);
  const double r = static_cast<double>(window_size / 2);
  double total = 0.0;
  for (std::size_t i = 0; i < window_size; ++i) {
    const double d = static_cast<double>(i) - r;
    k[i] = window == SsimWindow::gaussian ? std::exp(-d * d / (2.0 * sigma * sigma)) : 1.0;
    total += k[i];
  }
  for (auto& v : k) v /= total;
  return k;
}

void LossWeights::validate() const {
  if (!(mcc >= 0.0) || !(mcc_ssim >= 0.0) || !(gan >= 0.0) || !(clsf >= 0.0)) {
    throw ConfigError("loss weights must be non-negative");
  }
}

std::string LossReport::to_string() const {
  std::ostringstream os;
  os << "mcc=" << mcc << " mcc_ssim=" << mcc_ssim << " gan_gen=" << gan_gen << " gan_dsc=" << gan_dsc
     << " clsf_real=" << clsf_real << " clsf_fake=" << clsf_fake << " total_gen=" << total_gen
     << " total_dsc=" << total_dsc;
  return os.str();
}

LossReport aggregate(const LossParts& parts, const LossWeights& weights) {
  const std::pair<const char*, double> named[] = {
      {"mcc", parts.mcc},         {"mcc_ssim", parts.mcc_ssim},   {"gan_gen", parts.gan_gen},
      {"gan_dsc", parts.gan_dsc}, {"clsf_real", parts.clsf_real}, {"clsf_fake", parts.clsf_fake},
  };
  for (const auto& [name, value] : named) {
    if (!std::isfinite(value)) throw NumericalError(std::string("loss term '") + name + "' is not finite");
  }
  LossReport r;
  r.mcc = parts.mcc;
  r.mcc_ssim = parts.mcc_ssim;
  r.gan_gen = parts.gan_gen;
  r.gan_dsc = parts.gan_dsc;
  r.clsf_real = parts.clsf_real;
  r.clsf_fake = parts.clsf_fake;
  r.total_gen = weights.mcc * parts.mcc + weights.mcc_ssim * parts.mcc_ssim + weights.gan * parts.gan_gen +
                weights.clsf * parts.clsf_fake;
  r.total_dsc = parts.gan_dsc + parts.clsf_real;
  return r;
}

namespace {

template <typename T>
BasicTensor<T> as_batch(const BasicTensor<T>& x) {
  if (x.rank() == 4) return x;
  if (x.rank() == 3) return x.reshape(Shape{1, x.dim(0), x.dim(1), x.dim(2)});
  throw ShapeError("ssim: expected (C,H,W) or (B,C,H,W) image, got " + shape_str(x.shape()));
}

template <typename T>
BasicTensor<T> window_mean(const BasicTensor<T>& x, const std::vector<T>& kernel) {
  return nn::filter_reflect(nn::filter_reflect(x, kernel, 2), kernel, 3);
}

}  // namespace

template <typename T>
BasicTensor<T> ssim_map(const BasicTensor<T>& x, const BasicTensor<T>& y, const SsimConfig& cfg) {
  if (x.shape() != y.shape()) {
    throw ShapeError("ssim_map: shape mismatch " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  }
  const auto k64 = cfg.kernel();
  const std::vector<T> kernel(k64.begin(), k64.end());
  const T c1 = static_cast<T>(cfg.c1()), c2 = static_cast<T>(cfg.c2());
  const auto xb = as_batch(x), yb = as_batch(y);

  using namespace ops;
  const auto mu_x = window_mean(xb, kernel);
  const auto mu_y = window_mean(yb, kernel);
  const auto mu_xx = mul(mu_x, mu_x);
  const auto mu_yy = mul(mu_y, mu_y);
  const auto mu_xy = mul(mu_x, mu_y);
  const auto var_x = sub(window_mean(mul(xb, xb), kernel), mu_xx);
  const auto var_y = sub(window_mean(mul(yb, yb), kernel), mu_yy);
  const auto cov = sub(window_mean(mul(xb, yb), kernel), mu_xy);

  const auto luminance_num = add_scalar(mul_scalar(mu_xy, T(2)), c1);
  const auto luminance_den = add_scalar(add(mu_xx, mu_yy), c1);
  const auto structure_num = add_scalar(mul_scalar(cov, T(2)), c2);
  const auto structure_den = add_scalar(add(var_x, var_y), c2);
  auto map = div(mul(luminance_num, structure_num), mul(luminance_den, structure_den));
  return x.rank() == 3 ? map.reshape(x.shape()) : map;
}

template <typename T>
BasicTensor<T> ssim_loss_from_map(const BasicTensor<T>& map) {
  using namespace ops;
  const auto similarity = mul_scalar(mean(add_scalar(map, T(1))), T(0.5));
  return neg(log(clamp_min(similarity, static_cast<T>(kLogFloor))));
}

template <typename T>
BasicTensor<T> ssim_loss(const BasicTensor<T>& x, const BasicTensor<T>& y, const SsimConfig& cfg) {
  return ssim_loss_from_map(ssim_map(x, y, cfg));
}

namespace {

template <typename T>
void require_aligned(const char* op, const std::vector<BasicTensor<T>>& a, const std::vector<BasicTensor<T>>& b) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": " + std::to_string(a.size()) + " originals but " +
                     std::to_string(b.size()) + " reconstructions");
  }
  if (a.empty()) throw ShapeError(std::string(op) + ": no image pairs");
}

}  // namespace

template <typename T>
BasicTensor<T> mcc_loss(const std::vector<BasicTensor<T>>& originals,
                        const std::vector<BasicTensor<T>>& reconstructions) {
  require_aligned("mcc_loss", originals, reconstructions);
  std::vector<BasicTensor<T>> terms;
  for (std::size_t i = 0; i < originals.size(); ++i) {
    terms.push_back(ops::mean(ops::abs(ops::sub(originals[i], reconstructions[i]))));
  }
  return ops::weighted_sum(terms, std::vector<T>(terms.size(), T(1)));
}

template <typename T>
BasicTensor<T> mcc_ssim_loss(const std::vector<BasicTensor<T>>& originals,
                             const std::vector<BasicTensor<T>>& reconstructions, const SsimConfig& cfg) {
  require_aligned("mcc_ssim_loss", originals, reconstructions);
  std::vector<BasicTensor<T>> terms;
  for (std::size_t i = 0; i < originals.size(); ++i) terms.push_back(ssim_loss(originals[i], reconstructions[i], cfg));
  return ops::weighted_sum(terms, std::vector<T>(terms.size(), T(1)));
}

template <typename T>
BasicTensor<T> lsgan_dsc_loss(const BasicTensor<T>& d_real, const BasicTensor<T>& d_fake) {
  using namespace ops;
  return add(mean(square(add_scalar(d_real, T(-1)))), mean(square(d_fake)));
}

template <typename T>
BasicTensor<T> lsgan_gen_loss(const BasicTensor<T>& d_fake) {
  using namespace ops;
  return mean(square(add_scalar(d_fake, T(-1))));
}

template <typename T>
BasicTensor<T> clsf_loss(const BasicTensor<T>& probs, const std::vector<std::size_t>& targets) {
  if (probs.rank() != 2 || probs.dim(0) != targets.size()) {
    throw ShapeError("clsf_loss: probabilities " + shape_str(probs.shape()) + " do not match " +
                     std::to_string(targets.size()) + " targets");
  }
  const std::size_t classes = probs.dim(1);
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] >= classes) {
      throw ShapeError("clsf_loss: target " + std::to_string(targets[r]) + " out of range for " +
                       std::to_string(classes) + " domains");
    }
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) total += static_cast<double>(probs[r * classes + c]);
    if (std::abs(total - 1.0) > 1e-4) {
      throw ShapeError("clsf_loss: row " + std::to_string(r) + " sums to " + std::to_string(total) + ", not 1");
    }
  }
  using namespace ops;
  return mean(neg(log(clamp_min(pick(probs, targets), static_cast<T>(kLogFloor)))));
}

template <typename T>
double nmse(const BasicTensor<T>& x, const BasicTensor<T>& ref) {
  if (x.shape() != ref.shape()) {
    throw ShapeError("nmse: shape mismatch " + shape_str(x.shape()) + " vs " + shape_str(ref.shape()));
  }
  double err = 0.0, energy = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double r = static_cast<double>(ref[i]);
    const double d = static_cast<double>(x[i]) - r;
    err += d * d;
    energy += r * r;
  }
  if (energy == 0.0) throw DataError("nmse: reference image has zero energy");
  return err / energy;
}

template <typename T>
double mean_ssim(const BasicTensor<T>& x, const BasicTensor<T>& ref, const SsimConfig& cfg) {
  NoGradScope<T> no_grad;
  const auto map = ssim_map(x, ref, cfg);
  double total = 0.0;
  for (T v : map.data()) total += static_cast<double>(v);
  return total / static_cast<double>(map.numel());
}

#define COLLAGAN_INSTANTIATE(T)                                                                                  \
  template BasicTensor<T> ssim_map<T>(const BasicTensor<T>&, const BasicTensor<T>&, const SsimConfig&);          \
  template BasicTensor<T> ssim_loss_from_map<T>(const BasicTensor<T>&);                                          \
  template BasicTensor<T> ssim_loss<T>(const BasicTensor<T>&, const BasicTensor<T>&, const SsimConfig&);         \
  template BasicTensor<T> mcc_loss<T>(const std::vector<BasicTensor<T>>&, const std::vector<BasicTensor<T>>&);   \
  template BasicTensor<T> mcc_ssim_loss<T>(const std::vector<BasicTensor<T>>&, const std::vector<BasicTensor<T>>&, \
                                           const SsimConfig&);                                                   \
  template BasicTensor<T> lsgan_dsc_loss<T>(const BasicTensor<T>&, const BasicTensor<T>&);                       \
  template BasicTensor<T> lsgan_gen_loss<T>(const BasicTensor<T>&);                                              \
  template BasicTensor<T> clsf_loss<T>(const BasicTensor<T>&, const std::vector<std::size_t>&);                  \
  template double nmse<T>(const BasicTensor<T>&, const BasicTensor<T>&);                                         \
  template double mean_ssim<T>(const BasicTensor<T>&, const BasicTensor<T>&, const SsimConfig&);

COLLAGAN_INSTANTIATE(float)
COLLAGAN_INSTANTIATE(double)

#undef COLLAGAN_INSTANTIATE

}  // namespace collagan
