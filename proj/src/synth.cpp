#include "collagan/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace collagan {
namespace {

Tensor map_pixels(const Tensor& base, const std::function<float(float, std::size_t, std::size_t)>& f) {
  Tensor out(base.shape());
  const std::size_t c = base.dim(0), h = base.dim(1), w = base.dim(2);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        const std::size_t k = (ch * h + i) * w + j;
        out[k] = f(base[k], i, j);
      }
    }
  }
  return out;
}

// 3x3 mean with edge replication.
Tensor box_blur(const Tensor& base) {
  Tensor out(base.shape());
  const std::ptrdiff_t c = static_cast<std::ptrdiff_t>(base.dim(0));
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(base.dim(1));
  const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(base.dim(2));
  for (std::ptrdiff_t ch = 0; ch < c; ++ch) {
    for (std::ptrdiff_t i = 0; i < h; ++i) {
      for (std::ptrdiff_t j = 0; j < w; ++j) {
        float acc = 0.0f;
        for (std::ptrdiff_t di = -1; di <= 1; ++di) {
          for (std::ptrdiff_t dj = -1; dj <= 1; ++dj) {
            const std::ptrdiff_t y = std::clamp(i + di, std::ptrdiff_t{0}, h - 1);
            const std::ptrdiff_t x = std::clamp(j + dj, std::ptrdiff_t{0}, w - 1);
            acc += base[static_cast<std::size_t>((ch * h + y) * w + x)];
          }
        }
        out[static_cast<std::size_t>((ch * h + i) * w + j)] = acc / 9.0f;
      }
    }
  }
  return out;
}

}  // namespace

float illumination_gain(std::size_t column, std::size_t width) {
  if (width <= 1) return 1.0f;
  return 0.5f + 0.5f * static_cast<float>(column) / static_cast<float>(width - 1);
}

const std::vector<DomainTransform>& transform_registry() {
  static const std::vector<DomainTransform> registry = {
      {"identity", [](const Tensor& b) { return b.clone(); }},
      {"inversion", [](const Tensor& b) { return map_pixels(b, [](float v, std::size_t, std::size_t) { return 1.0f - v; }); }},
      {"gamma",
       [](const Tensor& b) {
         return map_pixels(b, [](float v, std::size_t, std::size_t) { return static_cast<float>(std::pow(v, 2.2)); });
       }},
      {"illumination",
       [](const Tensor& b) {
         const std::size_t w = b.dim(2);
         return map_pixels(b, [w](float v, std::size_t, std::size_t j) { return v * illumination_gain(j, w); });
       }},
      {"blur", [](const Tensor& b) { return box_blur(b); }},
  };
  return registry;
}

Tensor synth_base_image(std::mt19937_64& rng, std::size_t height, std::size_t width) {
  std::uniform_real_distribution<double> freq(0.5, 2.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> amplitude(0.5, 1.0);
  std::bernoulli_distribution flip(0.5);
  constexpr int kComponents = 4;
  double fy[kComponents], fx[kComponents], ph[kComponents], amp[kComponents];
  for (int k = 0; k < kComponents; ++k) {
    fy[k] = freq(rng) * (flip(rng) ? 1.0 : -1.0);
    fx[k] = freq(rng);
    ph[k] = phase(rng);
    amp[k] = amplitude(rng);
  }
  std::vector<double> field(height * width);
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      double v = 0.0;
      for (int k = 0; k < kComponents; ++k) {
        v += amp[k] * std::sin(2.0 * std::numbers::pi *
                                   (fy[k] * static_cast<double>(i) / static_cast<double>(height) +
                                    fx[k] * static_cast<double>(j) / static_cast<double>(width)) +
                               ph[k]);
      }
      field[i * width + j] = v;
    }
  }
  const auto [lo, hi] = std::minmax_element(field.begin(), field.end());
  const double low = *lo, span = std::max(*hi - *lo, 1e-12);
  Tensor base(Shape{1, height, width});
  for (std::size_t k = 0; k < field.size(); ++k) {
    const double s = (field[k] - low) / span;
    base[k] = static_cast<float>(0.1 + 0.8 * s * s);
  }
  return base;
}

Tensor SyntheticDataset::ground_truth(std::size_t subject, std::size_t domain) const {
  const auto& registry = transform_registry();
  if (subject >= bases.size() || domain >= domain_names.size()) throw DataError("ground truth: index out of range");
  return registry[domain].apply(bases[subject]);
}

SyntheticDataset synth_dataset(std::size_t n_subjects, std::size_t n_domains, std::size_t height, std::size_t width,
                               std::uint64_t seed) {
  const auto& registry = transform_registry();
  if (n_domains > registry.size()) {
    throw ConfigError("synthetic dataset: " + std::to_string(n_domains) + " domains requested, only " +
                      std::to_string(registry.size()) + " transforms registered");
  }
  if (n_domains < 2) throw ConfigError("synthetic dataset: at least two domains are required");
  if (n_subjects == 0 || height == 0 || width == 0) throw ConfigError("synthetic dataset: empty dataset requested");

  SyntheticDataset ds;
  ds.seed = seed;
  for (std::size_t d = 0; d < n_domains; ++d) ds.domain_names.push_back(registry[d].name);
  std::mt19937_64 rng(seed);
  for (std::size_t s = 0; s < n_subjects; ++s) {
    Tensor base = synth_base_image(rng, height, width);
    DomainSample sample;
    char id[32];
    std::snprintf(id, sizeof(id), "s%03zu", s);
    sample.subject_id = id;
    for (std::size_t d = 0; d < n_domains; ++d) {
      sample.images.push_back(registry[d].apply(base));
      sample.available.push_back(true);
    }
    ds.bases.push_back(std::move(base));
    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

}  // namespace collagan
