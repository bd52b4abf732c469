#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "collagan/data.hpp"

namespace collagan {

// A deterministic pixelwise or spatial map from a subject's base image to one
// domain's appearance.
struct DomainTransform {
  std::string name;
  std::function<Tensor(const Tensor& base)> apply;
};

// identity, inversion, gamma, illumination, blur (in that order).
const std::vector<DomainTransform>& transform_registry();

// Illumination ramp applied by the "illumination" domain: a left-to-right
// multiplicative gain from 0.5 to 1.0.
float illumination_gain(std::size_t column, std::size_t width);

struct SyntheticDataset {
  std::vector<DomainSample> samples;
  std::vector<Tensor> bases;
  std::vector<std::string> domain_names;
  std::uint64_t seed = 0;

  // Ground-truth image of `domain` for sample index `subject`.
  Tensor ground_truth(std::size_t subject, std::size_t domain) const;
};

// Smooth random base image in [0.1, 0.9]: a sum of four low-frequency
// sinusoids rescaled to [0,1], squared (so a base and its inversion differ in
// mean brightness) and mapped affinely onto [0.1, 0.9].
Tensor synth_base_image(std::mt19937_64& rng, std::size_t height, std::size_t width);

// Subjects are named s000, s001, ...; domain d uses transform_registry()[d].
SyntheticDataset synth_dataset(std::size_t n_subjects, std::size_t n_domains, std::size_t height, std::size_t width,
                               std::uint64_t seed);

}  // namespace collagan
