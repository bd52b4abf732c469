#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "collagan/tensor.hpp"

namespace collagan {

// One subject's aligned images, one (C,H,W) image per domain in domain-index
// order. Unavailable domains hold a zero image of the common shape.
struct DomainSample {
  std::string subject_id;
  std::vector<Tensor> images;
  std::vector<bool> available;

  std::size_t n_domains() const { return images.size(); }
  const Shape& image_shape() const { return images.at(0).shape(); }
  // Checks shape agreement and the [0,1] value range of available images.
  void validate() const;
};

// (N,H,W) one-hot map: channel `target` all ones, the rest zeros.
template <typename T = float>
BasicTensor<T> make_mask(std::size_t target, std::size_t n_domains, std::size_t height, std::size_t width);

// Channel concatenation of N image slots followed by the (B,N,H,W) target
// mask. Empty slots, and the target slot whatever it holds, are zero-filled.
// Every present slot is (B,C,H,W). Differentiable in the slot tensors.
template <typename T>
BasicTensor<T> assemble_slots(const std::vector<std::optional<BasicTensor<T>>>& slots, std::size_t target,
                              const Shape& slot_shape);

// (1, N*C + N, H, W) generator input for one sample. The target image, nulled
// domains and unavailable domains are zero-filled. Throws DataError when no
// complement domain carries data.
Tensor assemble_input(const DomainSample& sample, std::size_t target, const std::vector<std::size_t>& null_set);

// Batched assemble_input with one null set per sample.
Tensor assemble_batch(const std::vector<const DomainSample*>& samples, std::size_t target,
                      const std::vector<std::vector<std::size_t>>& null_sets);

// (B,C,H,W) stack of one domain's images.
Tensor stack_domain(const std::vector<const DomainSample*>& samples, std::size_t domain);

// Nulls each complement domain independently with probability `rate`,
// redrawing when every complement domain would be nulled.
std::vector<std::size_t> input_dropout_sample(std::mt19937_64& rng, std::size_t n_domains, std::size_t target,
                                              double rate);

// BT.601 full-range conversion on (3,H,W) images in [0,1]; chroma is offset
// by 0.5 so achromatic pixels map to Cb = Cr = 0.5.
template <typename T>
BasicTensor<T> rgb_to_ycbcr(const BasicTensor<T>& rgb);
template <typename T>
BasicTensor<T> ycbcr_to_rgb(const BasicTensor<T>& ycbcr);

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
};

// Seeded shuffle, then contiguous train/validation/test blocks of sizes
// round(f0*n), round(f1*n) and the remainder.
DatasetSplit split_by_subject(const std::vector<std::string>& subject_ids, const std::array<double, 3>& fractions,
                              std::uint64_t seed);

std::vector<const DomainSample*> select_subjects(const std::vector<DomainSample>& samples,
                                                 const std::vector<std::string>& ids);

}  // namespace collagan
