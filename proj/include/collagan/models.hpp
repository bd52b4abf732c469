#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "collagan/layers.hpp"
#include "collagan/tensor.hpp"

namespace collagan {

enum class GeneratorArch { inception_unet, plain_unet, multi_branch_unet };

std::string to_string(GeneratorArch arch);
GeneratorArch parse_generator_arch(const std::string& name);

struct GeneratorSpec {
  GeneratorArch arch = GeneratorArch::plain_unet;
  std::size_t n_domains = 4;
  std::size_t in_channels = 1;
  std::size_t base_width = 8;
  std::size_t depth = 3;
  // Bottleneck residual blocks of the multi-branch decoder.
  std::size_t residual_blocks = 2;
  double leaky_slope = 0.2;

  void validate() const;
  // N image slots of in_channels each, then N mask channels.
  std::size_t input_channels() const { return n_domains * in_channels + n_domains; }
  std::size_t width_at(std::size_t level) const { return base_width << level; }
};

struct DiscriminatorSpec {
  std::size_t n_domains = 4;
  std::size_t in_channels = 1;
  std::size_t image_size = 32;
  std::size_t base_width = 16;
  std::size_t n_downsamples = 4;
  bool multi_scale = false;
  double dropout_rate = 0.3;
  double leaky_slope = 0.2;

  void validate() const;
  std::size_t patch_size() const { return image_size >> n_downsamples; }
};

namespace detail {

template <typename T>
struct Conv {
  BasicTensor<T> weight;
  BasicTensor<T> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::string name;
  BasicTensor<T> operator()(const BasicTensor<T>& x) const;
};

template <typename T>
struct UpConv {
  BasicTensor<T> weight;
  BasicTensor<T> bias;
  std::string name;
  BasicTensor<T> operator()(const BasicTensor<T>& x) const;
};

template <typename T>
struct Norm {
  BasicTensor<T> scale;
  BasicTensor<T> shift;
  BasicTensor<T> operator()(const BasicTensor<T>& x) const;
};

// Conv(3x3) or the dual 1x1/3x3 branch pair, then instance norm and leaky ReLU.
template <typename T>
struct Unit {
  std::vector<Conv<T>> branches;
  Norm<T> norm;
  T slope;
  std::size_t out_channels = 0;
  BasicTensor<T> operator()(const BasicTensor<T>& x) const;
};

template <typename T>
struct ResidualBlock {
  Unit<T> first;
  Conv<T> conv;
  Norm<T> norm;
  BasicTensor<T> operator()(const BasicTensor<T>& x) const;
};

template <typename T>
struct Encoder {
  // levels[l] holds the two units of level l; level 0 has no pooling.
  std::vector<std::vector<Unit<T>>> levels;
};

}  // namespace detail

// Single U-net generator conditioned on a one-hot target mask.
template <typename T>
class Generator {
 public:
  Generator(const GeneratorSpec& spec, std::uint64_t seed);
  Generator(const Generator&) = delete;
  Generator& operator=(const Generator&) = delete;
  Generator(Generator&&) = default;
  Generator& operator=(Generator&&) = default;

  // (B, N*C + N, H, W) -> (B, C, H, W); H and W divisible by 2^depth.
  BasicTensor<T> forward(const BasicTensor<T>& input) const;

  const GeneratorSpec& spec() const { return spec_; }
  nn::ParameterStore<T>& params() { return store_; }
  const nn::ParameterStore<T>& params() const { return store_; }
  std::size_t parameter_count() const { return store_.parameter_count(); }
  // Output width of the first unit at each encoder level, bottleneck last.
  std::vector<std::size_t> unit_widths() const;

 private:
  BasicTensor<T> forward_unet(const BasicTensor<T>& input) const;
  BasicTensor<T> forward_multi_branch(const BasicTensor<T>& input) const;

  GeneratorSpec spec_;
  nn::ParameterStore<T> store_;
  std::vector<detail::Encoder<T>> encoders_;  // one, or one per domain
  std::vector<detail::Unit<T>> bottleneck_;
  std::vector<detail::ResidualBlock<T>> residual_;
  std::vector<detail::UpConv<T>> up_;              // up_[l] maps level l+1 -> l
  std::vector<std::vector<detail::Unit<T>>> decoder_;  // decoder_[l] for l < depth
  detail::Conv<T> head_;                           // 1x1, width -> width
  detail::Conv<T> projection_;                     // 1x1, width -> in_channels
};

template <typename T>
struct DiscriminatorOutput {
  BasicTensor<T> patch;  // (B, 1, h, w), sigmoid scores
  BasicTensor<T> probs;  // (B, N), softmax over domains
};

// Shared convolutional trunk with a PatchGAN real/fake head and a domain
// classification head.
template <typename T>
class Discriminator {
 public:
  Discriminator(const DiscriminatorSpec& spec, std::uint64_t seed);
  Discriminator(const Discriminator&) = delete;
  Discriminator& operator=(const Discriminator&) = delete;
  Discriminator(Discriminator&&) = default;
  Discriminator& operator=(Discriminator&&) = default;

  // `rng` drives dropout in train mode and may be null in eval mode.
  DiscriminatorOutput<T> forward(const BasicTensor<T>& image, nn::Mode mode, std::mt19937_64* rng) const;
  // Trunk and class head only.
  BasicTensor<T> classify(const BasicTensor<T>& image, nn::Mode mode, std::mt19937_64* rng) const;

  const DiscriminatorSpec& spec() const { return spec_; }
  nn::ParameterStore<T>& params() { return store_; }
  const nn::ParameterStore<T>& params() const { return store_; }
  std::size_t parameter_count() const { return store_.parameter_count(); }
  // Channels of the multi-scale concatenation (0 when single-scale).
  std::size_t branch_channels() const { return branch_channels_; }

 private:
  BasicTensor<T> trunk(const BasicTensor<T>& image, nn::Mode mode, std::mt19937_64* rng) const;

  DiscriminatorSpec spec_;
  nn::ParameterStore<T> store_;
  std::vector<std::vector<detail::Conv<T>>> branches_;
  std::vector<detail::Conv<T>> stages_;
  detail::Conv<T> patch_head_;
  BasicTensor<T> class_weight_;
  BasicTensor<T> class_bias_;
  std::size_t branch_channels_ = 0;
};

}  // namespace collagan
