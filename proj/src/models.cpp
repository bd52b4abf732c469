#include "collagan/models.hpp"

#include "collagan/ops.hpp"

namespace collagan {

std::string to_string(GeneratorArch arch) {
  switch (arch) {
    case GeneratorArch::inception_unet:
      return "inception_unet";
    case GeneratorArch::plain_unet:
      return "plain_unet";
    case GeneratorArch::multi_branch_unet:
      return "multi_branch_unet";
  }
  return "unknown";
}

GeneratorArch parse_generator_arch(const std::string& name) {
  if (name == "inception_unet") return GeneratorArch::inception_unet;
  if (name == "plain_unet") return GeneratorArch::plain_unet;
  if (name == "multi_branch_unet") return GeneratorArch::multi_branch_unet;
  throw ConfigError("unknown generator architecture '" + name + "'");
}

void GeneratorSpec::validate() const {
  if (depth < 1) throw ConfigError("generator: depth must be at least 1");
  if (base_width < 2) throw ConfigError("generator: base_width must be at least 2");
  if (n_domains < 2) throw ConfigError("generator: at least two domains are required");
  if (in_channels < 1) throw ConfigError("generator: in_channels must be positive");
  if (!(leaky_slope >= 0.0)) throw ConfigError("generator: leaky slope must be non-negative");
}

void DiscriminatorSpec::validate() const {
  if (n_domains < 2) throw ConfigError("discriminator: at least two domains are required");
  if (in_channels < 1) throw ConfigError("discriminator: in_channels must be positive");
  if (n_downsamples < 1) throw ConfigError("discriminator: n_downsamples must be at least 1");
  if (base_width < 1) throw ConfigError("discriminator: base_width must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("discriminator: dropout_rate must lie in [0, 1)");
  if (n_downsamples >= 8 * sizeof(std::size_t) || image_size == 0 || image_size % (std::size_t{1} << n_downsamples) != 0) {
    throw ConfigError("discriminator: image size " + std::to_string(image_size) + " not divisible by 2^" +
                      std::to_string(n_downsamples));
  }
  if (multi_scale) {
    if (n_downsamples < 2) throw ConfigError("discriminator: multi-scale trunk needs n_downsamples >= 2");
    if (base_width % 4 != 0) throw ConfigError("discriminator: multi-scale base_width must be a multiple of 4");
  }
}

namespace detail {

template <typename T>
BasicTensor<T> Conv<T>::operator()(const BasicTensor<T>& x) const {
  return nn::conv2d(x, weight, bias, stride, padding, name);
}

template <typename T>
BasicTensor<T> UpConv<T>::operator()(const BasicTensor<T>& x) const {
  return nn::conv_transpose2d(x, weight, bias, 2, name);
}

template <typename T>
BasicTensor<T> Norm<T>::operator()(const BasicTensor<T>& x) const {
  return nn::instance_norm(x, scale, shift);
}

template <typename T>
BasicTensor<T> Unit<T>::operator()(const BasicTensor<T>& x) const {
  BasicTensor<T> h;
  if (branches.size() == 1) {
    h = branches[0](x);
  } else {
    std::vector<BasicTensor<T>> parts;
    for (const auto& b : branches) parts.push_back(b(x));
    h = nn::concat_channels(parts);
  }
  return ops::leaky_relu(norm(h), slope);
}

template <typename T>
BasicTensor<T> ResidualBlock<T>::operator()(const BasicTensor<T>& x) const {
  return ops::add(x, norm(conv(first(x))));
}

}  // namespace detail

namespace {

using detail::Conv;
using detail::Norm;
using detail::Unit;
using detail::UpConv;

template <typename T>
Conv<T> make_conv(nn::ParameterStore<T>& store, std::mt19937_64& rng, const std::string& name, std::size_t cin,
                  std::size_t cout, std::size_t kernel, std::size_t stride, std::size_t padding) {
  Conv<T> c;
  c.weight = store.add(name + ".weight", Shape{cout, cin, kernel, kernel}, nn::Init::truncated_normal, rng);
  c.bias = store.add(name + ".bias", Shape{cout}, nn::Init::zeros, rng);
  c.stride = stride;
  c.padding = padding;
  c.name = name;
  return c;
}

template <typename T>
Norm<T> make_norm(nn::ParameterStore<T>& store, std::mt19937_64& rng, const std::string& name, std::size_t ch) {
  return Norm<T>{store.add(name + ".scale", Shape{ch}, nn::Init::ones, rng),
                 store.add(name + ".shift", Shape{ch}, nn::Init::zeros, rng)};
}

template <typename T>
Unit<T> make_unit(nn::ParameterStore<T>& store, std::mt19937_64& rng, const std::string& name, std::size_t cin,
                  std::size_t cout, bool inception, double slope) {
  Unit<T> u;
  if (inception) {
    const std::size_t pointwise = cout / 2;
    u.branches.push_back(make_conv(store, rng, name + ".conv1", cin, pointwise, 1, 1, 0));
    u.branches.push_back(make_conv(store, rng, name + ".conv3", cin, cout - pointwise, 3, 1, 1));
  } else {
    u.branches.push_back(make_conv(store, rng, name + ".conv3", cin, cout, 3, 1, 1));
  }
  u.norm = make_norm(store, rng, name + ".norm", cout);
  u.slope = static_cast<T>(slope);
  u.out_channels = cout;
  return u;
}

template <typename T>
UpConv<T> make_up(nn::ParameterStore<T>& store, std::mt19937_64& rng, const std::string& name, std::size_t cin,
                  std::size_t cout) {
  UpConv<T> u;
  u.weight = store.add(name + ".weight", Shape{cout, cin, 2, 2}, nn::Init::truncated_normal, rng);
  u.bias = store.add(name + ".bias", Shape{cout}, nn::Init::zeros, rng);
  u.name = name;
  return u;
}

template <typename T>
BasicTensor<T> run_units(const std::vector<Unit<T>>& units, BasicTensor<T> h) {
  for (const auto& u : units) h = u(h);
  return h;
}

// Stride-dependent kernel geometry of the discriminator convolutions.
template <typename T>
Conv<T> make_strided(nn::ParameterStore<T>& store, std::mt19937_64& rng, const std::string& name, std::size_t cin,
                     std::size_t cout, std::size_t stride) {
  switch (stride) {
    case 1:
      return make_conv(store, rng, name, cin, cout, 3, 1, 1);
    case 2:
      return make_conv(store, rng, name, cin, cout, 4, 2, 1);
    default:
      return make_conv(store, rng, name, cin, cout, 4, stride, 0);
  }
}

}  // namespace

template <typename T>
Generator<T>::Generator(const GeneratorSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  std::mt19937_64 rng(seed);
  const bool inception = spec_.arch == GeneratorArch::inception_unet;
  const bool multi = spec_.arch == GeneratorArch::multi_branch_unet;
  const std::size_t depth = spec_.depth, n = spec_.n_domains;
  const double slope = spec_.leaky_slope;

  const std::size_t n_encoders = multi ? n : 1;
  const std::size_t encoder_in = multi ? spec_.in_channels + n : spec_.input_channels();
  for (std::size_t e = 0; e < n_encoders; ++e) {
    detail::Encoder<T> enc;
    const std::string prefix = multi ? "enc" + std::to_string(e) : std::string("enc");
    for (std::size_t l = 0; l < depth; ++l) {
      const std::size_t cin = l == 0 ? encoder_in : spec_.width_at(l - 1);
      const std::string name = prefix + ".level" + std::to_string(l);
      enc.levels.push_back({make_unit(store_, rng, name + ".unit0", cin, spec_.width_at(l), inception, slope),
                            make_unit(store_, rng, name + ".unit1", spec_.width_at(l), spec_.width_at(l), inception,
                                      slope)});
    }
    if (multi) {
      enc.levels.push_back({make_unit(store_, rng, prefix + ".bottleneck", spec_.width_at(depth - 1),
                                      spec_.width_at(depth), inception, slope)});
    }
    encoders_.push_back(std::move(enc));
  }

  const std::size_t wd = spec_.width_at(depth);
  if (multi) {
    bottleneck_.push_back(make_unit(store_, rng, "fuse", n * wd, wd, inception, slope));
    for (std::size_t r = 0; r < spec_.residual_blocks; ++r) {
      const std::string name = "res" + std::to_string(r);
      detail::ResidualBlock<T> block;
      block.first = make_unit(store_, rng, name + ".unit", wd, wd, inception, slope);
      block.conv = make_conv(store_, rng, name + ".conv", wd, wd, 3, 1, 1);
      block.norm = make_norm(store_, rng, name + ".norm", wd);
      residual_.push_back(std::move(block));
    }
  } else {
    bottleneck_.push_back(make_unit(store_, rng, "bottleneck.unit0", spec_.width_at(depth - 1), wd, inception, slope));
    bottleneck_.push_back(make_unit(store_, rng, "bottleneck.unit1", wd, wd, inception, slope));
  }

  up_.resize(depth);
  decoder_.resize(depth);
  for (std::size_t l = depth; l-- > 0;) {
    const std::size_t w = spec_.width_at(l);
    up_[l] = make_up(store_, rng, "up" + std::to_string(l), spec_.width_at(l + 1), w);
    const std::size_t cin = (multi ? n * w : w) + w;
    const std::string name = "dec.level" + std::to_string(l);
    decoder_[l] = {make_unit(store_, rng, name + ".unit0", cin, w, inception, slope),
                   make_unit(store_, rng, name + ".unit1", w, w, inception, slope)};
  }
  head_ = make_conv(store_, rng, "head", spec_.width_at(0), spec_.width_at(0), 1, 1, 0);
  projection_ = make_conv(store_, rng, "projection", spec_.width_at(0), spec_.in_channels, 1, 1, 0);
}

template <typename T>
std::vector<std::size_t> Generator<T>::unit_widths() const {
  std::vector<std::size_t> widths;
  for (const auto& level : encoders_.front().levels) widths.push_back(level.front().out_channels);
  if (spec_.arch != GeneratorArch::multi_branch_unet) widths.push_back(bottleneck_.front().out_channels);
  return widths;
}

template <typename T>
BasicTensor<T> Generator<T>::forward(const BasicTensor<T>& input) const {
  if (input.rank() != 4 || input.dim(1) != spec_.input_channels()) {
    throw ShapeError("generator: expected (batch, " + std::to_string(spec_.input_channels()) +
                     ", H, W) input, got " + shape_str(input.shape()));
  }
  const std::size_t factor = std::size_t{1} << spec_.depth;
  if (input.dim(2) % factor != 0 || input.dim(3) % factor != 0 || input.dim(2) == 0 || input.dim(3) == 0) {
    throw ShapeError("generator: spatial size " + std::to_string(input.dim(2)) + "x" + std::to_string(input.dim(3)) +
                     " not divisible by 2^" + std::to_string(spec_.depth));
  }
  return spec_.arch == GeneratorArch::multi_branch_unet ? forward_multi_branch(input) : forward_unet(input);
}

template <typename T>
BasicTensor<T> Generator<T>::forward_unet(const BasicTensor<T>& input) const {
  const auto& levels = encoders_.front().levels;
  std::vector<BasicTensor<T>> skips;
  BasicTensor<T> h = input;
  for (std::size_t l = 0; l < spec_.depth; ++l) {
    if (l > 0) h = nn::avg_pool2(h);
    h = run_units(levels[l], h);
    skips.push_back(h);
  }
  h = run_units(bottleneck_, nn::avg_pool2(h));
  for (std::size_t l = spec_.depth; l-- > 0;) {
    h = up_[l](h);
    h = run_units(decoder_[l], nn::concat_channels<T>({skips[l], h}));
  }
  return projection_(head_(h));
}

template <typename T>
BasicTensor<T> Generator<T>::forward_multi_branch(const BasicTensor<T>& input) const {
  const std::size_t n = spec_.n_domains, c = spec_.in_channels, depth = spec_.depth;
  const auto mask = ops::slice(input, 1, n * c, n * c + n);
  std::vector<std::vector<BasicTensor<T>>> skips(depth);
  std::vector<BasicTensor<T>> features;
  for (std::size_t e = 0; e < n; ++e) {
    const auto& levels = encoders_[e].levels;
    BasicTensor<T> h = nn::concat_channels<T>({ops::slice(input, 1, e * c, (e + 1) * c), mask});
    for (std::size_t l = 0; l < depth; ++l) {
      if (l > 0) h = nn::avg_pool2(h);
      h = run_units(levels[l], h);
      skips[l].push_back(h);
    }
    features.push_back(run_units(levels[depth], nn::avg_pool2(h)));
  }
  BasicTensor<T> h = run_units(bottleneck_, nn::concat_channels(features));
  for (const auto& block : residual_) h = block(h);
  for (std::size_t l = depth; l-- > 0;) {
    auto parts = skips[l];
    parts.push_back(up_[l](h));
    h = run_units(decoder_[l], nn::concat_channels(parts));
  }
  return projection_(head_(h));
}

template <typename T>
Discriminator<T>::Discriminator(const DiscriminatorSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  std::mt19937_64 rng(seed);
  std::size_t channels = spec_.in_channels;
  if (spec_.multi_scale) {
    const std::size_t b = spec_.base_width / 4;
    // (width, stride) per layer of the three parallel branches; each ends at 1/4 resolution.
    const std::vector<std::vector<std::pair<std::size_t, std::size_t>>> layout = {
        {{b, 1}, {b, 1}, {b, 1}, {b, 1}, {4 * b, 4}},
        {{b, 1}, {2 * b, 2}, {2 * b, 1}, {4 * b, 2}, {4 * b, 1}},
        {{4 * b, 4}, {4 * b, 1}, {4 * b, 1}, {4 * b, 1}, {4 * b, 1}},
    };
    for (std::size_t br = 0; br < layout.size(); ++br) {
      std::vector<Conv<T>> convs;
      std::size_t cin = spec_.in_channels;
      for (std::size_t i = 0; i < layout[br].size(); ++i) {
        const auto [width, stride] = layout[br][i];
        convs.push_back(make_strided(store_, rng, "branch" + std::to_string(br) + ".conv" + std::to_string(i), cin,
                                     width, stride));
        cin = width;
      }
      branch_channels_ += cin;
      branches_.push_back(std::move(convs));
    }
    channels = branch_channels_;
    for (std::size_t j = 0; j + 2 < spec_.n_downsamples; ++j) {
      const std::size_t width = 8 * b << j;
      stages_.push_back(make_strided(store_, rng, "trunk.conv" + std::to_string(j), channels, width, 2));
      channels = width;
    }
  } else {
    for (std::size_t i = 0; i < spec_.n_downsamples; ++i) {
      const std::size_t width = spec_.base_width << i;
      stages_.push_back(make_strided(store_, rng, "trunk.conv" + std::to_string(i), channels, width, 2));
      channels = width;
    }
  }
  patch_head_ = make_conv(store_, rng, "gan_head", channels, 1, 3, 1, 1);
  const std::size_t patch = spec_.patch_size();
  class_weight_ = store_.add("clsf_head.weight", Shape{spec_.n_domains, channels * patch * patch},
                             nn::Init::truncated_normal, rng);
  class_bias_ = store_.add("clsf_head.bias", Shape{spec_.n_domains}, nn::Init::zeros, rng);
}

template <typename T>
BasicTensor<T> Discriminator<T>::trunk(const BasicTensor<T>& image, nn::Mode mode, std::mt19937_64* rng) const {
  if (image.rank() != 4 || image.dim(1) != spec_.in_channels || image.dim(2) != spec_.image_size ||
      image.dim(3) != spec_.image_size) {
    throw ShapeError("discriminator: expected (batch, " + std::to_string(spec_.in_channels) + ", " +
                     std::to_string(spec_.image_size) + ", " + std::to_string(spec_.image_size) + ") input, got " +
                     shape_str(image.shape()));
  }
  if (mode == nn::Mode::train && spec_.dropout_rate > 0.0 && rng == nullptr) {
    throw Error("discriminator: train-mode dropout needs a random generator");
  }
  const T slope = static_cast<T>(spec_.leaky_slope);
  BasicTensor<T> h = image;
  if (!branches_.empty()) {
    std::vector<BasicTensor<T>> parts;
    for (const auto& branch : branches_) {
      BasicTensor<T> b = image;
      for (const auto& conv : branch) b = ops::leaky_relu(conv(b), slope);
      parts.push_back(b);
    }
    h = nn::concat_channels(parts);
  }
  std::mt19937_64 unused;
  for (const auto& conv : stages_) {
    h = ops::leaky_relu(conv(h), slope);
    h = nn::dropout(h, spec_.dropout_rate, mode, rng ? *rng : unused);
  }
  return h;
}

template <typename T>
BasicTensor<T> Discriminator<T>::classify(const BasicTensor<T>& image, nn::Mode mode, std::mt19937_64* rng) const {
  const auto features = trunk(image, mode, rng);
  return ops::softmax(nn::fully_connected(ops::flatten(features), class_weight_, class_bias_, "clsf_head"));
}

template <typename T>
DiscriminatorOutput<T> Discriminator<T>::forward(const BasicTensor<T>& image, nn::Mode mode,
                                                 std::mt19937_64* rng) const {
  const auto features = trunk(image, mode, rng);
  DiscriminatorOutput<T> out;
  out.patch = ops::sigmoid(patch_head_(features));
  out.probs = ops::softmax(nn::fully_connected(ops::flatten(features), class_weight_, class_bias_, "clsf_head"));
  return out;
}

template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;

}  // namespace collagan
