#include "collagan/data.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "collagan/ops.hpp"

namespace collagan {

void DomainSample::validate() const {
  if (images.empty()) throw DataError("sample '" + subject_id + "': no domain images");
  if (available.size() != images.size()) {
    throw DataError("sample '" + subject_id + "': availability flags do not match domain count");
  }
  const Shape& shape = images[0].shape();
  if (shape.size() != 3) throw DataError("sample '" + subject_id + "': images must be (C,H,W), got " + shape_str(shape));
  for (std::size_t d = 0; d < images.size(); ++d) {
    if (images[d].shape() != shape) {
      throw DataError("sample '" + subject_id + "': domain " + std::to_string(d) + " has shape " +
                      shape_str(images[d].shape()) + ", expected " + shape_str(shape));
    }
    if (!available[d]) continue;
    for (float v : images[d].data()) {
      if (!(v >= 0.0f && v <= 1.0f)) {
        throw DataError("sample '" + subject_id + "': domain " + std::to_string(d) + " has value outside [0,1]");
      }
    }
  }
}

template <typename T>
BasicTensor<T> make_mask(std::size_t target, std::size_t n_domains, std::size_t height, std::size_t width) {
  if (target >= n_domains) {
    throw DataError("mask: target domain " + std::to_string(target) + " out of range for " +
                    std::to_string(n_domains) + " domains");
  }
  BasicTensor<T> mask(Shape{n_domains, height, width});
  auto plane = mask.data().subspan(target * height * width, height * width);
  std::fill(plane.begin(), plane.end(), T(1));
  return mask;
}

template <typename T>
BasicTensor<T> assemble_slots(const std::vector<std::optional<BasicTensor<T>>>& slots, std::size_t target,
                              const Shape& slot_shape) {
  const std::size_t n = slots.size();
  if (slot_shape.size() != 4) throw ShapeError("assemble_slots: slot shape must be (B,C,H,W)");
  if (target >= n) throw DataError("assemble_slots: target " + std::to_string(target) + " out of range");
  const std::size_t batch = slot_shape[0], h = slot_shape[2], w = slot_shape[3];
  std::vector<BasicTensor<T>> parts;
  bool any_live = false;
  for (std::size_t d = 0; d < n; ++d) {
    if (d != target && slots[d].has_value()) {
      if (slots[d]->shape() != slot_shape) {
        throw ShapeError("assemble_slots: slot " + std::to_string(d) + " has shape " + shape_str(slots[d]->shape()) +
                         ", expected " + shape_str(slot_shape));
      }
      parts.push_back(*slots[d]);
      any_live = true;
    } else {
      parts.push_back(BasicTensor<T>(slot_shape));
    }
  }
  if (!any_live) throw DataError("assemble_slots: no information to impute from");
  BasicTensor<T> mask(Shape{batch, n, h, w});
  for (std::size_t b = 0; b < batch; ++b) {
    auto plane = mask.data().subspan((b * n + target) * h * w, h * w);
    std::fill(plane.begin(), plane.end(), T(1));
  }
  parts.push_back(mask);
  return ops::concat(parts, 1);
}

Tensor assemble_batch(const std::vector<const DomainSample*>& samples, std::size_t target,
                      const std::vector<std::vector<std::size_t>>& null_sets) {
  if (samples.empty()) throw DataError("assemble: empty batch");
  if (null_sets.size() != samples.size()) throw DataError("assemble: one null set per sample is required");
  const std::size_t n = samples[0]->n_domains();
  const Shape& image_shape = samples[0]->image_shape();
  if (target >= n) {
    throw DataError("assemble: target domain " + std::to_string(target) + " out of range for " + std::to_string(n) +
                    " domains");
  }
  const std::size_t c = image_shape[0], h = image_shape[1], w = image_shape[2];
  const std::size_t plane = h * w, slot = c * plane, per_sample = (n * c + n) * plane;
  Tensor out(Shape{samples.size(), n * c + n, h, w});
  for (std::size_t b = 0; b < samples.size(); ++b) {
    const DomainSample& s = *samples[b];
    if (s.n_domains() != n || s.image_shape() != image_shape) {
      throw DataError("assemble: sample '" + s.subject_id + "' does not match the batch layout");
    }
    std::vector<bool> live(n, false);
    for (std::size_t d = 0; d < n; ++d) live[d] = d != target && s.available[d];
    for (std::size_t d : null_sets[b]) {
      if (d >= n) throw DataError("assemble: null domain " + std::to_string(d) + " out of range");
      live[d] = false;
    }
    if (std::none_of(live.begin(), live.end(), [](bool v) { return v; })) {
      throw DataError("assemble: sample '" + s.subject_id + "' has no information to impute from");
    }
    float* dst = out.data().data() + b * per_sample;
    for (std::size_t d = 0; d < n; ++d) {
      if (!live[d]) continue;
      auto src = s.images[d].data();
      std::copy(src.begin(), src.end(), dst + d * slot);
    }
    std::fill_n(dst + n * slot + target * plane, plane, 1.0f);
  }
  return out;
}

Tensor assemble_input(const DomainSample& sample, std::size_t target, const std::vector<std::size_t>& null_set) {
  return assemble_batch({&sample}, target, {null_set});
}

Tensor stack_domain(const std::vector<const DomainSample*>& samples, std::size_t domain) {
  if (samples.empty()) throw DataError("stack: empty batch");
  const Shape& shape = samples[0]->image_shape();
  Tensor out(Shape{samples.size(), shape[0], shape[1], shape[2]});
  const std::size_t n = shape_numel(shape);
  for (std::size_t b = 0; b < samples.size(); ++b) {
    const auto& img = samples[b]->images.at(domain);
    if (img.shape() != shape) throw DataError("stack: sample '" + samples[b]->subject_id + "' has a different shape");
    std::copy(img.data().begin(), img.data().end(), out.data().begin() + b * n);
  }
  return out;
}

std::vector<std::size_t> input_dropout_sample(std::mt19937_64& rng, std::size_t n_domains, std::size_t target,
                                              double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("input dropout rate must lie in [0, 1)");
  if (target >= n_domains) throw DataError("input dropout: target out of range");
  std::vector<std::size_t> nulled;
  if (rate == 0.0) return nulled;
  std::bernoulli_distribution drop(rate);
  const std::size_t complement = n_domains - 1;
  do {
    nulled.clear();
    for (std::size_t d = 0; d < n_domains; ++d) {
      if (d != target && drop(rng)) nulled.push_back(d);
    }
  } while (nulled.size() == complement);
  return nulled;
}

namespace {
constexpr double kR = 0.299, kG = 0.587, kB = 0.114;
constexpr double kCb = 2.0 * (1.0 - kB);  // 1.772
constexpr double kCr = 2.0 * (1.0 - kR);  // 1.402

template <typename T>
void require_three_channels(const char* op, const BasicTensor<T>& img) {
  if (img.rank() != 3 || img.dim(0) != 3) {
    throw ShapeError(std::string(op) + ": expected (3,H,W) image, got " + shape_str(img.shape()));
  }
}
}  // namespace

template <typename T>
BasicTensor<T> rgb_to_ycbcr(const BasicTensor<T>& rgb) {
  require_three_channels("rgb_to_ycbcr", rgb);
  const std::size_t p = rgb.dim(1) * rgb.dim(2);
  BasicTensor<T> out(rgb.shape());
  for (std::size_t i = 0; i < p; ++i) {
    const double r = rgb[i], g = rgb[p + i], b = rgb[2 * p + i];
    const double y = kR * r + kG * g + kB * b;
    out[i] = static_cast<T>(y);
    out[p + i] = static_cast<T>(0.5 + (b - y) / kCb);
    out[2 * p + i] = static_cast<T>(0.5 + (r - y) / kCr);
  }
  return out;
}

template <typename T>
BasicTensor<T> ycbcr_to_rgb(const BasicTensor<T>& ycbcr) {
  require_three_channels("ycbcr_to_rgb", ycbcr);
  const std::size_t p = ycbcr.dim(1) * ycbcr.dim(2);
  BasicTensor<T> out(ycbcr.shape());
  for (std::size_t i = 0; i < p; ++i) {
    const double y = ycbcr[i], cb = ycbcr[p + i] - 0.5, cr = ycbcr[2 * p + i] - 0.5;
    const double r = y + kCr * cr;
    const double b = y + kCb * cb;
    const double g = (y - kR * r - kB * b) / kG;
    out[i] = static_cast<T>(r);
    out[p + i] = static_cast<T>(g);
    out[2 * p + i] = static_cast<T>(b);
  }
  return out;
}

DatasetSplit split_by_subject(const std::vector<std::string>& subject_ids, const std::array<double, 3>& fractions,
                              std::uint64_t seed) {
  if (subject_ids.empty()) throw DataError("split: no subjects");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw ConfigError("split: fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split: fractions must sum to 1");

  std::vector<std::string> ids = subject_ids;
  std::mt19937_64 rng(seed);
  // Explicit Fisher-Yates so the order does not depend on the library's shuffle.
  for (std::size_t i = ids.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(ids[i - 1], ids[pick(rng)]);
  }
  const std::size_t n = ids.size();
  const std::size_t n_train = std::min(n, static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n))));
  const std::size_t n_val =
      std::min(n - n_train, static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n))));
  DatasetSplit split;
  split.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.validation.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                          ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), ids.end());
  return split;
}

std::vector<const DomainSample*> select_subjects(const std::vector<DomainSample>& samples,
                                                 const std::vector<std::string>& ids) {
  std::unordered_map<std::string, const DomainSample*> by_id;
  for (const auto& s : samples) by_id.emplace(s.subject_id, &s);
  std::vector<const DomainSample*> out;
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("unknown subject '" + id + "'");
    out.push_back(it->second);
  }
  return out;
}

template Tensor make_mask<float>(std::size_t, std::size_t, std::size_t, std::size_t);
template Tensor64 make_mask<double>(std::size_t, std::size_t, std::size_t, std::size_t);
template Tensor assemble_slots<float>(const std::vector<std::optional<Tensor>>&, std::size_t, const Shape&);
template Tensor64 assemble_slots<double>(const std::vector<std::optional<Tensor64>>&, std::size_t, const Shape&);
template Tensor rgb_to_ycbcr<float>(const Tensor&);
template Tensor64 rgb_to_ycbcr<double>(const Tensor64&);
template Tensor ycbcr_to_rgb<float>(const Tensor&);
template Tensor64 ycbcr_to_rgb<double>(const Tensor64&);

}  // namespace collagan
