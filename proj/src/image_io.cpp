#include "collagan/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

namespace collagan {
namespace fs = std::filesystem;

namespace {

class HeaderReader {
 public:
  HeaderReader(const std::vector<unsigned char>& bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(source_ + ": " + what + " at byte offset " + std::to_string(pos_));
  }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) fail("truncated header");
    if (!std::isdigit(bytes_[pos_])) fail("expected a decimal number in header");
    std::size_t value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (value > (1u << 24)) fail("header value too large");
      ++pos_;
    }
    return value;
  }

  std::size_t& pos() { return pos_; }

 private:
  const std::vector<unsigned char>& bytes_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

}  // namespace

Tensor decode_netpbm(const std::vector<unsigned char>& bytes, const std::string& source) {
  HeaderReader in(bytes, source);
  if (bytes.size() < 2) in.fail("truncated magic number");
  if (bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) in.fail("unsupported magic (expected P5 or P6)");
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  in.pos() = 2;
  const std::size_t width = in.number();
  const std::size_t height = in.number();
  const std::size_t maxval = in.number();
  if (width == 0 || height == 0) in.fail("zero image extent");
  if (maxval != 255) in.fail("unsupported maxval " + std::to_string(maxval) + " (expected 255)");
  if (in.pos() >= bytes.size() || !std::isspace(bytes[in.pos()])) in.fail("missing whitespace after maxval");
  ++in.pos();
  const std::size_t pixels = width * height;
  const std::size_t payload = pixels * channels;
  if (bytes.size() - in.pos() < payload) {
    in.fail("truncated payload (need " + std::to_string(payload) + " bytes, have " +
            std::to_string(bytes.size() - in.pos()) + ")");
  }
  Tensor image(Shape{channels, height, width});
  const unsigned char* src = bytes.data() + in.pos();
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t c = 0; c < channels; ++c) {
      image[c * pixels + p] = static_cast<float>(src[p * channels + c]) / 255.0f;
    }
  }
  return image;
}

std::vector<unsigned char> encode_netpbm(const Tensor& image) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
    throw ShapeError("write_image: expected (1,H,W) or (3,H,W) image, got " + shape_str(image.shape()));
  }
  const std::size_t channels = image.dim(0), height = image.dim(1), width = image.dim(2);
  const std::string header = std::string(channels == 1 ? "P5" : "P6") + "\n" + std::to_string(width) + " " +
                             std::to_string(height) + "\n255\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  const std::size_t pixels = width * height;
  bytes.reserve(bytes.size() + pixels * channels);
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t c = 0; c < channels; ++c) {
      float v = image[c * pixels + p];
      if (!(v >= 0.0f)) v = 0.0f;  // also maps NaN to 0
      v = std::min(v, 1.0f);
      bytes.push_back(static_cast<unsigned char>(std::floor(static_cast<double>(v) * 255.0 + 0.5)));
    }
  }
  return bytes;
}

Tensor read_image(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_netpbm(bytes, path.string());
}

void write_image(const fs::path& path, const Tensor& image) {
  const auto bytes = encode_netpbm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write image '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing image '" + path.string() + "'");
}

std::vector<DomainSample> read_dataset_folder(const fs::path& root, std::size_t n_domains) {
  if (!fs::is_directory(root)) throw DataError("dataset root '" + root.string() + "' is not a directory");
  if (n_domains < 2) throw ConfigError("dataset: at least two domains are required");
  std::vector<fs::path> subjects;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) subjects.push_back(entry.path());
  }
  std::sort(subjects.begin(), subjects.end());
  if (subjects.empty()) throw DataError("dataset root '" + root.string() + "' has no subject directories");

  std::vector<DomainSample> samples;
  std::optional<Shape> common;
  for (const auto& dir : subjects) {
    DomainSample s;
    s.subject_id = dir.filename().string();
    std::vector<std::optional<Tensor>> found(n_domains);
    for (std::size_t d = 0; d < n_domains; ++d) {
      for (const char* ext : {".pgm", ".ppm"}) {
        const fs::path file = dir / (std::to_string(d) + ext);
        if (!fs::exists(file)) continue;
        if (found[d]) throw DataError("subject '" + s.subject_id + "': both .pgm and .ppm for domain " + std::to_string(d));
        found[d] = read_image(file);
        if (!common) common = found[d]->shape();
        if (found[d]->shape() != *common) {
          throw DataError("subject '" + s.subject_id + "': domain " + std::to_string(d) + " has shape " +
                          shape_str(found[d]->shape()) + ", dataset uses " + shape_str(*common));
        }
      }
    }
    for (std::size_t d = 0; d < n_domains; ++d) {
      s.available.push_back(found[d].has_value());
      s.images.push_back(found[d] ? *found[d] : Tensor());
    }
    samples.push_back(std::move(s));
  }
  if (!common) throw DataError("dataset root '" + root.string() + "' contains no images");
  for (auto& s : samples) {
    for (std::size_t d = 0; d < n_domains; ++d) {
      if (!s.available[d]) s.images[d] = Tensor(*common);
    }
  }
  return samples;
}

std::size_t detect_domain_count(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("dataset root '" + root.string() + "' is not a directory");
  std::size_t count = 0;
  for (const auto& subject : fs::directory_iterator(root)) {
    if (!subject.is_directory()) continue;
    for (const auto& file : fs::directory_iterator(subject.path())) {
      const auto ext = file.path().extension().string();
      if (ext != ".pgm" && ext != ".ppm") continue;
      const std::string stem = file.path().stem().string();
      if (stem.empty() || !std::all_of(stem.begin(), stem.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) continue;
      count = std::max(count, static_cast<std::size_t>(std::stoul(stem)) + 1);
    }
  }
  if (count == 0) throw DataError("dataset root '" + root.string() + "' contains no domain images");
  return count;
}

void write_dataset_folder(const fs::path& root, const std::vector<DomainSample>& samples) {
  fs::create_directories(root);
  for (const auto& s : samples) {
    const fs::path dir = root / s.subject_id;
    fs::create_directories(dir);
    for (std::size_t d = 0; d < s.n_domains(); ++d) {
      if (!s.available[d]) continue;
      const char* ext = s.images[d].dim(0) == 1 ? ".pgm" : ".ppm";
      write_image(dir / (std::to_string(d) + ext), s.images[d]);
    }
  }
}

}  // namespace collagan
