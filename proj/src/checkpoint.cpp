#include "collagan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "collagan/errors.hpp"

namespace collagan {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr unsigned char kMagic[4] = {'C', 'L', 'G', 'N'};
constexpr std::uint8_t kFloat32 = 0;

class Writer {
 public:
  template <typename U>
  void pod(U v) {
    unsigned char buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    out.insert(out.end(), buf, buf + sizeof(U));
  }
  void text(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
  std::vector<unsigned char> out;
};

class Reader {
 public:
  Reader(const std::vector<unsigned char>& bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(source_ + ": " + what + " at byte offset " + std::to_string(pos_));
  }
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) fail(std::string("truncated checkpoint while reading ") + what);
  }
  template <typename U>
  U pod(const char* what) {
    need(sizeof(U), what);
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string text(const char* what) {
    const auto n = pod<std::uint32_t>(what);
    need(n, what);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  void raw(void* dst, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<unsigned char>& bytes_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  throw DataError("checkpoint has no tensor '" + name + "'");
}

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.out.insert(w.out.end(), kMagic, kMagic + 4);
  w.pod(kCheckpointVersion);
  w.text(ckpt.config_text);
  w.pod(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& nt : ckpt.tensors) {
    w.text(nt.name);
    w.pod(kFloat32);
    w.pod(static_cast<std::uint32_t>(nt.tensor.rank()));
    for (std::size_t e : nt.tensor.shape()) w.pod(static_cast<std::uint64_t>(e));
    const auto data = nt.tensor.data();
    const auto* p = reinterpret_cast<const unsigned char*>(data.data());
    w.out.insert(w.out.end(), p, p + data.size_bytes());
  }
  w.pod(ckpt.adam_g_steps);
  w.pod(ckpt.adam_d_steps);
  w.text(ckpt.rng_state);
  w.pod(ckpt.step);
  w.pod(static_cast<std::uint8_t>(ckpt.pretrain_done ? 1 : 0));
  return std::move(w.out);
}

Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes, const std::string& source) {
  Reader r(bytes, source);
  unsigned char magic[4];
  r.raw(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw DataError(source + ": bad magic (expected CLGN) at byte offset 0");
  const auto version = r.pod<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw DataError(source + ": unsupported checkpoint version " + std::to_string(version) + " at byte offset 4");
  }
  Checkpoint ckpt;
  ckpt.config_text = r.text("config");
  const auto count = r.pod<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor nt;
    nt.name = r.text("tensor name");
    const auto dtype = r.pod<std::uint8_t>("dtype");
    if (dtype != kFloat32) r.fail("unsupported dtype tag " + std::to_string(dtype) + " for '" + nt.name + "'");
    const auto rank = r.pod<std::uint32_t>("rank");
    if (rank > 8) r.fail("implausible rank " + std::to_string(rank) + " for '" + nt.name + "'");
    Shape shape;
    std::uint64_t numel = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto e = r.pod<std::uint64_t>("extent");
      if (e != 0 && numel > r.remaining() / e) r.fail("extent too large for '" + nt.name + "'");
      numel *= e;
      shape.push_back(static_cast<std::size_t>(e));
    }
    std::vector<float> values(static_cast<std::size_t>(numel));
    r.raw(values.data(), values.size() * sizeof(float), "tensor payload");
    nt.tensor = Tensor(std::move(shape), std::move(values));
    ckpt.tensors.push_back(std::move(nt));
  }
  ckpt.adam_g_steps = r.pod<std::uint64_t>("optimizer step count");
  ckpt.adam_d_steps = r.pod<std::uint64_t>("optimizer step count");
  ckpt.rng_state = r.text("rng state");
  ckpt.step = r.pod<std::uint64_t>("step counter");
  const auto flag = r.pod<std::uint8_t>("pretrain flag");
  if (flag > 1) r.fail("bad pretrain flag");
  ckpt.pretrain_done = flag == 1;
  if (r.remaining() != 0) r.fail("trailing bytes after checkpoint");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, path.string());
}

}  // namespace collagan
