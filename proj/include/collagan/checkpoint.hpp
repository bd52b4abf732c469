#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "collagan/tensor.hpp"

namespace collagan {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Complete training state. Tensor names carry a prefix: "G/" and "D/" for
// network parameters, "optG/m/", "optG/v/", "optD/m/", "optD/v/" for the
// optimizer moments.
struct Checkpoint {
  std::string config_text;
  std::vector<NamedTensor> tensors;
  std::uint64_t adam_g_steps = 0;
  std::uint64_t adam_d_steps = 0;
  std::string rng_state;
  std::uint64_t step = 0;
  bool pretrain_done = false;

  const Tensor& tensor(const std::string& name) const;
};

// Layout (little-endian):
//   "CLGN" u32 version u32 len config_text
//   u32 count, then per tensor: u32 len name, u8 dtype (0 = f32), u32 rank,
//   u64 extents[rank], payload
//   u64 adam_g_steps u64 adam_d_steps u32 len rng_state u64 step u8 pretrain_done
std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt);
// The whole buffer is validated before anything is returned; errors report
// the byte offset.
Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes, const std::string& source = "<memory>");

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace collagan
