#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "collagan/data.hpp"
#include "collagan/tensor.hpp"

namespace collagan {

// Binary netpbm: P5 (1 channel) or P6 (3 channels), maxval 255.
// Reading maps [0,255] to [0,1]; writing clamps to [0,1] and rounds half up.
Tensor read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Tensor& image);

Tensor decode_netpbm(const std::vector<unsigned char>& bytes, const std::string& source = "<memory>");
std::vector<unsigned char> encode_netpbm(const Tensor& image);

// Dataset folders hold one directory per subject with files
// `<domain_index>.pgm` or `<domain_index>.ppm`. Subjects are ordered by name;
// a missing domain file marks that domain unavailable.
std::vector<DomainSample> read_dataset_folder(const std::filesystem::path& root, std::size_t n_domains);
// Largest domain index found in any subject directory, plus one.
std::size_t detect_domain_count(const std::filesystem::path& root);

void write_dataset_folder(const std::filesystem::path& root, const std::vector<DomainSample>& samples);

}  // namespace collagan
