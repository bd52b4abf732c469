#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "collagan/data.hpp"
#include "collagan/losses.hpp"

namespace collagan {

// Produces the (C,H,W) image of domain `target` for `sample`, with the
// domains in `null_set` withheld from the input.
using Predictor =
    std::function<Tensor(const DomainSample& sample, std::size_t target, const std::vector<std::size_t>& null_set)>;

// Returns the stored ground truth; an upper bound for any model.
Predictor oracle_predictor();

struct DomainMetrics {
  std::size_t domain = 0;
  double nmse = 0.0;
  double ssim = 0.0;
  std::size_t count = 0;  // predictions averaged
};

// For every target domain, the mean NMSE and mean SSIM of the predictions
// against the sample's own image of that domain. `live_inputs` = 0 feeds
// every complement domain; otherwise every subset of that many complement
// domains is kept live in turn and the rest are nulled. Samples missing the
// target, or with too few available complements, are skipped.
std::vector<DomainMetrics> evaluate(const Predictor& predictor, const std::vector<const DomainSample*>& samples,
                                    std::size_t live_inputs = 0, const SsimConfig& ssim = {});

// Best single-source copy: for each target, the lowest mean NMSE obtained by
// returning one complement domain's image unchanged.
std::vector<DomainMetrics> copy_baseline(const std::vector<const DomainSample*>& samples,
                                         const SsimConfig& ssim = {});

void write_domain_table(const std::filesystem::path& path, const std::vector<DomainMetrics>& table);
std::string format_domain_table(const std::vector<DomainMetrics>& table);

// Single row, domain-index order: complement inputs, a gap, the prediction,
// the ground truth; tiles separated by `separator` white pixels.
Tensor montage_row(const DomainSample& sample, std::size_t target, const Tensor& prediction,
                   std::size_t separator = 2);
// Rows stacked vertically with the same separator.
Tensor stack_rows(const std::vector<Tensor>& rows, std::size_t separator = 2);

}  // namespace collagan
