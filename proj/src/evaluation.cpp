#include "collagan/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>

#include "collagan/errors.hpp"

namespace collagan {

Predictor oracle_predictor() {
  return [](const DomainSample& sample, std::size_t target, const std::vector<std::size_t>&) {
    return sample.images.at(target).clone();
  };
}

namespace {

// All size-k subsets of `items` in lexicographic order.
std::vector<std::vector<std::size_t>> subsets(const std::vector<std::size_t>& items, std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  if (k > items.size()) return out;
  while (true) {
    std::vector<std::size_t> pick;
    for (std::size_t i : idx) pick.push_back(items[i]);
    out.push_back(std::move(pick));
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == items.size() - k + i - 1) --i;
    if (i == 0) break;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  return out;
}

}  // namespace

std::vector<DomainMetrics> evaluate(const Predictor& predictor, const std::vector<const DomainSample*>& samples,
                                    std::size_t live_inputs, const SsimConfig& ssim) {
  if (samples.empty()) throw DataError("evaluate: empty sample set");
  const std::size_t n = samples[0]->n_domains();
  if (live_inputs >= n) throw ConfigError("evaluate: live_inputs must be below the domain count");
  std::vector<DomainMetrics> table(n);
  for (std::size_t target = 0; target < n; ++target) {
    table[target].domain = target;
    for (const DomainSample* s : samples) {
      if (!s->available[target]) continue;
      std::vector<std::size_t> complement;
      for (std::size_t d = 0; d < n; ++d) {
        if (d != target && s->available[d]) complement.push_back(d);
      }
      if (complement.empty()) continue;
      std::vector<std::vector<std::size_t>> live_sets;
      if (live_inputs == 0) {
        live_sets.push_back(complement);
      } else {
        live_sets = subsets(complement, live_inputs);
      }
      for (const auto& live : live_sets) {
        std::vector<std::size_t> nulled;
        for (std::size_t d : complement) {
          if (std::find(live.begin(), live.end(), d) == live.end()) nulled.push_back(d);
        }
        const Tensor pred = predictor(*s, target, nulled);
        const Tensor& truth = s->images[target];
        table[target].nmse += nmse(pred, truth);
        table[target].ssim += mean_ssim(pred, truth, ssim);
        ++table[target].count;
      }
    }
    if (table[target].count > 0) {
      table[target].nmse /= static_cast<double>(table[target].count);
      table[target].ssim /= static_cast<double>(table[target].count);
    }
  }
  return table;
}

std::vector<DomainMetrics> copy_baseline(const std::vector<const DomainSample*>& samples, const SsimConfig& ssim) {
  if (samples.empty()) throw DataError("copy baseline: empty sample set");
  const std::size_t n = samples[0]->n_domains();
  std::vector<DomainMetrics> table(n);
  for (std::size_t target = 0; target < n; ++target) {
    table[target].domain = target;
    table[target].nmse = std::numeric_limits<double>::infinity();
    for (std::size_t source = 0; source < n; ++source) {
      if (source == target) continue;
      DomainMetrics m;
      for (const DomainSample* s : samples) {
        if (!s->available[target] || !s->available[source]) continue;
        m.nmse += nmse(s->images[source], s->images[target]);
        m.ssim += mean_ssim(s->images[source], s->images[target], ssim);
        ++m.count;
      }
      if (m.count == 0) continue;
      m.nmse /= static_cast<double>(m.count);
      m.ssim /= static_cast<double>(m.count);
      if (m.nmse < table[target].nmse) {
        table[target].nmse = m.nmse;
        table[target].ssim = m.ssim;
        table[target].count = m.count;
      }
    }
  }
  return table;
}

std::string format_domain_table(const std::vector<DomainMetrics>& table) {
  std::string out = "domain        nmse        ssim   count\n";
  char line[128];
  for (const auto& m : table) {
    std::snprintf(line, sizeof(line), "%6zu  %10.6f  %10.6f  %6zu\n", m.domain, m.nmse, m.ssim, m.count);
    out += line;
  }
  return out;
}

void write_domain_table(const std::filesystem::path& path, const std::vector<DomainMetrics>& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "domain,nmse,ssim,count\n";
  char line[160];
  for (const auto& m : table) {
    std::snprintf(line, sizeof(line), "%zu,%.9g,%.9g,%zu\n", m.domain, m.nmse, m.ssim, m.count);
    out << line;
  }
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

namespace {

void blit(Tensor& canvas, const Tensor& tile, std::size_t top, std::size_t left) {
  const std::size_t c = canvas.dim(0), ch = canvas.dim(1), cw = canvas.dim(2);
  const std::size_t th = tile.dim(1), tw = tile.dim(2);
  for (std::size_t k = 0; k < c; ++k) {
    const std::size_t src_k = tile.dim(0) == 1 ? 0 : k;
    for (std::size_t i = 0; i < th; ++i) {
      for (std::size_t j = 0; j < tw; ++j) {
        canvas[(k * ch + top + i) * cw + left + j] = tile[(src_k * th + i) * tw + j];
      }
    }
  }
}

}  // namespace

Tensor montage_row(const DomainSample& sample, std::size_t target, const Tensor& prediction, std::size_t separator) {
  const std::size_t n = sample.n_domains();
  const Shape& shape = sample.image_shape();
  if (prediction.shape() != shape) throw ShapeError("montage: prediction shape does not match the sample");
  const std::size_t c = shape[0], h = shape[1], w = shape[2];
  const std::size_t tiles = n + 2;
  Tensor canvas(Shape{c, h, tiles * w + (tiles - 1) * separator}, 1.0f);
  for (std::size_t d = 0; d < n; ++d) {
    const Tensor tile = (d == target || !sample.available[d]) ? Tensor(shape) : sample.images[d];
    blit(canvas, tile, 0, d * (w + separator));
  }
  blit(canvas, prediction, 0, n * (w + separator));
  blit(canvas, sample.images[target], 0, (n + 1) * (w + separator));
  return canvas;
}

Tensor stack_rows(const std::vector<Tensor>& rows, std::size_t separator) {
  if (rows.empty()) throw DataError("montage: no rows");
  const std::size_t c = rows[0].dim(0), h = rows[0].dim(1), w = rows[0].dim(2);
  Tensor canvas(Shape{c, rows.size() * h + (rows.size() - 1) * separator, w}, 1.0f);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].shape() != rows[0].shape()) throw ShapeError("montage: rows differ in shape");
    blit(canvas, rows[r], r * (h + separator), 0);
  }
  return canvas;
}

}  // namespace collagan
