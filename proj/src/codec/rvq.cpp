#include <algorithm>
#include <limits>
#include <numeric>

#include <spdlog/spdlog.h>

#include "msp/codec/codec.hpp"
#include "msp/common/errors.hpp"
#include "msp/common/rng.hpp"

namespace msp::codec {
namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double e = a[i] - b[i];
    d += e * e;
  }
  return d;
}

// Nearest row of `book` ([k x dim]); strict comparison keeps the lowest id on ties.
std::size_t nearest(std::span<const double> x, const std::vector<double>& book, std::size_t k, std::size_t dim,
                    double* best_out = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < k; ++j) {
    const double d = squared_distance(x, std::span<const double>(book).subspan(j * dim, dim));
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  if (best_out) *best_out = best_d;
  return best;
}

struct Points {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::vector<double> data;
  std::span<const double> row(std::size_t i) const { return std::span<const double>(data).subspan(i * dim, dim); }
};

std::vector<std::size_t> distinct_nonzero_rows(const Points& pts) {
  std::vector<std::size_t> idx(pts.n);
  std::iota(idx.begin(), idx.end(), 0);
  auto less = [&](std::size_t a, std::size_t b) {
    const auto ra = pts.row(a);
    const auto rb = pts.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  };
  std::stable_sort(idx.begin(), idx.end(), less);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto r = pts.row(idx[i]);
    if (std::all_of(r.begin(), r.end(), [](double v) { return v == 0.0; })) continue;
    if (!out.empty()) {
      const auto prev = pts.row(out.back());
      if (std::equal(r.begin(), r.end(), prev.begin())) continue;
    }
    out.push_back(idx[i]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Codeword 0 stays at the origin; rows 1..k-1 are fit by k-means++ / Lloyd.
std::vector<double> fit_stage(const Points& pts, std::size_t k, std::size_t iterations, Rng& rng,
                              std::size_t& effective) {
  const std::size_t dim = pts.dim;
  std::vector<double> book(k * dim, 0.0);
  const auto distinct = distinct_nonzero_rows(pts);
  if (distinct.size() <= k - 1) {
    effective = distinct.size() + 1;
    for (std::size_t j = 0; j < distinct.size(); ++j) {
      const auto r = pts.row(distinct[j]);
      std::copy(r.begin(), r.end(), book.begin() + static_cast<std::ptrdiff_t>((j + 1) * dim));
    }
    // Remaining rows are distinct far-away placeholders that data never selects.
    double scale = 1.0;
    for (double v : pts.data) scale = std::max(scale, std::abs(v));
    for (std::size_t j = distinct.size() + 1; j < k; ++j) {
      book[j * dim + (j % dim)] = 1e6 * scale * static_cast<double>(j + 1);
    }
    return book;
  }
  effective = k;

  // k-means++ seeding relative to the fixed zero codeword.
  std::vector<double> d2(pts.n);
  for (std::size_t i = 0; i < pts.n; ++i) {
    const auto r = pts.row(i);
    d2[i] = std::inner_product(r.begin(), r.end(), r.begin(), 0.0);
  }
  for (std::size_t j = 1; j < k; ++j) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = 0;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (pick = 0; pick + 1 < pts.n; ++pick) {
        target -= d2[pick];
        if (target < 0.0) break;
      }
      while (d2[pick] == 0.0) pick = (pick + 1) % pts.n;
    }
    const auto r = pts.row(pick);
    std::copy(r.begin(), r.end(), book.begin() + static_cast<std::ptrdiff_t>(j * dim));
    for (std::size_t i = 0; i < pts.n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(pts.row(i), r));
    }
  }

  std::vector<std::size_t> assign(pts.n, k);
  std::vector<double> err(pts.n);
  for (std::size_t it = 0; it < iterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < pts.n; ++i) {
      const auto a = nearest(pts.row(i), book, k, dim, &err[i]);
      changed = changed || a != assign[i];
      assign[i] = a;
    }
    if (!changed) break;
    std::vector<double> sums(k * dim, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < pts.n; ++i) {
      const auto r = pts.row(i);
      for (std::size_t c = 0; c < dim; ++c) sums[assign[i] * dim + c] += r[c];
      ++counts[assign[i]];
    }
    std::vector<bool> taken(pts.n, false);
    for (std::size_t j = 1; j < k; ++j) {
      if (counts[j] > 0) {
        for (std::size_t c = 0; c < dim; ++c) book[j * dim + c] = sums[j * dim + c] / static_cast<double>(counts[j]);
        continue;
      }
      // Empty cluster: reseed at the worst-served point.
      std::size_t worst = 0;
      double worst_err = -1.0;
      for (std::size_t i = 0; i < pts.n; ++i) {
        if (!taken[i] && err[i] > worst_err) {
          worst_err = err[i];
          worst = i;
        }
      }
      taken[worst] = true;
      err[worst] = 0.0;
      const auto r = pts.row(worst);
      std::copy(r.begin(), r.end(), book.begin() + static_cast<std::ptrdiff_t>(j * dim));
    }
  }

  // Coinciding means would make a duplicate codeword; move the later copy to
  // the worst-served point.
  for (std::size_t j = 1; j < k; ++j) {
    for (std::size_t m = 0; m < j; ++m) {
      const auto a = std::span<const double>(book).subspan(j * dim, dim);
      const auto b = std::span<const double>(book).subspan(m * dim, dim);
      if (!std::equal(a.begin(), a.end(), b.begin())) continue;
      std::size_t worst = 0;
      double worst_err = -1.0;
      for (std::size_t i = 0; i < pts.n; ++i) {
        double e = 0.0;
        nearest(pts.row(i), book, k, dim, &e);
        if (e > worst_err) {
          worst_err = e;
          worst = i;
        }
      }
      const auto r = pts.row(worst);
      std::copy(r.begin(), r.end(), book.begin() + static_cast<std::ptrdiff_t>(j * dim));
      break;
    }
  }
  return book;
}

}  // namespace

CodeGrid rvq_encode(const LatentFrames& latents, const Codebooks& cb) {
  if (latents.dim != cb.dim) {
    throw DimensionError("rvq_encode: latent dim " + std::to_string(latents.dim) + " but codebooks use " +
                         std::to_string(cb.dim));
  }
  CodeGrid grid(latents.frames, cb.codebook_size);
  std::vector<double> residual(cb.dim);
  for (std::size_t t = 0; t < latents.frames; ++t) {
    const auto row = latents.row(t);
    std::copy(row.begin(), row.end(), residual.begin());
    for (std::size_t s = 0; s < kStages; ++s) {
      const auto id = nearest(residual, cb.stages[s], cb.codebook_size, cb.dim);
      grid.layers[s][t] = static_cast<int>(id);
      const auto cw = cb.codeword(s, id);
      for (std::size_t c = 0; c < cb.dim; ++c) residual[c] -= cw[c];
    }
  }
  return grid;
}

LatentFrames rvq_decode(const CodeGrid& codes, const Codebooks& cb, std::size_t upto_stage, std::size_t frame_hop) {
  if (upto_stage < 1 || upto_stage > kStages) {
    throw ContractError("rvq_decode: upto_stage must be in [1,8], got " + std::to_string(upto_stage));
  }
  if (codes.codebook_size != cb.codebook_size) {
    throw CorruptDataError("rvq_decode: grid uses K=" + std::to_string(codes.codebook_size) + " but codebooks have K=" +
                           std::to_string(cb.codebook_size));
  }
  codes.validate();
  LatentFrames out(codes.frames, cb.dim, frame_hop);
  for (std::size_t t = 0; t < codes.frames; ++t) {
    auto row = out.row(t);
    for (std::size_t s = 0; s < upto_stage; ++s) {
      const auto cw = cb.codeword(s, static_cast<std::size_t>(codes.layers[s][t]));
      for (std::size_t c = 0; c < cb.dim; ++c) row[c] += cw[c];
    }
  }
  return out;
}

Codebooks train_codebooks(const std::vector<LatentFrames>& corpus, std::size_t codebook_size, std::uint64_t seed,
                          std::size_t iterations, std::size_t max_frames, TrainCodebooksReport* report) {
  if (corpus.empty()) {
    throw EmptyInputError("train_codebooks: empty corpus");
  }
  if (codebook_size < 2) {
    throw ContractError("train_codebooks: codebook size must be at least 2");
  }
  Points pts;
  pts.dim = corpus.front().dim;
  std::size_t total = 0;
  for (const auto& lf : corpus) {
    if (lf.dim != pts.dim) throw DimensionError("train_codebooks: mixed latent dims");
    total += lf.frames;
  }
  if (total < codebook_size) {
    throw ContractError("train_codebooks: corpus has " + std::to_string(total) + " frames, fewer than K=" +
                        std::to_string(codebook_size));
  }
  // Evenly strided subsample keeps the fit bounded and deterministic.
  const std::size_t stride = max_frames > 0 && total > max_frames ? (total + max_frames - 1) / max_frames : 1;
  std::size_t global = 0;
  for (const auto& lf : corpus) {
    for (std::size_t t = 0; t < lf.frames; ++t, ++global) {
      if (global % stride != 0) continue;
      const auto r = lf.row(t);
      pts.data.insert(pts.data.end(), r.begin(), r.end());
      ++pts.n;
    }
  }

  Codebooks cb;
  cb.codebook_size = codebook_size;
  cb.dim = pts.dim;
  Rng rng(seed);
  for (std::size_t s = 0; s < kStages; ++s) {
    std::size_t effective = codebook_size;
    cb.stages[s] = fit_stage(pts, codebook_size, iterations, rng, effective);
    if (effective < codebook_size) {
      spdlog::warn("codebook stage {}: only {} distinct residuals, effective size reduced from {}", s + 1, effective,
                   codebook_size);
    }
    if (report) report->effective_size[s] = effective;
    for (std::size_t i = 0; i < pts.n; ++i) {
      auto r = std::span<double>(pts.data).subspan(i * pts.dim, pts.dim);
      const auto id = nearest(r, cb.stages[s], codebook_size, pts.dim);
      const auto cw = cb.codeword(s, id);
      for (std::size_t c = 0; c < pts.dim; ++c) r[c] -= cw[c];
    }
  }
  return cb;
}

}  // namespace msp::codec
