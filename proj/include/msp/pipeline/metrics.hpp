#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "msp/codec/audio.hpp"

namespace msp::pipeline {

inline constexpr std::size_t kEmbeddingBands = 20;
inline constexpr std::size_t kEmbeddingDim = 2 * kEmbeddingBands;
inline constexpr std::size_t kCepstralOrder = 13;

/// Unit-norm 40-vector of per-band mean and standard deviation of the
/// cube-root-compressed 20-band mel power spectrogram (256-point frames, hop 128,
/// zero-padded tail). All entries are non-negative. Needs >= 0.2 s of audio.
std::vector<double> speaker_embed(const codec::Waveform& w);

/// Cosine similarity of speaker embeddings; lies in [0, 1].
double secs(const codec::Waveform& a, const codec::Waveform& b);

/// Mel-cepstra c1..c13 (c0 dropped): orthonormal DCT of the 26-band log mel
/// amplitude, 0.5 * ln(max(power, 1e-10)). Row-major [frames x 13].
std::vector<double> mel_cepstra(const codec::Waveform& w);

/// (10 / ln 10) * sqrt(2 * sum (a_i - b_i)^2).
double mcd_frame_distance(const double* a, const double* b, std::size_t order = kCepstralOrder);

struct DtwResult {
  double total_cost = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> path;  // (ref, syn) from (0,0) to (n-1,m-1)

  double mean_cost() const { return total_cost / static_cast<double>(path.size()); }
};

/// Minimum-total-cost monotone alignment over an [n x m] cost matrix with
/// steps (1,0), (0,1), (1,1); ties prefer the diagonal step.
DtwResult dtw(const std::vector<double>& cost, std::size_t n, std::size_t m);

/// Mean per-frame MCD along the DTW path between the two mel-cepstra
/// sequences. Both signals need at least 2 frames.
double mcd_dtw(const codec::Waveform& ref, const codec::Waveform& syn);

}  // namespace msp::pipeline
