#include "msp/pipeline/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "msp/codec/dsp.hpp"
#include "msp/common/errors.hpp"

namespace msp::pipeline {
namespace {

constexpr std::size_t kFft = 256;
constexpr std::size_t kHop = 128;
constexpr std::size_t kMelBands = 26;
constexpr double kMinSeconds = 0.2;

// Mel band powers [frames x bands] with the tail zero-padded.
std::vector<double> mel_power(const codec::Waveform& w, std::size_t bands, std::size_t& frames) {
  w.validate();
  static const dsp::RealDft dft(kFft);
  static const auto window = dsp::hann(kFft);
  const auto fb = dsp::mel_filterbank(bands, kFft, w.sample_rate, 60.0, 0.5 * w.sample_rate);
  const std::size_t nb = dft.bins();
  frames = (w.size() + kHop - 1) / kHop;
  std::vector<double> out(frames * bands, 0.0);
  std::vector<double> frame(kFft);
  std::vector<double> power(nb);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < kFft; ++i) {
      const std::size_t s = t * kHop + i;
      frame[i] = s < w.size() ? window[i] * w.samples[s] : 0.0;
    }
    dft.power(frame, power);
    for (std::size_t b = 0; b < bands; ++b) {
      double acc = 0.0;
      for (std::size_t k = 0; k < nb; ++k) acc += fb[b * nb + k] * power[k];
      out[t * bands + b] = acc;
    }
  }
  return out;
}

}  // namespace

std::vector<double> speaker_embed(const codec::Waveform& w) {
  if (w.duration_seconds() < kMinSeconds) {
    throw ContractError("speaker_embed: need at least 0.2 s of audio, got " + std::to_string(w.duration_seconds()) +
                        " s");
  }
  std::size_t frames = 0;
  auto mel = mel_power(w, kEmbeddingBands, frames);
  for (auto& v : mel) v = std::cbrt(v);
  std::vector<double> emb(kEmbeddingDim, 0.0);
  for (std::size_t b = 0; b < kEmbeddingBands; ++b) {
    double mean = 0.0;
    for (std::size_t t = 0; t < frames; ++t) mean += mel[t * kEmbeddingBands + b];
    mean /= static_cast<double>(frames);
    double var = 0.0;
    for (std::size_t t = 0; t < frames; ++t) var += std::pow(mel[t * kEmbeddingBands + b] - mean, 2.0);
    emb[b] = mean;
    emb[kEmbeddingBands + b] = std::sqrt(var / static_cast<double>(frames));
  }
  double norm = 0.0;
  for (double v : emb) norm += v * v;
  norm = std::sqrt(norm);
  if (!(norm > 0.0)) {
    throw ContractError("speaker_embed: silent input has no speaker embedding");
  }
  for (auto& v : emb) v /= norm;
  return emb;
}

double secs(const codec::Waveform& a, const codec::Waveform& b) {
  const auto ea = speaker_embed(a);
  const auto eb = speaker_embed(b);
  double dot = 0.0;
  for (std::size_t i = 0; i < kEmbeddingDim; ++i) dot += ea[i] * eb[i];
  return std::clamp(dot, 0.0, 1.0);
}

std::vector<double> mel_cepstra(const codec::Waveform& w) {
  std::size_t frames = 0;
  const auto mel = mel_power(w, kMelBands, frames);
  static const auto dct = dsp::dct_matrix(kCepstralOrder + 1, kMelBands);
  std::vector<double> out(frames * kCepstralOrder);
  std::vector<double> logmel(kMelBands);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t b = 0; b < kMelBands; ++b) logmel[b] = 0.5 * std::log(std::max(mel[t * kMelBands + b], 1e-10));
    for (std::size_t q = 1; q <= kCepstralOrder; ++q) {
      double acc = 0.0;
      for (std::size_t b = 0; b < kMelBands; ++b) acc += dct[q * kMelBands + b] * logmel[b];
      out[t * kCepstralOrder + q - 1] = acc;
    }
  }
  return out;
}

double mcd_frame_distance(const double* a, const double* b, std::size_t order) {
  double acc = 0.0;
  for (std::size_t i = 0; i < order; ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return 10.0 / std::numbers::ln10 * std::sqrt(2.0 * acc);
}

DtwResult dtw(const std::vector<double>& cost, std::size_t n, std::size_t m) {
  if (n == 0 || m == 0 || cost.size() != n * m) {
    throw DimensionError("dtw: cost matrix must be non-empty and n x m");
  }
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> acc(n * m, kInf);
  // 0 = diagonal, 1 = from (i-1, j), 2 = from (i, j-1)
  std::vector<unsigned char> move(n * m, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double c = cost[i * m + j];
      if (!std::isfinite(c)) throw NonFiniteError("dtw: non-finite frame distance");
      if (i == 0 && j == 0) {
        acc[0] = c;
        continue;
      }
      double best = kInf;
      unsigned char how = 0;
      if (i > 0 && j > 0) best = acc[(i - 1) * m + j - 1];
      if (i > 0 && acc[(i - 1) * m + j] < best) {
        best = acc[(i - 1) * m + j];
        how = 1;
      }
      if (j > 0 && acc[i * m + j - 1] < best) {
        best = acc[i * m + j - 1];
        how = 2;
      }
      acc[i * m + j] = best + c;
      move[i * m + j] = how;
    }
  }
  DtwResult out;
  out.total_cost = acc[n * m - 1];
  std::size_t i = n - 1;
  std::size_t j = m - 1;
  while (true) {
    out.path.emplace_back(i, j);
    if (i == 0 && j == 0) break;
    switch (move[i * m + j]) {
      case 0: --i; --j; break;
      case 1: --i; break;
      default: --j; break;
    }
  }
  std::reverse(out.path.begin(), out.path.end());
  return out;
}

double mcd_dtw(const codec::Waveform& ref, const codec::Waveform& syn) {
  const auto a = mel_cepstra(ref);
  const auto b = mel_cepstra(syn);
  const std::size_t n = a.size() / kCepstralOrder;
  const std::size_t m = b.size() / kCepstralOrder;
  if (n < 2 || m < 2) {
    throw ContractError("mcd_dtw: both signals need at least 2 frames (got " + std::to_string(n) + " and " +
                        std::to_string(m) + ")");
  }
  std::vector<double> cost(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      cost[i * m + j] = mcd_frame_distance(&a[i * kCepstralOrder], &b[j * kCepstralOrder]);
    }
  }
  return dtw(cost, n, m).mean_cost();
}

}  // namespace msp::pipeline
