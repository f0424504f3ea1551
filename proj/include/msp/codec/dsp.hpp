#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace msp::dsp {

/// Periodic Hann window of length n.
std::vector<double> hann(std::size_t n);

/// Real DFT of a length-n frame, bins 0..n/2, via precomputed tables.
class RealDft {
 public:
  explicit RealDft(std::size_t n);

  std::size_t size() const noexcept { return n_; }
  std::size_t bins() const noexcept { return n_ / 2 + 1; }

  /// |X_k| for k = 0..n/2. `frame` must have length n.
  void magnitude(std::span<const double> frame, std::span<double> out) const;
  void power(std::span<const double> frame, std::span<double> out) const;
  /// Real inverse of a Hermitian spectrum given as (magnitude, phase) pairs
  /// for bins 0..n/2. Output has length n.
  void inverse(std::span<const double> mag, std::span<const double> phase, std::span<double> out) const;

 private:
  std::size_t n_;
  std::vector<double> cos_;  // [bins x n]
  std::vector<double> sin_;
};

/// Orthonormal DCT-II matrix, rows 0..rows-1 over inputs of length n.
std::vector<double> dct_matrix(std::size_t rows, std::size_t n);

/// Triangular mel filterbank [bands x bins] spanning [fmin, fmax].
std::vector<double> mel_filterbank(std::size_t bands, std::size_t n_fft, double sample_rate, double fmin,
                                   double fmax);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

}  // namespace msp::dsp
