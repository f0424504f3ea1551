#include "msp/codec/dsp.hpp"

#include <cmath>
#include <numbers>

#include "msp/common/errors.hpp"

namespace msp::dsp {

std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

RealDft::RealDft(std::size_t n) : n_(n), cos_(bins() * n), sin_(bins() * n) {
  if (n == 0 || n % 2 != 0) {
    throw ContractError("RealDft: length must be even and positive");
  }
  for (std::size_t k = 0; k < bins(); ++k) {
    for (std::size_t t = 0; t < n; ++t) {
      // Reduce k*t mod n first so the angle stays exact for large products.
      const double ang = 2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      cos_[k * n + t] = std::cos(ang);
      sin_[k * n + t] = std::sin(ang);
    }
  }
}

void RealDft::power(std::span<const double> frame, std::span<double> out) const {
  for (std::size_t k = 0; k < bins(); ++k) {
    double re = 0.0;
    double im = 0.0;
    const double* c = &cos_[k * n_];
    const double* s = &sin_[k * n_];
    for (std::size_t t = 0; t < n_; ++t) {
      re += frame[t] * c[t];
      im -= frame[t] * s[t];
    }
    out[k] = re * re + im * im;
  }
}

void RealDft::magnitude(std::span<const double> frame, std::span<double> out) const {
  power(frame, out);
  for (auto& v : out) v = std::sqrt(v);
}

void RealDft::inverse(std::span<const double> mag, std::span<const double> phase, std::span<double> out) const {
  const std::size_t nb = bins();
  for (std::size_t t = 0; t < n_; ++t) {
    double acc = 0.0;
    for (std::size_t k = 0; k < nb; ++k) {
      const double w = (k == 0 || k == nb - 1) ? 1.0 : 2.0;
      // cos(a + p) = cos a cos p - sin a sin p
      acc += w * mag[k] * (cos_[k * n_ + t] * std::cos(phase[k]) - sin_[k * n_ + t] * std::sin(phase[k]));
    }
    out[t] = acc / static_cast<double>(n_);
  }
}

std::vector<double> dct_matrix(std::size_t rows, std::size_t n) {
  std::vector<double> m(rows * n);
  for (std::size_t q = 0; q < rows; ++q) {
    const double s = q == 0 ? std::sqrt(1.0 / static_cast<double>(n)) : std::sqrt(2.0 / static_cast<double>(n));
    for (std::size_t k = 0; k < n; ++k) {
      m[q * n + k] =
          s * std::cos(std::numbers::pi * (static_cast<double>(k) + 0.5) * static_cast<double>(q) / static_cast<double>(n));
    }
  }
  return m;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_filterbank(std::size_t bands, std::size_t n_fft, double sample_rate, double fmin,
                                   double fmax) {
  const std::size_t nb = n_fft / 2 + 1;
  std::vector<double> fb(bands * nb, 0.0);
  const double m0 = hz_to_mel(fmin);
  const double m1 = hz_to_mel(fmax);
  std::vector<double> edges(bands + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(m0 + (m1 - m0) * static_cast<double>(i) / static_cast<double>(bands + 1));
  }
  for (std::size_t b = 0; b < bands; ++b) {
    const double lo = edges[b];
    const double mid = edges[b + 1];
    const double hi = edges[b + 2];
    for (std::size_t k = 0; k < nb; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n_fft);
      double w = 0.0;
      if (f > lo && f <= mid) {
        w = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        w = (hi - f) / (hi - mid);
      }
      fb[b * nb + k] = w;
    }
  }
  return fb;
}

}  // namespace msp::dsp
