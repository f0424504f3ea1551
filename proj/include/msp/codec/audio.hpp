#pragma once

#include <string>
#include <vector>

namespace msp::codec {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 8000;

  std::size_t size() const noexcept { return samples.size(); }
  double duration_seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
  /// Throws EmptyInputError / NonFiniteError when the invariants fail.
  void validate() const;
};

/// 16-bit PCM mono WAV. Samples are clamped to [-1, 1] on write.
void write_wav(const std::string& path, const Waveform& w);
Waveform read_wav(const std::string& path);

Waveform concatenate(const std::vector<Waveform>& parts);

}  // namespace msp::codec
