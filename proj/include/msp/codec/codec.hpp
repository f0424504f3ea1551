#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "msp/codec/audio.hpp"
#include "msp/codec/dsp.hpp"

namespace msp::codec {

/// Number of residual quantizer stages; fixed by the token layout.
inline constexpr std::size_t kStages = 8;

struct CodecConfig {
  int sample_rate = 8000;
  std::size_t frame_hop = 64;
  std::size_t latent_dim = 32;
  std::size_t codebook_size = 64;
  /// Magnitude scale of the log1p compression; latents are zero for silence.
  double magnitude_floor = 1e-3;
  std::size_t kmeans_iterations = 25;
  std::size_t kmeans_max_frames = 24000;

  std::size_t window() const noexcept { return 2 * frame_hop; }
  std::size_t bins() const noexcept { return frame_hop + 1; }
  /// Codec frames per second.
  double frame_rate() const { return static_cast<double>(sample_rate) / static_cast<double>(frame_hop); }
  void validate() const;
};

/// Continuous per-frame codec latents, row-major [frames x dim].
struct LatentFrames {
  std::size_t frames = 0;
  std::size_t dim = 0;
  std::size_t frame_hop = 0;
  std::vector<double> data;

  LatentFrames() = default;
  LatentFrames(std::size_t frames, std::size_t dim, std::size_t hop)
      : frames(frames), dim(dim), frame_hop(hop), data(frames * dim, 0.0) {}

  std::span<double> row(std::size_t t) { return std::span<double>(data).subspan(t * dim, dim); }
  std::span<const double> row(std::size_t t) const { return std::span<const double>(data).subspan(t * dim, dim); }

  /// Rows [begin, end).
  LatentFrames slice(std::size_t begin, std::size_t end) const;
  friend bool operator==(const LatentFrames&, const LatentFrames&) = default;
};

/// Concatenates latents along time (all inputs must share dim and hop).
LatentFrames concatenate(const std::vector<LatentFrames>& parts);

/// [8 x T] discrete acoustic tokens.
struct CodeGrid {
  std::size_t frames = 0;
  std::size_t codebook_size = 0;
  std::array<std::vector<int>, kStages> layers;

  CodeGrid() = default;
  CodeGrid(std::size_t frames, std::size_t codebook_size);

  /// Throws CorruptDataError if any id lies outside [0, K) or layers disagree in length.
  void validate() const;
  /// Frames [begin, end) of every layer.
  CodeGrid slice(std::size_t begin, std::size_t end) const;
  friend bool operator==(const CodeGrid&, const CodeGrid&) = default;
};

/// Eight stages of K x D codewords; codeword 0 of every stage is the zero vector.
struct Codebooks {
  std::size_t codebook_size = 0;
  std::size_t dim = 0;
  std::array<std::vector<double>, kStages> stages;

  std::span<const double> codeword(std::size_t stage, std::size_t id) const {
    return std::span<const double>(stages[stage]).subspan(id * dim, dim);
  }
  friend bool operator==(const Codebooks&, const Codebooks&) = default;
};

/// Toy analysis/synthesis codec.
///
/// Frame t covers samples [t*hop, t*hop + 2*hop) under a sqrt-Hann window
/// (zero-padded past the end). Latents are the first `latent_dim` orthonormal
/// DCT coefficients of log1p(|X_k| / floor) over bins 0..hop, so silence maps
/// to the zero vector.
class Codec {
 public:
  explicit Codec(CodecConfig cfg = {});

  const CodecConfig& config() const noexcept { return cfg_; }

  LatentFrames analyze(const Waveform& w) const;
  /// Overlap-add resynthesis with bin-centred phase progression.
  /// Output length is frames * hop.
  Waveform synthesize(const LatentFrames& latents) const;

  /// Windowed magnitude spectra [frames x bins], before compression.
  std::vector<double> magnitude_frames(const Waveform& w) const;
  std::size_t frame_count(std::size_t samples) const;

 private:
  CodecConfig cfg_;
  dsp::RealDft dft_;
  std::vector<double> window_;
  std::vector<double> dct_;    // [latent_dim x bins]
  std::vector<double> phase_;  // per-bin synthesis phase offsets
};

/// Greedy residual quantization; nearest codeword per stage, ties to the
/// lowest id.
CodeGrid rvq_encode(const LatentFrames& latents, const Codebooks& cb);
/// Sum of selected codewords over stages 1..upto_stage (1-based).
LatentFrames rvq_decode(const CodeGrid& codes, const Codebooks& cb, std::size_t upto_stage, std::size_t frame_hop = 0);

struct TrainCodebooksReport {
  /// Distinct codewords backed by data per stage (K when nothing was reduced).
  std::array<std::size_t, kStages> effective_size{};
};

/// Stage-wise k-means: stage s is fit on the residuals left by stages < s.
/// Deterministic for a given seed.
Codebooks train_codebooks(const std::vector<LatentFrames>& corpus, std::size_t codebook_size, std::uint64_t seed,
                          std::size_t iterations = 25, std::size_t max_frames = 24000,
                          TrainCodebooksReport* report = nullptr);

void save_codebooks(const std::string& path, const Codebooks& cb);
Codebooks load_codebooks(const std::string& path);
void save_code_grid(const std::string& path, const CodeGrid& grid);
CodeGrid load_code_grid(const std::string& path);

void write_codebooks(std::ostream& os, const Codebooks& cb);
Codebooks read_codebooks(std::istream& is);
void write_code_grid(std::ostream& os, const CodeGrid& grid);
CodeGrid read_code_grid(std::istream& is);

}  // namespace msp::codec
