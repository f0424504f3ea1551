#include "msp/codec/codec.hpp"

#include <cmath>
#include <numbers>

#include "msp/common/errors.hpp"
#include "msp/common/rng.hpp"

namespace msp::codec {

void CodecConfig::validate() const {
  if (sample_rate <= 0 || frame_hop == 0) {
    throw ConfigError("codec: sample_rate and frame_hop must be positive");
  }
  if (latent_dim == 0 || latent_dim > bins()) {
    throw ConfigError("codec: latent_dim must be in [1, frame_hop + 1]");
  }
  if (codebook_size < 2 || codebook_size > 65536) {
    throw ConfigError("codec: codebook_size must be in [2, 65536]");
  }
  if (!(magnitude_floor > 0.0)) {
    throw ConfigError("codec: magnitude_floor must be positive");
  }
}

LatentFrames LatentFrames::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > frames) {
    throw DimensionError("latent slice [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range for " +
                         std::to_string(frames) + " frames");
  }
  LatentFrames out(end - begin, dim, frame_hop);
  std::copy(data.begin() + static_cast<std::ptrdiff_t>(begin * dim),
            data.begin() + static_cast<std::ptrdiff_t>(end * dim), out.data.begin());
  return out;
}

LatentFrames concatenate(const std::vector<LatentFrames>& parts) {
  if (parts.empty()) {
    return {};
  }
  LatentFrames out(0, parts.front().dim, parts.front().frame_hop);
  for (const auto& p : parts) {
    if (p.dim != out.dim) {
      throw DimensionError("latent concatenation: dims " + std::to_string(out.dim) + " and " + std::to_string(p.dim));
    }
    out.data.insert(out.data.end(), p.data.begin(), p.data.end());
    out.frames += p.frames;
  }
  return out;
}

CodeGrid::CodeGrid(std::size_t t, std::size_t k) : frames(t), codebook_size(k) {
  for (auto& layer : layers) layer.assign(t, 0);
}

void CodeGrid::validate() const {
  for (std::size_t s = 0; s < kStages; ++s) {
    if (layers[s].size() != frames) {
      throw CorruptDataError("code grid layer " + std::to_string(s + 1) + " has " + std::to_string(layers[s].size()) +
                             " frames, expected " + std::to_string(frames));
    }
    for (std::size_t t = 0; t < frames; ++t) {
      const int id = layers[s][t];
      if (id < 0 || static_cast<std::size_t>(id) >= codebook_size) {
        throw CorruptDataError("code grid layer " + std::to_string(s + 1) + " frame " + std::to_string(t) + ": id " +
                               std::to_string(id) + " outside [0," + std::to_string(codebook_size) + ")");
      }
    }
  }
}

CodeGrid CodeGrid::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > frames) {
    throw DimensionError("code grid slice out of range");
  }
  CodeGrid out(end - begin, codebook_size);
  for (std::size_t s = 0; s < kStages; ++s) {
    std::copy(layers[s].begin() + static_cast<std::ptrdiff_t>(begin),
              layers[s].begin() + static_cast<std::ptrdiff_t>(end), out.layers[s].begin());
  }
  return out;
}

Codec::Codec(CodecConfig cfg) : cfg_(cfg), dft_((cfg.validate(), cfg.window())), window_(dsp::hann(cfg.window())) {
  for (auto& w : window_) w = std::sqrt(w);
  dct_ = dsp::dct_matrix(cfg_.latent_dim, cfg_.bins());
  Rng rng(0xC0DEC);
  phase_.resize(cfg_.bins());
  for (auto& p : phase_) p = rng.uniform(0.0, 2.0 * std::numbers::pi);
}

std::size_t Codec::frame_count(std::size_t samples) const { return (samples + cfg_.frame_hop - 1) / cfg_.frame_hop; }

std::vector<double> Codec::magnitude_frames(const Waveform& w) const {
  w.validate();
  const std::size_t hop = cfg_.frame_hop;
  const std::size_t n = cfg_.window();
  const std::size_t nb = cfg_.bins();
  const std::size_t frames = frame_count(w.size());
  std::vector<double> out(frames * nb);
  std::vector<double> frame(n);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t s = t * hop + i;
      frame[i] = s < w.size() ? window_[i] * w.samples[s] : 0.0;
    }
    dft_.magnitude(frame, std::span<double>(out).subspan(t * nb, nb));
  }
  return out;
}

LatentFrames Codec::analyze(const Waveform& w) const {
  const auto mags = magnitude_frames(w);
  const std::size_t nb = cfg_.bins();
  const std::size_t frames = mags.size() / nb;
  LatentFrames out(frames, cfg_.latent_dim, cfg_.frame_hop);
  std::vector<double> compressed(nb);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t k = 0; k < nb; ++k) compressed[k] = std::log1p(mags[t * nb + k] / cfg_.magnitude_floor);
    auto row = out.row(t);
    for (std::size_t q = 0; q < cfg_.latent_dim; ++q) {
      double acc = 0.0;
      for (std::size_t k = 0; k < nb; ++k) acc += dct_[q * nb + k] * compressed[k];
      row[q] = acc;
    }
  }
  return out;
}

Waveform Codec::synthesize(const LatentFrames& latents) const {
  if (latents.dim != cfg_.latent_dim) {
    throw DimensionError("synthesize: latent dim " + std::to_string(latents.dim) + " but codec uses " +
                         std::to_string(cfg_.latent_dim));
  }
  const std::size_t hop = cfg_.frame_hop;
  const std::size_t n = cfg_.window();
  const std::size_t nb = cfg_.bins();
  Waveform out;
  out.sample_rate = cfg_.sample_rate;
  out.samples.assign(latents.frames * hop, 0.0);
  std::vector<double> mag(nb);
  std::vector<double> phase(nb);
  std::vector<double> frame(n);
  for (std::size_t t = 0; t < latents.frames; ++t) {
    const auto row = latents.row(t);
    bool silent = true;
    for (std::size_t k = 0; k < nb; ++k) {
      double v = 0.0;
      for (std::size_t q = 0; q < cfg_.latent_dim; ++q) v += dct_[q * nb + k] * row[q];
      mag[k] = v > 0.0 ? cfg_.magnitude_floor * std::expm1(v) : 0.0;
      silent = silent && mag[k] == 0.0;
      // With hop = n/2 a bin-centred sinusoid advances by pi*k per frame.
      phase[k] = phase_[k] + std::numbers::pi * static_cast<double>((k * t) % 2);
    }
    if (silent) continue;
    dft_.inverse(mag, phase, frame);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t s = t * hop + i;
      if (s < out.samples.size()) out.samples[s] += window_[i] * frame[i];
    }
  }
  return out;
}

}  // namespace msp::codec
