#pragma once

#include <cstdint>
#include <string>

#include "msp/codec/codec.hpp"
#include "msp/trainer/corpus.hpp"
#include "msp/trainer/model.hpp"

namespace msp::train {

struct LossWeights {
  double ar = 1.0;
  double nar = 1.0;

  /// Both non-negative, not both zero.
  void validate() const;
};

struct TrainConfig {
  std::size_t steps = 2500;
  std::size_t batch_size = 4;
  double peak_lr = 2e-3;
  std::uint64_t warmup = 200;
  std::uint64_t seed = 7;
  std::size_t checkpoint_every = 500;
  LossWeights weights;
  double grad_clip = 1.0;
  std::size_t min_style = 5;
  std::size_t max_style = 10;

  void validate() const;
};

/// Sections [model], [codec], [corpus], [train] of the experiment file.
struct ExperimentConfig {
  ModelConfig model;
  codec::CodecConfig codec;
  std::uint64_t codebook_seed = 3;
  CorpusConfig corpus;
  TrainConfig train;

  /// Fills derived sizes (vocabulary, latent dim, K) and validates everything.
  void finalize();
};

/// Parses INI text; unknown sections or keys throw ConfigError.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string to_ini(const ExperimentConfig& cfg);

}  // namespace msp::train
