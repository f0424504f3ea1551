#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>

#include "msp/codec/codec.hpp"
#include "msp/nncore/layers.hpp"
#include "msp/textfront/textfront.hpp"

namespace msp::encoder {

/// Stride schedule of the acoustic encoder; the product (16) sets the
/// quasi-phoneme granularity.
inline constexpr std::array<std::size_t, 8> kAcousticStrides = {2, 1, 2, 1, 2, 1, 2, 1};
inline constexpr std::size_t kDownsampling = 16;

struct EncoderConfig {
  std::size_t model_dim = 64;
  std::size_t vocabulary_size = 39;
  std::size_t phoneme_blocks = 2;
  std::size_t heads = 4;
  std::size_t ffn_dim = 256;
  std::size_t ffn_kernel = 3;
  std::size_t latent_dim = 32;
  std::size_t acoustic_kernel = 3;
  std::array<std::size_t, 8> acoustic_strides = kAcousticStrides;

  /// Throws ConfigError for a non-standard stride list or inconsistent sizes.
  void validate() const;
  nn::TransformerBlockConfig block_config() const;
};

struct StyleEmbeddings {
  nn::Var rows;  // [S x D]
  std::size_t source_frame_count = 0;

  std::size_t size() const { return rows->value().rows(); }
};

struct ReferenceAttention {
  nn::Var aligned;      // [L x D]
  nn::Tensor weights;   // [L x S], rows sum to 1
};

struct SpeakerAwareEmbeddings {
  nn::Var rows;  // [L x D]
  std::size_t prompt_len = 0;
  /// Reference-attention weights; empty when the style path was bypassed.
  nn::Tensor attention_weights;

  std::size_t size() const { return rows->value().rows(); }
};

/// Number of style rows produced for a prompt of `frames` codec frames.
std::size_t style_rows(std::size_t frames);

/// Speaker-aware text encoder: phoneme encoder, strided acoustic encoder and
/// single-head reference attention, fused residually.
class SpeakerAwareEncoder {
 public:
  SpeakerAwareEncoder(nn::ParameterStore& store, const std::string& prefix, const EncoderConfig& cfg, Rng& rng);

  const EncoderConfig& config() const noexcept { return cfg_; }

  /// Embedding + positions + FFT blocks. Empty input throws EmptyInputError,
  /// ids outside the vocabulary throw ContractError.
  nn::Var phoneme_encode(std::span<const int> ids) const;
  /// Prompts shorter than 16 frames are right-padded with their last frame.
  StyleEmbeddings acoustic_encode(const codec::LatentFrames& style) const;
  ReferenceAttention reference_attend(const nn::Var& phon, const StyleEmbeddings& style) const;

  /// phoneme_encode + reference_attend. A null style skips the reference
  /// attention entirely (text-only ablation).
  SpeakerAwareEmbeddings encode(const text::TextPrompt& prompt, const codec::LatentFrames* style) const;

  const nn::Linear& query_projection() const noexcept { return query_; }
  const nn::Linear& key_projection() const noexcept { return key_; }
  const nn::Linear& value_projection() const noexcept { return value_; }
  const std::vector<nn::Conv1d>& acoustic_layers() const noexcept { return acoustic_; }

 private:
  EncoderConfig cfg_;
  nn::Embedding phoneme_table_;
  std::vector<nn::TransformerBlock> blocks_;
  std::vector<nn::Conv1d> acoustic_;
  nn::Linear query_;
  nn::Linear key_;
  nn::Linear value_;
};

}  // namespace msp::encoder
