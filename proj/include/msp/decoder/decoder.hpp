#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "msp/codec/codec.hpp"
#include "msp/encoder/encoder.hpp"
#include "msp/nncore/layers.hpp"

namespace msp::decoder {

struct DecoderConfig {
  std::size_t model_dim = 64;
  std::size_t heads = 4;
  std::size_t ffn_dim = 256;
  std::size_t ar_blocks = 2;
  std::size_t nar_blocks = 2;
  std::size_t codebook_size = 64;
  std::size_t max_generation_frames = 400;

  void validate() const;
  nn::TransformerBlockConfig block_config() const;
  /// Id of the end-of-sequence token in the layer-1 vocabulary.
  int eos() const noexcept { return static_cast<int>(codebook_size); }
};

struct SamplingConfig {
  enum class Mode { kGreedy, kTopK };
  Mode mode = Mode::kTopK;
  std::size_t top_k = 8;
  double temperature = 1.0;
  std::uint64_t seed = 0;
};

/// Layer-1 ids generated after the prompt prefix (EOS and prefix excluded).
struct ArResult {
  std::vector<int> tokens;
  bool hit_eos = false;
};

/// Acoustic decoder: eight acoustic embedding tables shared by an
/// autoregressive stack (layer 1) and a non-autoregressive stack (layers 2..8).
class AcousticDecoder {
 public:
  AcousticDecoder(nn::ParameterStore& store, const std::string& prefix, const DecoderConfig& cfg, Rng& rng);

  const DecoderConfig& config() const noexcept { return cfg_; }

  /// Logits [T x (K+1)]; row t predicts tokens[t] from cond and tokens[< t].
  /// Tokens must lie in [0, K]. T = 0 yields an empty [0 x (K+1)] result.
  nn::Var ar_forward(const nn::Var& cond, std::span<const int> tokens) const;

  /// Continues `prompt_layer1` until EOS or max_generation_frames new tokens.
  ArResult ar_generate(const nn::Var& cond, std::span<const int> prompt_layer1, const SamplingConfig& sampling) const;

  /// Input rows of the NAR stack for stage i (before the transformer blocks):
  /// [cond] ++ [sum_{l<=i} E_l(prompt_l) + pos] ++ [sum_{l<i} E_l(pred_l) + pos + stage].
  nn::Var nar_input(const nn::Var& cond, const codec::CodeGrid& prompt, const std::vector<std::vector<int>>& predicted,
                    std::size_t stage) const;
  /// Logits [T x K] over the target region for stage i in [2, 8].
  /// `predicted` holds exactly i-1 layers of length T.
  nn::Var nar_forward(const nn::Var& cond, const codec::CodeGrid& prompt, const std::vector<std::vector<int>>& predicted,
                      std::size_t stage) const;

  /// Greedy stage-by-stage prediction of layers 2..8 given layer 1.
  codec::CodeGrid nar_generate(const nn::Var& cond, const codec::CodeGrid& prompt, std::span<const int> layer1) const;
  /// Same, visiting stages in `order` (a permutation of 2..8). Layers not yet
  /// predicted when a stage runs are read as id 0.
  codec::CodeGrid nar_generate(const nn::Var& cond, const codec::CodeGrid& prompt, std::span<const int> layer1,
                               std::span<const std::size_t> order) const;

  /// Acoustic embedding table for layer l in [1, 8].
  const nn::Embedding& table(std::size_t layer) const { return tables_.at(layer - 1); }

 private:
  nn::Var embed_sum(const std::vector<std::span<const int>>& layers, std::size_t length) const;

  DecoderConfig cfg_;
  std::vector<nn::Embedding> tables_;
  nn::Parameter* ar_bos_ = nullptr;
  std::vector<nn::TransformerBlock> ar_blocks_;
  nn::LayerNorm ar_norm_;
  nn::Linear ar_head_;
  nn::Embedding stage_table_;
  std::vector<nn::TransformerBlock> nar_blocks_;
  nn::LayerNorm nar_norm_;
  std::vector<nn::Linear> nar_heads_;
};

/// Prefix-LM mask for `text` condition rows followed by `acoustic` rows:
/// text rows see only text; acoustic row t sees text and acoustic rows <= t.
nn::AttentionMask prefix_lm_mask(std::size_t text, std::size_t acoustic);

}  // namespace msp::decoder
