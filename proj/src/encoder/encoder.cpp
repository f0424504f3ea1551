#include "msp/encoder/encoder.hpp"

#include "msp/common/errors.hpp"

namespace msp::encoder {

using nn::Tensor;
using nn::Var;

void EncoderConfig::validate() const {
  if (acoustic_strides != kAcousticStrides) {
    throw ConfigError("encoder: acoustic strides must be [2,1,2,1,2,1,2,1]");
  }
  if (model_dim == 0 || latent_dim == 0 || vocabulary_size == 0) {
    throw ConfigError("encoder: model_dim, latent_dim and vocabulary_size must be positive");
  }
  if (acoustic_kernel % 2 == 0) {
    throw ConfigError("encoder: acoustic kernel must be odd");
  }
  block_config().validate();
}

nn::TransformerBlockConfig EncoderConfig::block_config() const {
  return {.dim = model_dim, .heads = heads, .ffn_dim = ffn_dim, .ffn_kernel = ffn_kernel};
}

std::size_t style_rows(std::size_t frames) {
  std::size_t n = std::max<std::size_t>(frames, kDownsampling);
  for (auto s : kAcousticStrides) n = nn::conv1d_output_length(n, s);
  return n;
}

SpeakerAwareEncoder::SpeakerAwareEncoder(nn::ParameterStore& store, const std::string& prefix,
                                         const EncoderConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  const auto d = cfg_.model_dim;
  phoneme_table_ = nn::Embedding(store, prefix + "phoneme_table", cfg_.vocabulary_size, d, rng);
  for (std::size_t b = 0; b < cfg_.phoneme_blocks; ++b) {
    blocks_.emplace_back(store, prefix + "phoneme_block" + std::to_string(b), cfg_.block_config(), rng);
  }
  for (std::size_t i = 0; i < cfg_.acoustic_strides.size(); ++i) {
    acoustic_.emplace_back(store, prefix + "acoustic_conv" + std::to_string(i), i == 0 ? cfg_.latent_dim : d, d,
                           cfg_.acoustic_kernel, cfg_.acoustic_strides[i], rng);
  }
  query_ = nn::Linear(store, prefix + "ref_query", d, d, rng);
  key_ = nn::Linear(store, prefix + "ref_key", d, d, rng);
  value_ = nn::Linear(store, prefix + "ref_value", d, d, rng);
}

Var SpeakerAwareEncoder::phoneme_encode(std::span<const int> ids) const {
  if (ids.empty()) {
    throw EmptyInputError("phoneme_encode: empty phoneme sequence");
  }
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocabulary_size) {
      throw ContractError("phoneme_encode: id " + std::to_string(id) + " outside vocabulary of " +
                          std::to_string(cfg_.vocabulary_size));
    }
  }
  Var x = nn::add(phoneme_table_(ids), nn::constant(nn::positional_encoding(ids.size(), cfg_.model_dim)));
  for (const auto& block : blocks_) x = block(x);
  return x;
}

StyleEmbeddings SpeakerAwareEncoder::acoustic_encode(const codec::LatentFrames& style) const {
  if (style.frames == 0) {
    throw EmptyInputError("acoustic_encode: empty style prompt");
  }
  if (style.dim != cfg_.latent_dim) {
    throw DimensionError("acoustic_encode: latent dim " + std::to_string(style.dim) + " but encoder expects " +
                         std::to_string(cfg_.latent_dim));
  }
  const std::size_t t = std::max(style.frames, kDownsampling);
  Tensor input = Tensor::matrix(t, style.dim);
  for (std::size_t r = 0; r < t; ++r) {
    const auto src = style.row(std::min(r, style.frames - 1));
    std::copy(src.begin(), src.end(), input.row(r).begin());
  }
  Var x = nn::constant(std::move(input));
  for (std::size_t i = 0; i < acoustic_.size(); ++i) {
    x = acoustic_[i](x);
    if (i + 1 < acoustic_.size()) x = nn::relu(x);
  }
  return {x, style.frames};
}

ReferenceAttention SpeakerAwareEncoder::reference_attend(const Var& phon, const StyleEmbeddings& style) const {
  if (style.size() == 0) {
    throw EmptyInputError("reference_attend: no style rows");
  }
  if (phon->value().cols() != cfg_.model_dim || style.rows->value().cols() != cfg_.model_dim) {
    throw DimensionError("reference_attend: phoneme " + nn::shape_string(phon->value().shape()) + " and style " +
                         nn::shape_string(style.rows->value().shape()) + " must both have width " +
                         std::to_string(cfg_.model_dim));
  }
  auto [aligned, weights] = nn::scaled_dot_attention(query_(phon), key_(style.rows), value_(style.rows));
  return {aligned, std::move(weights)};
}

SpeakerAwareEmbeddings SpeakerAwareEncoder::encode(const text::TextPrompt& prompt,
                                                   const codec::LatentFrames* style) const {
  Var phon = phoneme_encode(prompt.phonemes.ids);
  if (style == nullptr) {
    return {phon, prompt.prompt_len, {}};
  }
  auto ref = reference_attend(phon, acoustic_encode(*style));
  return {nn::add(phon, ref.aligned), prompt.prompt_len, std::move(ref.weights)};
}

}  // namespace msp::encoder
