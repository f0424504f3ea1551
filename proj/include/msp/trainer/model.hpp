#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "msp/decoder/decoder.hpp"
#include "msp/encoder/encoder.hpp"
#include "msp/nncore/optim.hpp"

namespace msp::train {

struct ModelConfig {
  encoder::EncoderConfig encoder;
  decoder::DecoderConfig decoder;
  std::uint64_t init_seed = 17;

  /// Checks both halves and that they share the model width.
  void validate() const;
};

/// Encoder and decoder sharing one parameter store.
class TtsModel {
 public:
  explicit TtsModel(const ModelConfig& cfg);

  const ModelConfig& config() const noexcept { return cfg_; }
  nn::ParameterStore& parameters() noexcept { return store_; }
  const nn::ParameterStore& parameters() const noexcept { return store_; }
  const encoder::SpeakerAwareEncoder& encoder() const noexcept { return *encoder_; }
  const decoder::AcousticDecoder& decoder() const noexcept { return *decoder_; }

 private:
  ModelConfig cfg_;
  nn::ParameterStore store_;
  std::unique_ptr<encoder::SpeakerAwareEncoder> encoder_;
  std::unique_ptr<decoder::AcousticDecoder> decoder_;
};

/// Everything needed to continue training from a given step.
struct Checkpoint {
  std::string config_text;  // experiment config the model was built from
  std::uint64_t step = 0;
  nn::AdamState adam;
};

/// "MSVE1" container: config text, step, named parameter blobs, Adam moments.
void save_checkpoint(const std::string& path, const TtsModel& model, const Checkpoint& state);
/// Restores parameter values into `model` (names and shapes must match) and
/// returns the stored training state.
Checkpoint load_checkpoint(const std::string& path, TtsModel& model);
/// Reads only the config text of a checkpoint.
std::string read_checkpoint_config(const std::string& path);

}  // namespace msp::train
