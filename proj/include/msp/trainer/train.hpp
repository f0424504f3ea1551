#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msp/codec/codec.hpp"
#include "msp/trainer/config.hpp"
#include "msp/trainer/corpus.hpp"
#include "msp/trainer/model.hpp"

namespace msp::train {

/// An utterance with its cached codec artifacts.
struct TrainSample {
  int speaker_id = 0;
  int utterance_index = 0;
  std::string transcript;
  text::PhonemeSequence phonemes;
  codec::LatentFrames latents;
  codec::CodeGrid codes;
};

struct EncodedCorpus {
  std::uint64_t codec_fingerprint = 0;
  std::vector<TrainSample> samples;

  std::vector<std::size_t> of_speaker(int speaker_id) const;
};

/// Hash of the codec configuration and codebooks; cached artifacts built
/// with a different fingerprint are stale.
std::uint64_t codec_fingerprint(const codec::Codec& codec, const codec::Codebooks& cb);

/// Analyzes and quantizes the utterances of the selected speakers.
EncodedCorpus encode_corpus(const Corpus& corpus, const codec::Codec& codec, const codec::Codebooks& cb,
                            bool train_speakers_only);
/// Re-encodes `cache` when its fingerprint no longer matches. Returns true if
/// it did.
bool refresh_encoding(EncodedCorpus& cache, const Corpus& corpus, const codec::Codec& codec,
                      const codec::Codebooks& cb, bool train_speakers_only);

/// Codebooks fit on the latents of the training speakers.
codec::Codebooks fit_codebooks(const Corpus& corpus, const codec::Codec& codec, const ExperimentConfig& cfg);

struct StylePrompt {
  codec::LatentFrames latents;
  std::vector<std::size_t> chosen;  // indices into the pool, in draw order
  bool with_replacement = false;
};

/// Draws a count uniformly in [min_count, max_count] and concatenates that
/// many distinct pool entries (never `exclude`). Falls back to sampling with
/// replacement, with a warning, when the pool is too small.
StylePrompt sample_style_prompt(std::span<const codec::LatentFrames* const> pool, std::optional<std::size_t> exclude,
                                Rng& rng, std::size_t min_count = 5, std::size_t max_count = 10);

struct NarDraw {
  std::size_t stage = 2;       // in [2, 8]
  std::size_t prefix_len = 1;  // in [1, floor(T/2)]
};

/// Requires T >= 4.
NarDraw sample_nar_stage(std::size_t frames, Rng& rng);

struct SampleLosses {
  nn::Var ar;
  nn::Var nar;
};

/// Forward pass of both branches for one utterance with an explicit style
/// prompt and NAR draw. The AR branch predicts the whole layer-1 sequence plus
/// EOS; the NAR branch predicts layer `stage` after the prefix.
SampleLosses sample_losses(const TtsModel& model, const TrainSample& sample, const codec::LatentFrames& style,
                           const NarDraw& draw);

struct StepLosses {
  double loss_ar = 0.0;
  double loss_nar = 0.0;
  double loss_total = 0.0;
};

/// Per-sample randomness for a step, independent of any carried state so a
/// resumed run draws exactly what the original would have.
Rng step_rng(std::uint64_t seed, std::uint64_t step, std::size_t sample_id);

struct SampleDraw {
  StylePrompt style;  // `chosen` holds corpus sample ids
  NarDraw nar;
};

/// The style prompt and NAR stage/prefix that `train_step` uses for sample
/// `id` at `step`. The style pool is the speaker's other training samples.
SampleDraw draw_for_step(const EncodedCorpus& data, std::size_t id, const TrainConfig& cfg, std::uint64_t step);

/// Sample ids of the given 1-based step: consecutive slices of per-epoch
/// permutations of the corpus.
std::vector<std::size_t> batch_for_step(std::size_t corpus_size, std::size_t batch_size, std::uint64_t seed,
                                        std::uint64_t step);

/// Accumulates the batch-mean loss gradient, clips, and applies one Adam update.
/// A non-finite loss leaves the model untouched and throws NonFiniteError
/// naming the batch ids.
StepLosses train_step(const EncodedCorpus& data, std::span<const std::size_t> batch, TtsModel& model,
                      nn::AdamState& opt, double lr, const TrainConfig& cfg, std::uint64_t step);

struct StepRecord {
  std::uint64_t step = 0;
  double loss_ar = 0.0;
  double loss_nar = 0.0;
  double lr = 0.0;
};

struct TrainOptions {
  std::string out_dir;                  // metrics.csv and checkpoints; empty = in memory only
  std::string resume_from;              // checkpoint path to continue from
  std::optional<std::uint64_t> stop_after;  // last step to run (defaults to cfg.train.steps)
  std::function<void(const StepRecord&)> on_step;
};

struct TrainResult {
  std::vector<StepRecord> records;
  std::uint64_t last_step = 0;
  nn::AdamState adam;
};

/// Runs steps (resume step + 1) .. stop_after, writing one metrics row per
/// step and a checkpoint every cfg.train.checkpoint_every steps and at the end.
TrainResult train(const ExperimentConfig& cfg, const EncodedCorpus& data, TtsModel& model,
                  const TrainOptions& options = {});

}  // namespace msp::train
