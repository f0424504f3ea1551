#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msp/codec/codec.hpp"
#include "msp/common/rng.hpp"
#include "msp/textfront/textfront.hpp"

namespace msp::train {

/// Synthetic speaker: timbre shapes the spectrum, style shapes timing and pitch.
struct SynthSpeaker {
  int id = 0;
  // Timbre.
  double f0_base = 150.0;             // Hz, [90, 240]
  double tilt_db_per_octave = -6.0;   // [-12, -3]
  double formant1_offset = 0.0;       // Hz, [-150, 150]
  double formant2_offset = 0.0;       // Hz, [-300, 300]
  // Style.
  double rate = 1.0;                  // speaking-rate multiplier, [0.75, 1.35]
  double pitch_slope = 0.0;           // semitones per second, [-4, 4]
  double vowel_duration_bias = 1.0;   // [0.8, 1.25]
  double consonant_duration_bias = 1.0;  // [0.8, 1.25]

  /// Deterministic draw from (corpus_seed, id).
  static SynthSpeaker draw(std::uint64_t corpus_seed, int id);
};

struct Utterance {
  int speaker_id = 0;
  int index = 0;
  std::string transcript;
  codec::Waveform wave;
};

struct CorpusConfig {
  std::size_t n_speakers = 8;
  std::size_t utterances_per_speaker = 40;
  std::size_t train_speakers = 6;
  std::size_t min_words = 2;
  std::size_t max_words = 6;
  std::uint64_t seed = 1234;

  void validate() const;
};

struct Corpus {
  CorpusConfig config;
  std::vector<SynthSpeaker> speakers;
  std::vector<Utterance> utterances;  // grouped by speaker, in index order

  /// Speaker ids [0, train_speakers) are for training, the rest are held out.
  bool is_train_speaker(int id) const { return static_cast<std::size_t>(id) < config.train_speakers; }
  std::vector<std::size_t> utterances_of(int speaker_id) const;
  const SynthSpeaker& speaker(int id) const;
};

/// Vocabulary the transcripts are drawn from.
const std::vector<std::string>& word_list();

/// Renders a transcript with the speaker's timbre and style. `rng` only
/// drives micro-variation (jitter, noise), so equal seeds give equal audio.
codec::Waveform render_utterance(const SynthSpeaker& speaker, const std::string& transcript, Rng& rng,
                                 int sample_rate = 8000);

/// Fully deterministic from config.seed.
Corpus synth_corpus(const CorpusConfig& cfg);

/// Directory layout: speakers.csv, manifest.csv and wav/sXX_uYYY.wav.
void save_corpus(const Corpus& corpus, const std::string& dir);
Corpus load_corpus(const std::string& dir);

}  // namespace msp::train
