#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msp/codec/codec.hpp"
#include "msp/decoder/decoder.hpp"
#include "msp/textfront/textfront.hpp"
#include "msp/trainer/corpus.hpp"
#include "msp/trainer/model.hpp"

namespace msp::pipeline {

struct ZeroShotRequest {
  text::Transcript target_text;
  std::vector<codec::Waveform> style_utterances;
  codec::Waveform timbre_utterance;
  text::Transcript timbre_transcript;
  decoder::SamplingConfig sampling;
  /// Text-only ablation: the reference attention is bypassed.
  bool no_style = false;
  /// No timbre prompt: empty AR prefix, no NAR prompt, no prompt transcript.
  bool no_timbre_prefix = false;
};

/// Raised when the AR decoder emits EOS before any frame.
class SynthesisError : public Error {
 public:
  SynthesisError(const std::string& what, std::string diagnostics)
      : Error(what + " (" + diagnostics + ")"), diagnostics_(std::move(diagnostics)) {}
  const std::string& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::string diagnostics_;
};

struct SynthesisResult {
  codec::Waveform wave;      // target-text region only
  codec::CodeGrid codes;     // generated frames, 8 layers
  std::size_t prompt_frames = 0;
  std::size_t style_frames = 0;
  bool hit_eos = false;
};

/// Text prompt -> style latents -> speaker-aware encoding -> AR with the
/// timbre layer-1 prefix -> NAR with the full timbre grid -> RVQ decode ->
/// resynthesis. Only the continuation after the prompt is decoded, so the
/// output covers the target text.
SynthesisResult synthesize_zero_shot(const ZeroShotRequest& req, const train::TtsModel& model,
                                     const codec::Codec& codec, const codec::Codebooks& cb);

/// Convenience for the "3-second" configuration: the timbre utterance is
/// also the only style utterance.
ZeroShotRequest style_equals_timbre(ZeroShotRequest req);

struct TrialSpec {
  int target_speaker = 0;
  int distractor_speaker = 0;
  std::size_t target_utterance = 0;        // corpus index; provides text and reference audio
  std::size_t timbre_utterance = 0;        // corpus index
  std::vector<std::size_t> style_utterances;  // corpus indices
  std::uint64_t seed = 0;
};

struct TrialResult {
  TrialSpec spec;
  double secs_target = 0.0;
  double secs_distractor = 0.0;
  double mcd = 0.0;
  std::size_t frames = 0;
  bool failed = false;
};

struct EvalOptions {
  decoder::SamplingConfig sampling;
  bool no_style = false;
  bool no_timbre_prefix = false;
};

/// Trials over the held-out speakers, cycling through them as targets. The
/// timbre prompt is one of the speaker's shortest utterances. Style
/// utterances exclude the timbre and target utterances; style_count == 1
/// uses the timbre utterance itself as the style prompt.
std::vector<TrialSpec> plan_trials(const train::Corpus& corpus, std::size_t n_trials, std::size_t style_count,
                                   std::uint64_t seed);

/// Synthesizes one trial. The distractor reference speaks the same text in
/// the distractor speaker's voice.
TrialResult run_trial(const TrialSpec& spec, const train::Corpus& corpus, const train::TtsModel& model,
                      const codec::Codec& codec, const codec::Codebooks& cb, const EvalOptions& options);

struct Summary {
  double mean = 0.0;
  double ci95 = 0.0;  // half-width, normal approximation
  std::size_t n = 0;
};

Summary summarize(const std::vector<double>& values);

struct EvalReport {
  std::vector<TrialResult> trials;
  Summary secs;
  Summary secs_distractor;
  Summary mcd;
  /// Fraction of trials with secs_target > secs_distractor.
  double target_win_rate = 0.0;

  void write_csv(const std::string& path) const;
};

EvalReport evaluate(const std::vector<TrialSpec>& specs, const train::Corpus& corpus, const train::TtsModel& model,
                    const codec::Codec& codec, const codec::Codebooks& cb, const EvalOptions& options);

struct SweepRow {
  std::size_t n_sentences = 0;
  double mean_secs = 0.0;
  double mean_mcd = 0.0;
  std::size_t n_trials = 0;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  std::vector<EvalReport> cells;

  /// Columns: n_sentences, mean_secs, mean_mcd, n_trials.
  void write_csv(const std::string& path) const;
};

/// For each count, the same targets and timbre prompts are synthesized with
/// that many style sentences.
SweepReport prompt_length_sweep(const train::Corpus& corpus, const train::TtsModel& model, const codec::Codec& codec,
                                const codec::Codebooks& cb, const std::vector<std::size_t>& counts,
                                std::size_t trials_per_cell, std::uint64_t seed, const EvalOptions& options = {});

}  // namespace msp::pipeline
