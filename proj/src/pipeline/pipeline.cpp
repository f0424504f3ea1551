#include "msp/pipeline/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "msp/common/errors.hpp"
#include "msp/pipeline/metrics.hpp"

namespace msp::pipeline {

SynthesisResult synthesize_zero_shot(const ZeroShotRequest& req, const train::TtsModel& model,
                                     const codec::Codec& codec, const codec::Codebooks& cb) {
  nn::NoGradGuard no_grad;
  const bool use_timbre = !req.no_timbre_prefix;
  if (text::g2p(req.target_text).empty()) {
    throw EmptyInputError("synthesize_zero_shot: empty target text");
  }
  const auto text_prompt =
      text::build_text_prompt(use_timbre ? req.timbre_transcript : text::Transcript(""), req.target_text);

  codec::LatentFrames style;
  if (!req.no_style) {
    if (req.style_utterances.empty()) {
      throw EmptyInputError("synthesize_zero_shot: no style utterances");
    }
    std::vector<codec::LatentFrames> parts;
    for (const auto& w : req.style_utterances) parts.push_back(codec.analyze(w));
    style = codec::concatenate(parts);
  }
  const auto cond = model.encoder().encode(text_prompt, req.no_style ? nullptr : &style);

  codec::CodeGrid timbre(0, cb.codebook_size);
  if (use_timbre) {
    timbre = codec::rvq_encode(codec.analyze(req.timbre_utterance), cb);
  }
  const auto ar = model.decoder().ar_generate(cond.rows, timbre.layers[0], req.sampling);
  if (ar.tokens.empty()) {
    std::ostringstream diag;
    diag << "text phonemes=" << text_prompt.phonemes.size() << " prompt_len=" << text_prompt.prompt_len
         << " prefix_frames=" << timbre.frames << " style_frames=" << style.frames << " seed=" << req.sampling.seed;
    throw SynthesisError("synthesize_zero_shot: AR decoder produced no frames", diag.str());
  }
  SynthesisResult out;
  out.codes = model.decoder().nar_generate(cond.rows, timbre, ar.tokens);
  out.prompt_frames = timbre.frames;
  out.style_frames = style.frames;
  out.hit_eos = ar.hit_eos;
  out.wave = codec.synthesize(codec::rvq_decode(out.codes, cb, codec::kStages, codec.config().frame_hop));
  return out;
}

ZeroShotRequest style_equals_timbre(ZeroShotRequest req) {
  req.style_utterances = {req.timbre_utterance};
  return req;
}

namespace {

std::size_t word_count(const std::string& transcript) {
  std::istringstream is(transcript);
  std::size_t n = 0;
  for (std::string w; is >> w;) ++n;
  return n;
}

}  // namespace

std::vector<TrialSpec> plan_trials(const train::Corpus& corpus, std::size_t n_trials, std::size_t style_count,
                                   std::uint64_t seed) {
  std::vector<int> held_out;
  for (const auto& s : corpus.speakers) {
    if (!corpus.is_train_speaker(s.id)) held_out.push_back(s.id);
  }
  if (held_out.size() < 2) {
    throw ContractError("plan_trials: need at least two held-out speakers");
  }
  if (style_count == 0) throw ContractError("plan_trials: style_count must be >= 1");
  std::vector<TrialSpec> specs;
  for (std::size_t k = 0; k < n_trials; ++k) {
    Rng rng(mix_seed(seed, k));
    TrialSpec spec;
    spec.seed = mix_seed(seed ^ 0x5eedULL, k);
    spec.target_speaker = held_out[k % held_out.size()];
    spec.distractor_speaker = held_out[(k + 1 + k / held_out.size() % (held_out.size() - 1)) % held_out.size()];
    auto pool = corpus.utterances_of(spec.target_speaker);
    if (pool.size() < 2 + (style_count > 1 ? style_count : 0)) {
      throw ContractError("plan_trials: speaker " + std::to_string(spec.target_speaker) +
                          " has too few utterances for " + std::to_string(style_count) + " style sentences");
    }
    rng.shuffle(pool);
    // Timbre prompt: the shortest utterance among the shuffled candidates, so
    // prompt plus target stay within the utterance lengths seen in training.
    auto shortest = std::min_element(pool.begin() + 1, pool.end(), [&](std::size_t a, std::size_t b) {
      return word_count(corpus.utterances[a].transcript) < word_count(corpus.utterances[b].transcript);
    });
    std::iter_swap(pool.begin() + 1, shortest);
    spec.target_utterance = pool[0];
    spec.timbre_utterance = pool[1];
    if (style_count == 1) {
      spec.style_utterances = {spec.timbre_utterance};
    } else {
      spec.style_utterances.assign(pool.begin() + 2, pool.begin() + 2 + static_cast<std::ptrdiff_t>(style_count));
    }
    specs.push_back(std::move(spec));
  }
  return specs;
}

TrialResult run_trial(const TrialSpec& spec, const train::Corpus& corpus, const train::TtsModel& model,
                      const codec::Codec& codec, const codec::Codebooks& cb, const EvalOptions& options) {
  const auto& target = corpus.utterances.at(spec.target_utterance);
  const auto& timbre = corpus.utterances.at(spec.timbre_utterance);
  ZeroShotRequest req;
  req.target_text = text::Transcript(target.transcript);
  for (auto i : spec.style_utterances) req.style_utterances.push_back(corpus.utterances.at(i).wave);
  req.timbre_utterance = timbre.wave;
  req.timbre_transcript = text::Transcript(timbre.transcript);
  req.sampling = options.sampling;
  req.sampling.seed = spec.seed;
  req.no_style = options.no_style;
  req.no_timbre_prefix = options.no_timbre_prefix;

  TrialResult res;
  res.spec = spec;
  // Same text in the distractor's voice, rendered the way the corpus was.
  Rng render_rng(mix_seed(spec.seed, 0xd157ULL));
  const auto distractor_ref = train::render_utterance(corpus.speaker(spec.distractor_speaker), target.transcript,
                                                      render_rng, target.wave.sample_rate);
  try {
    const auto syn = synthesize_zero_shot(req, model, codec, cb);
    res.frames = syn.codes.frames;
    if (syn.wave.duration_seconds() < 0.2 || syn.wave.size() < 256) {
      throw SynthesisError("synthesis too short to evaluate", std::to_string(syn.codes.frames) + " frames");
    }
    res.secs_target = secs(syn.wave, target.wave);
    res.secs_distractor = secs(syn.wave, distractor_ref);
    res.mcd = mcd_dtw(target.wave, syn.wave);
  } catch (const SynthesisError& e) {
    spdlog::warn("trial with target utterance {} failed: {}", spec.target_utterance, e.what());
    res.failed = true;
  }
  return res;
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  s.n = values.size();
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(s.n);
  if (s.n > 1) {
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    var /= static_cast<double>(s.n - 1);
    s.ci95 = 1.96 * std::sqrt(var / static_cast<double>(s.n));
  }
  return s;
}

EvalReport evaluate(const std::vector<TrialSpec>& specs, const train::Corpus& corpus, const train::TtsModel& model,
                    const codec::Codec& codec, const codec::Codebooks& cb, const EvalOptions& options) {
  EvalReport report;
  std::vector<double> st;
  std::vector<double> sd;
  std::vector<double> mcd;
  std::size_t wins = 0;
  for (const auto& spec : specs) {
    auto r = run_trial(spec, corpus, model, codec, cb, options);
    // A failed synthesis scores zero similarity and never wins.
    st.push_back(r.failed ? 0.0 : r.secs_target);
    sd.push_back(r.failed ? 0.0 : r.secs_distractor);
    if (!r.failed) mcd.push_back(r.mcd);
    if (!r.failed && r.secs_target > r.secs_distractor) ++wins;
    report.trials.push_back(std::move(r));
  }
  report.secs = summarize(st);
  report.secs_distractor = summarize(sd);
  report.mcd = summarize(mcd);
  report.target_win_rate = specs.empty() ? 0.0 : static_cast<double>(wins) / static_cast<double>(specs.size());
  return report;
}

void EvalReport::write_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write '" + path + "'");
  os.precision(10);
  os << "trial,target_speaker,distractor_speaker,target_utterance,timbre_utterance,n_style,frames,secs_target,"
        "secs_distractor,mcd,failed\n";
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto& t = trials[i];
    os << i << ',' << t.spec.target_speaker << ',' << t.spec.distractor_speaker << ',' << t.spec.target_utterance
       << ',' << t.spec.timbre_utterance << ',' << t.spec.style_utterances.size() << ',' << t.frames << ','
       << t.secs_target << ',' << t.secs_distractor << ',' << t.mcd << ',' << (t.failed ? 1 : 0) << '\n';
  }
}

SweepReport prompt_length_sweep(const train::Corpus& corpus, const train::TtsModel& model, const codec::Codec& codec,
                                const codec::Codebooks& cb, const std::vector<std::size_t>& counts,
                                std::size_t trials_per_cell, std::uint64_t seed, const EvalOptions& options) {
  SweepReport report;
  for (std::size_t count : counts) {
    // Same seed per cell: identical targets, timbre prompts and sampling seeds.
    const auto specs = plan_trials(corpus, trials_per_cell, count, seed);
    auto cell = evaluate(specs, corpus, model, codec, cb, options);
    report.rows.push_back({count, cell.secs.mean, cell.mcd.mean, specs.size()});
    report.cells.push_back(std::move(cell));
  }
  return report;
}

void SweepReport::write_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write '" + path + "'");
  os.precision(10);
  os << "n_sentences,mean_secs,mean_mcd,n_trials\n";
  for (const auto& r : rows) os << r.n_sentences << ',' << r.mean_secs << ',' << r.mean_mcd << ',' << r.n_trials << '\n';
}

}  // namespace msp::pipeline
