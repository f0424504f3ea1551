#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <set>

#include "msp/common/errors.hpp"
#include "msp/pipeline/metrics.hpp"
#include "msp/pipeline/pipeline.hpp"
#include "msp/trainer/train.hpp"
#include "signals.hpp"

using namespace msp;
using namespace msp::pipeline;

namespace {

codec::Waveform concat(const codec::Waveform& a, const codec::Waveform& b) {
  codec::Waveform w = a;
  w.samples.insert(w.samples.end(), b.samples.begin(), b.samples.end());
  return w;
}

// Exhaustive minimum over every monotone path with unit steps.
double brute_force_dtw(const std::vector<double>& cost, std::size_t n, std::size_t m) {
  std::function<double(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> double {
    const double c = cost[i * m + j];
    if (i == n - 1 && j == m - 1) return c;
    double best = std::numeric_limits<double>::infinity();
    if (i + 1 < n) best = std::min(best, go(i + 1, j));
    if (j + 1 < m) best = std::min(best, go(i, j + 1));
    if (i + 1 < n && j + 1 < m) best = std::min(best, go(i + 1, j + 1));
    return c + best;
  };
  return go(0, 0);
}

}  // namespace

TEST(SpeakerEmbed, UnitNormNonNegative) {
  Rng rng(1);
  const auto w = msp::testing::harmonic_tone(rng, 1.0);
  const auto e = speaker_embed(w);
  ASSERT_EQ(e.size(), kEmbeddingDim);
  double n2 = 0.0;
  for (double v : e) {
    EXPECT_GE(v, 0.0);
    n2 += v * v;
  }
  EXPECT_NEAR(n2, 1.0, 1e-12);
}

TEST(SpeakerEmbed, InvariantToDuplicationWhenLeadingHopIsSilent) {
  Rng rng(2);
  auto w = msp::testing::harmonic_tone(rng, 0.8);
  w.samples.resize(128 * 40);
  std::fill(w.samples.begin(), w.samples.begin() + 128, 0.0);
  const auto a = speaker_embed(w);
  const auto b = speaker_embed(concat(w, w));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-10) << i;
}

TEST(SpeakerEmbed, RejectsShortAndSilentInput) {
  Rng rng(3);
  EXPECT_THROW(speaker_embed(msp::testing::harmonic_tone(rng, 0.1)), ContractError);
  codec::Waveform silent;
  silent.samples.assign(8000, 0.0);
  EXPECT_THROW(speaker_embed(silent), ContractError);
}

TEST(Secs, SelfSymmetryAndRange) {
  Rng rng(4);
  for (int k = 0; k < 10; ++k) {
    const auto a = msp::testing::harmonic_tone(rng, 0.6);
    const auto b = msp::testing::harmonic_tone(rng, 0.7);
    EXPECT_NEAR(secs(a, a), 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(secs(a, b), secs(b, a));
    EXPECT_GE(secs(a, b), 0.0);
    EXPECT_LE(secs(a, b), 1.0);
  }
}

TEST(Mcd, FrameDistanceFormula) {
  std::vector<double> a(kCepstralOrder, 0.0);
  std::vector<double> b(kCepstralOrder, 0.0);
  a[0] = 1.0;
  EXPECT_NEAR(mcd_frame_distance(a.data(), b.data()), 10.0 / std::log(10.0) * std::sqrt(2.0), 1e-12);
  a[3] = -2.0;
  b[12] = 2.0;
  EXPECT_NEAR(mcd_frame_distance(a.data(), b.data()), 10.0 / std::log(10.0) * std::sqrt(2.0 * 9.0), 1e-12);
}

TEST(Mcd, SelfDistanceIsZeroOnDiagonal) {
  Rng rng(5);
  const auto w = msp::testing::harmonic_tone(rng, 0.5);
  EXPECT_DOUBLE_EQ(mcd_dtw(w, w), 0.0);
  const auto c = mel_cepstra(w);
  const std::size_t n = c.size() / kCepstralOrder;
  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      cost[i * n + j] = mcd_frame_distance(&c[i * kCepstralOrder], &c[j * kCepstralOrder]);
    }
  }
  const auto r = dtw(cost, n, n);
  ASSERT_EQ(r.path.size(), n);
  for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(r.path[i], std::make_pair(i, i));
}

TEST(Mcd, RejectsTooFewFrames) {
  codec::Waveform w;
  w.samples.assign(100, 0.1);
  Rng rng(6);
  EXPECT_THROW(mcd_dtw(w, msp::testing::harmonic_tone(rng, 0.5)), ContractError);
}

TEST(Dtw, ThreeByFourByHand) {
  // Optimal path (0,0) (1,1) (1,2) (2,3): 1 + 1 + 1 + 1.
  const std::vector<double> cost = {1, 5, 5, 5,  //
                                    5, 1, 1, 5,  //
                                    5, 5, 5, 1};
  const auto r = dtw(cost, 3, 4);
  EXPECT_DOUBLE_EQ(r.total_cost, 4.0);
  const std::vector<std::pair<std::size_t, std::size_t>> expected = {{0, 0}, {1, 1}, {1, 2}, {2, 3}};
  EXPECT_EQ(r.path, expected);
  EXPECT_DOUBLE_EQ(r.mean_cost(), 1.0);
}

TEST(Dtw, MatchesExhaustiveSearch) {
  Rng rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 4));
    const auto m = static_cast<std::size_t>(rng.uniform_int(1, 4));
    std::vector<double> cost(n * m);
    // Small integer costs produce many ties.
    for (auto& c : cost) c = static_cast<double>(rng.uniform_int(0, 3));
    const auto r = dtw(cost, n, m);
    EXPECT_DOUBLE_EQ(r.total_cost, brute_force_dtw(cost, n, m));
    double along = 0.0;
    for (auto [i, j] : r.path) along += cost[i * m + j];
    EXPECT_DOUBLE_EQ(along, r.total_cost);
    EXPECT_EQ(r.path.front(), std::make_pair(std::size_t{0}, std::size_t{0}));
    EXPECT_EQ(r.path.back(), std::make_pair(n - 1, m - 1));
    for (std::size_t k = 1; k < r.path.size(); ++k) {
      const auto di = r.path[k].first - r.path[k - 1].first;
      const auto dj = r.path[k].second - r.path[k - 1].second;
      EXPECT_TRUE((di == 1 && dj <= 1) || (di == 0 && dj == 1));
    }
  }
}

TEST(Dtw, RejectsBadShapes) {
  EXPECT_THROW(dtw({}, 0, 0), DimensionError);
  EXPECT_THROW(dtw({1.0, 2.0}, 1, 3), DimensionError);
  EXPECT_THROW(dtw({1.0, std::nan("")}, 1, 2), NonFiniteError);
}

TEST(Summarize, MeanAndInterval) {
  const auto s = summarize({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  // sample sd = sqrt(5/3)
  EXPECT_NEAR(s.ci95, 1.96 * std::sqrt(5.0 / 3.0) / 2.0, 1e-12);
  EXPECT_EQ(s.n, 4u);
  EXPECT_EQ(summarize({}).n, 0u);
  EXPECT_DOUBLE_EQ(summarize({7.0}).ci95, 0.0);
}

class PipelineFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    cfg_ = new train::ExperimentConfig();
    cfg_->corpus.n_speakers = 4;
    cfg_->corpus.train_speakers = 2;
    cfg_->corpus.utterances_per_speaker = 7;
    cfg_->codec.codebook_size = 16;
    cfg_->model.encoder.model_dim = 32;
    cfg_->model.encoder.heads = 2;
    cfg_->model.encoder.ffn_dim = 64;
    cfg_->model.encoder.phoneme_blocks = 1;
    cfg_->model.decoder.ar_blocks = 1;
    cfg_->model.decoder.nar_blocks = 1;
    cfg_->model.decoder.max_generation_frames = 40;
    cfg_->finalize();
    corpus_ = new train::Corpus(train::synth_corpus(cfg_->corpus));
    codec_ = new codec::Codec(cfg_->codec);
    cb_ = new codec::Codebooks(train::fit_codebooks(*corpus_, *codec_, *cfg_));
    model_ = new train::TtsModel(cfg_->model);
  }
  static void TearDownTestSuite() {
    delete model_;
    delete cb_;
    delete codec_;
    delete corpus_;
    delete cfg_;
  }

  ZeroShotRequest request(std::uint64_t seed = 1) const {
    const auto& timbre = corpus_->utterances[corpus_->utterances_of(3)[0]];
    ZeroShotRequest req;
    req.target_text = text::Transcript("the cat sat");
    req.timbre_utterance = timbre.wave;
    req.timbre_transcript = text::Transcript(timbre.transcript);
    req.style_utterances = {corpus_->utterances[corpus_->utterances_of(3)[1]].wave};
    req.sampling.seed = seed;
    return req;
  }

  static train::ExperimentConfig* cfg_;
  static train::Corpus* corpus_;
  static codec::Codec* codec_;
  static codec::Codebooks* cb_;
  static train::TtsModel* model_;
};

train::ExperimentConfig* PipelineFixture::cfg_ = nullptr;
train::Corpus* PipelineFixture::corpus_ = nullptr;
codec::Codec* PipelineFixture::codec_ = nullptr;
codec::Codebooks* PipelineFixture::cb_ = nullptr;
train::TtsModel* PipelineFixture::model_ = nullptr;

TEST_F(PipelineFixture, SynthesisHasEightLayersAndMatchingLength) {
  const auto r = synthesize_zero_shot(request(), *model_, *codec_, *cb_);
  ASSERT_GT(r.codes.frames, 0u);
  EXPECT_LE(r.codes.frames, 40u);
  for (const auto& layer : r.codes.layers) {
    ASSERT_EQ(layer.size(), r.codes.frames);
    for (int id : layer) {
      EXPECT_GE(id, 0);
      EXPECT_LT(id, static_cast<int>(cb_->codebook_size));
    }
  }
  EXPECT_EQ(r.wave.size(), r.codes.frames * cfg_->codec.frame_hop);
  EXPECT_GT(r.prompt_frames, 0u);
  EXPECT_GT(r.style_frames, 0u);
}

TEST_F(PipelineFixture, DeterministicForFixedSeed) {
  const auto a = synthesize_zero_shot(request(5), *model_, *codec_, *cb_);
  const auto b = synthesize_zero_shot(request(5), *model_, *codec_, *cb_);
  EXPECT_EQ(a.codes.layers, b.codes.layers);
  EXPECT_EQ(a.wave.samples, b.wave.samples);
}

TEST_F(PipelineFixture, AblationsRun) {
  auto req = request();
  req.no_style = true;
  req.style_utterances.clear();
  const auto a = synthesize_zero_shot(req, *model_, *codec_, *cb_);
  EXPECT_EQ(a.style_frames, 0u);
  req = request();
  req.no_timbre_prefix = true;
  const auto b = synthesize_zero_shot(req, *model_, *codec_, *cb_);
  EXPECT_EQ(b.prompt_frames, 0u);
}

TEST_F(PipelineFixture, StyleEqualsTimbreCopiesTheTimbreUtterance) {
  const auto req = style_equals_timbre(request());
  ASSERT_EQ(req.style_utterances.size(), 1u);
  EXPECT_EQ(req.style_utterances[0].samples, req.timbre_utterance.samples);
}

TEST_F(PipelineFixture, InputErrors) {
  auto req = request();
  req.target_text = text::Transcript("");
  EXPECT_THROW(synthesize_zero_shot(req, *model_, *codec_, *cb_), EmptyInputError);
  req = request();
  req.style_utterances.clear();
  EXPECT_THROW(synthesize_zero_shot(req, *model_, *codec_, *cb_), EmptyInputError);
}

TEST_F(PipelineFixture, ImmediateEosRaisesWithDiagnostics) {
  train::TtsModel rigged(cfg_->model);
  auto& store = rigged.parameters();
  store.at("decoder.ar_head.weight").value.fill(0.0);
  auto& bias = store.at("decoder.ar_head.bias").value;
  bias.fill(0.0);
  bias[cb_->codebook_size] = 1e3;
  try {
    synthesize_zero_shot(request(), rigged, *codec_, *cb_);
    FAIL() << "expected SynthesisError";
  } catch (const SynthesisError& e) {
    EXPECT_NE(e.diagnostics().find("prefix_frames="), std::string::npos);
    EXPECT_NE(e.diagnostics().find("seed=1"), std::string::npos);
  }
}

TEST_F(PipelineFixture, TrialPlanUsesHeldOutSpeakersOnly) {
  const auto specs = plan_trials(*corpus_, 12, 3, 9);
  ASSERT_EQ(specs.size(), 12u);
  std::set<int> targets;
  for (const auto& s : specs) {
    EXPECT_FALSE(corpus_->is_train_speaker(s.target_speaker));
    EXPECT_FALSE(corpus_->is_train_speaker(s.distractor_speaker));
    EXPECT_NE(s.target_speaker, s.distractor_speaker);
    EXPECT_EQ(corpus_->utterances[s.target_utterance].speaker_id, s.target_speaker);
    EXPECT_EQ(corpus_->utterances[s.timbre_utterance].speaker_id, s.target_speaker);
    EXPECT_NE(s.target_utterance, s.timbre_utterance);
    ASSERT_EQ(s.style_utterances.size(), 3u);
    std::set<std::size_t> style(s.style_utterances.begin(), s.style_utterances.end());
    EXPECT_EQ(style.size(), 3u);
    EXPECT_FALSE(style.count(s.target_utterance));
    EXPECT_FALSE(style.count(s.timbre_utterance));
    for (auto i : s.style_utterances) EXPECT_EQ(corpus_->utterances[i].speaker_id, s.target_speaker);
    targets.insert(s.target_speaker);
  }
  EXPECT_EQ(targets.size(), 2u);
}

TEST_F(PipelineFixture, SingleStyleSentenceIsTheTimbreUtterance) {
  for (const auto& s : plan_trials(*corpus_, 6, 1, 9)) {
    ASSERT_EQ(s.style_utterances.size(), 1u);
    EXPECT_EQ(s.style_utterances[0], s.timbre_utterance);
  }
}

TEST_F(PipelineFixture, PlansAreDeterministicAndShareTargetsAcrossCounts) {
  const auto a = plan_trials(*corpus_, 8, 2, 4);
  const auto b = plan_trials(*corpus_, 8, 5, 4);
  const auto c = plan_trials(*corpus_, 8, 2, 4);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].target_utterance, b[k].target_utterance);
    EXPECT_EQ(a[k].timbre_utterance, b[k].timbre_utterance);
    EXPECT_EQ(a[k].seed, b[k].seed);
    EXPECT_EQ(a[k].style_utterances, c[k].style_utterances);
  }
  EXPECT_THROW(plan_trials(*corpus_, 4, 6, 4), ContractError);
  EXPECT_THROW(plan_trials(*corpus_, 4, 0, 4), ContractError);
}

TEST_F(PipelineFixture, EvaluateAndCsv) {
  const auto specs = plan_trials(*corpus_, 3, 2, 11);
  const auto report = evaluate(specs, *corpus_, *model_, *codec_, *cb_, {});
  ASSERT_EQ(report.trials.size(), 3u);
  EXPECT_GE(report.target_win_rate, 0.0);
  EXPECT_LE(report.target_win_rate, 1.0);
  for (const auto& t : report.trials) {
    if (t.failed) continue;
    EXPECT_GE(t.secs_target, 0.0);
    EXPECT_LE(t.secs_target, 1.0);
    EXPECT_GE(t.mcd, 0.0);
  }
  const auto path = (std::filesystem::temp_directory_path() / "msp_eval_test.csv").string();
  report.write_csv(path);
  std::ifstream is(path);
  std::string header;
  std::getline(is, header);
  EXPECT_EQ(header.rfind("trial,target_speaker,distractor_speaker", 0), 0u);
  std::size_t rows = 0;
  for (std::string line; std::getline(is, line);) ++rows;
  EXPECT_EQ(rows, 3u);
  std::filesystem::remove(path);
}

TEST_F(PipelineFixture, SweepCsvColumns) {
  const auto sweep = prompt_length_sweep(*corpus_, *model_, *codec_, *cb_, {1, 2}, 2, 3);
  ASSERT_EQ(sweep.rows.size(), 2u);
  EXPECT_EQ(sweep.rows[0].n_sentences, 1u);
  EXPECT_EQ(sweep.rows[1].n_trials, 2u);
  const auto path = (std::filesystem::temp_directory_path() / "msp_sweep_test.csv").string();
  sweep.write_csv(path);
  std::ifstream is(path);
  std::string header;
  std::getline(is, header);
  EXPECT_EQ(header, "n_sentences,mean_secs,mean_mcd,n_trials");
  std::filesystem::remove(path);
}
