#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "msp/common/errors.hpp"
#include "msp/pipeline/metrics.hpp"
#include "msp/trainer/train.hpp"

using namespace msp;
using namespace msp::train;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.corpus.n_speakers = 3;
  cfg.corpus.train_speakers = 2;
  cfg.corpus.utterances_per_speaker = 8;
  cfg.corpus.max_words = 3;
  cfg.codec.codebook_size = 16;
  cfg.model.encoder.model_dim = 32;
  cfg.model.encoder.heads = 2;
  cfg.model.encoder.ffn_dim = 64;
  cfg.model.encoder.phoneme_blocks = 1;
  cfg.model.decoder.ar_blocks = 1;
  cfg.model.decoder.nar_blocks = 1;
  cfg.train.batch_size = 2;
  cfg.train.warmup = 10;
  cfg.train.checkpoint_every = 0;
  cfg.finalize();
  return cfg;
}

struct TinySetup {
  ExperimentConfig cfg = tiny_config();
  Corpus corpus = synth_corpus(cfg.corpus);
  codec::Codec codec{cfg.codec};
  codec::Codebooks cb = fit_codebooks(corpus, codec, cfg);
  EncodedCorpus data = encode_corpus(corpus, codec, cb, true);
};

const TinySetup& tiny() {
  static const TinySetup s;
  return s;
}

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("msp_trainer_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<double> values_of(const nn::Tensor& t) { return {t.values().begin(), t.values().end()}; }

bool same_parameters(const TtsModel& a, const TtsModel& b) {
  const auto& pa = a.parameters();
  const auto& pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (values_of(pa[i].value) != values_of(pb[i].value)) return false;
  }
  return true;
}

bool is_nar_parameter(const std::string& name) {
  return name.rfind("decoder.nar_", 0) == 0 || name.rfind("decoder.stage_table", 0) == 0;
}

}  // namespace

TEST(Corpus, DeterministicFromSeed) {
  const auto& a = tiny().corpus;
  const auto b = synth_corpus(tiny().cfg.corpus);
  ASSERT_EQ(a.utterances.size(), b.utterances.size());
  for (std::size_t i = 0; i < a.utterances.size(); ++i) {
    EXPECT_EQ(a.utterances[i].transcript, b.utterances[i].transcript);
    EXPECT_EQ(a.utterances[i].wave.samples, b.utterances[i].wave.samples);
  }
  auto other_cfg = tiny().cfg.corpus;
  other_cfg.seed += 1;
  const auto c = synth_corpus(other_cfg);
  EXPECT_NE(a.utterances[0].wave.samples, c.utterances[0].wave.samples);
}

TEST(Corpus, SpeakerDrawsAreDeterministicAndInRange) {
  for (int id = 0; id < 50; ++id) {
    const auto s = SynthSpeaker::draw(99, id);
    const auto t = SynthSpeaker::draw(99, id);
    EXPECT_EQ(s.f0_base, t.f0_base);
    EXPECT_EQ(s.rate, t.rate);
    EXPECT_GE(s.f0_base, 90.0);
    EXPECT_LE(s.f0_base, 240.0);
    EXPECT_GE(s.tilt_db_per_octave, -12.0);
    EXPECT_LE(s.tilt_db_per_octave, -3.0);
    EXPECT_GE(s.rate, 0.75);
    EXPECT_LE(s.rate, 1.35);
    EXPECT_GE(s.pitch_slope, -4.0);
    EXPECT_LE(s.pitch_slope, 4.0);
    EXPECT_GE(s.vowel_duration_bias, 0.8);
    EXPECT_LE(s.consonant_duration_bias, 1.25);
  }
}

TEST(Corpus, SaveLoadRoundTrip) {
  const auto dir = scratch_dir("corpus");
  save_corpus(tiny().corpus, dir.string());
  const auto back = load_corpus(dir.string());
  ASSERT_EQ(back.utterances.size(), tiny().corpus.utterances.size());
  EXPECT_EQ(back.config.train_speakers, tiny().corpus.config.train_speakers);
  for (std::size_t i = 0; i < back.utterances.size(); ++i) {
    EXPECT_EQ(back.utterances[i].transcript, tiny().corpus.utterances[i].transcript);
    ASSERT_EQ(back.utterances[i].wave.size(), tiny().corpus.utterances[i].wave.size());
  }
  fs::remove_all(dir);
}

TEST(Corpus, DurationFallsWithSpeakingRate) {
  auto s = SynthSpeaker::draw(5, 0);
  std::vector<std::size_t> lengths;
  for (double rate : {0.8, 1.0, 1.3}) {
    s.rate = rate;
    Rng rng(11);
    lengths.push_back(render_utterance(s, "the quick cat", rng).size());
  }
  EXPECT_GT(lengths[0], lengths[1]);
  EXPECT_GT(lengths[1], lengths[2]);
}

TEST(Corpus, SpeakersSeparateUnderOracleEmbedding) {
  CorpusConfig cfg;
  cfg.utterances_per_speaker = 12;
  const auto corpus = synth_corpus(cfg);
  std::map<int, std::vector<std::vector<double>>> emb;
  for (const auto& u : corpus.utterances) emb[u.speaker_id].push_back(pipeline::speaker_embed(u.wave));
  auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a[i] * b[i];
    return d;
  };
  // Each anchor is compared with a same-speaker partner and the matching
  // utterance of every other speaker.
  std::size_t wins = 0;
  std::size_t total = 0;
  for (const auto& [a, list] : emb) {
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::size_t j = (i + 1) % list.size();
      for (const auto& [b, other] : emb) {
        if (a == b) continue;
        wins += cosine(list[i], list[j]) > cosine(list[i], other[j]) ? 1 : 0;
        ++total;
      }
    }
  }
  EXPECT_GE(static_cast<double>(wins) / static_cast<double>(total), 0.9) << wins << "/" << total;
}

TEST(StylePrompt, CountsAreUniformOnFiveToTen) {
  std::vector<codec::LatentFrames> frames(20, codec::LatentFrames(1, 2, 64));
  std::vector<const codec::LatentFrames*> pool;
  for (const auto& f : frames) pool.push_back(&f);
  Rng rng(21);
  std::map<std::size_t, int> counts;
  const int n = 10000;
  for (int k = 0; k < n; ++k) counts[sample_style_prompt(pool, 0, rng).chosen.size()]++;
  ASSERT_EQ(counts.size(), 6u);
  EXPECT_EQ(counts.begin()->first, 5u);
  EXPECT_EQ(counts.rbegin()->first, 10u);
  double chi2 = 0.0;
  const double expected = n / 6.0;
  for (auto [c, obs] : counts) chi2 += (obs - expected) * (obs - expected) / expected;
  // 99th percentile of chi-square with 5 degrees of freedom.
  EXPECT_LT(chi2, 15.086);
}

TEST(StylePrompt, ExcludesTargetAndConcatenatesInDrawOrder) {
  std::vector<codec::LatentFrames> frames;
  for (std::size_t i = 0; i < 12; ++i) {
    codec::LatentFrames f(i + 1, 2, 64);
    for (auto& v : f.data) v = static_cast<double>(i);
    frames.push_back(f);
  }
  std::vector<const codec::LatentFrames*> pool;
  for (const auto& f : frames) pool.push_back(&f);
  Rng rng(22);
  for (int k = 0; k < 500; ++k) {
    const auto p = sample_style_prompt(pool, 3, rng);
    EXPECT_FALSE(p.with_replacement);
    std::set<std::size_t> distinct(p.chosen.begin(), p.chosen.end());
    EXPECT_EQ(distinct.size(), p.chosen.size());
    EXPECT_FALSE(distinct.count(3));
    std::size_t total = 0;
    std::size_t row = 0;
    for (auto c : p.chosen) {
      total += frames[c].frames;
      for (std::size_t r = 0; r < frames[c].frames; ++r, ++row) EXPECT_EQ(p.latents.row(row)[0], double(c));
    }
    EXPECT_EQ(p.latents.frames, total);
  }
}

TEST(StylePrompt, SmallPoolFallsBackToReplacement) {
  std::vector<codec::LatentFrames> frames(3, codec::LatentFrames(2, 2, 64));
  std::vector<const codec::LatentFrames*> pool;
  for (const auto& f : frames) pool.push_back(&f);
  Rng rng(23);
  const auto p = sample_style_prompt(pool, 0, rng);
  EXPECT_TRUE(p.with_replacement);
  for (auto c : p.chosen) EXPECT_NE(c, 0u);
  std::vector<const codec::LatentFrames*> only_target = {pool[0]};
  EXPECT_THROW(sample_style_prompt(only_target, 0, rng), EmptyInputError);
}

TEST(StylePrompt, CompositionChangesAcrossEpochs) {
  const auto& data = tiny().data;
  auto cfg = tiny().cfg.train;
  // Tiny speakers have 7 other utterances, so 5..7 are drawn.
  cfg.max_style = 7;
  const std::size_t id = 3;
  std::vector<std::vector<std::size_t>> per_epoch;
  const std::size_t steps_per_epoch = data.samples.size() / cfg.batch_size;
  for (std::uint64_t step = 1; per_epoch.size() < 3; ++step) {
    const auto batch = batch_for_step(data.samples.size(), cfg.batch_size, cfg.seed, step);
    if (std::find(batch.begin(), batch.end(), id) == batch.end()) continue;
    const auto draw = draw_for_step(data, id, cfg, step);
    EXPECT_GE(draw.style.chosen.size(), 5u);
    EXPECT_LE(draw.style.chosen.size(), 7u);
    for (auto c : draw.style.chosen) {
      EXPECT_NE(c, id);
      EXPECT_EQ(data.samples[c].speaker_id, data.samples[id].speaker_id);
    }
    per_epoch.push_back(draw.style.chosen);
    EXPECT_LE(step, 3 * steps_per_epoch);
  }
  EXPECT_NE(per_epoch[0], per_epoch[1]);
  EXPECT_NE(per_epoch[1], per_epoch[2]);
}

TEST(NarStage, BoundsOverManyDraws) {
  Rng rng(31);
  std::set<std::size_t> stages;
  for (int k = 0; k < 10000; ++k) {
    const std::size_t frames = 4 + static_cast<std::size_t>(k % 37);
    const auto d = sample_nar_stage(frames, rng);
    EXPECT_GE(d.stage, 2u);
    EXPECT_LE(d.stage, 8u);
    EXPECT_GE(d.prefix_len, 1u);
    EXPECT_LE(d.prefix_len, frames / 2);
    stages.insert(d.stage);
  }
  EXPECT_EQ(stages, (std::set<std::size_t>{2, 3, 4, 5, 6, 7, 8}));
  EXPECT_THROW(sample_nar_stage(3, rng), ContractError);
}

TEST(NarStage, PrefixFramesAreOutsideTheLoss) {
  // The stage-3 labels of the prefix frames never enter the loss; the labels
  // after the prefix do.
  const auto& s = tiny();
  TtsModel model(s.cfg.model);
  auto sample = s.data.samples[0];
  const codec::LatentFrames style = s.data.samples[1].latents;
  const NarDraw draw{3, 4};
  nn::NoGradGuard guard;
  const double base = sample_losses(model, sample, style, draw).nar->value()[0];
  auto inside = sample;
  // Prefix layers above the stage are neither inputs nor labels.
  inside.codes.layers[3][1] = (inside.codes.layers[3][1] + 1) % 16;
  EXPECT_DOUBLE_EQ(sample_losses(model, inside, style, draw).nar->value()[0], base);
  auto after = sample;
  after.codes.layers[2][6] = (after.codes.layers[2][6] + 1) % 16;
  EXPECT_NE(sample_losses(model, after, style, draw).nar->value()[0], base);

  // Oracle: mean cross-entropy over the T - p target rows only.
  text::TextPrompt prompt{sample.phonemes, 0};
  const auto cond = model.encoder().encode(prompt, &style);
  const auto target = sample.codes.slice(4, sample.codes.frames);
  const std::vector<std::vector<int>> lower(target.layers.begin(), target.layers.begin() + 2);
  const auto logits = model.decoder().nar_forward(cond.rows, sample.codes.slice(0, 4), lower, 3)->value();
  ASSERT_EQ(logits.rows(), sample.codes.frames - 4);
  double ce = 0.0;
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    double mx = -1e300;
    for (std::size_t k = 0; k < logits.cols(); ++k) mx = std::max(mx, logits(t, k));
    double z = 0.0;
    for (std::size_t k = 0; k < logits.cols(); ++k) z += std::exp(logits(t, k) - mx);
    ce += mx + std::log(z) - logits(t, static_cast<std::size_t>(target.layers[2][t]));
  }
  EXPECT_NEAR(base, ce / static_cast<double>(logits.rows()), 1e-12);
}

TEST(TrainStep, InitialArLossNearUniform) {
  const auto& s = tiny();
  auto cfg = tiny_config();
  cfg.model.decoder.codebook_size = 64;
  cfg.codec.codebook_size = 64;
  cfg.finalize();
  TtsModel model(cfg.model);
  double total = 0.0;
  nn::NoGradGuard guard;
  for (std::size_t i = 0; i < 6; ++i) {
    total += sample_losses(model, s.data.samples[i], s.data.samples[(i + 1) % 6].latents, {2, 1}).ar->value()[0];
  }
  EXPECT_NEAR(total / 6.0, std::log(65.0), 0.1 * std::log(65.0));
}

TEST(TrainStep, ZeroNarWeightLeavesNarParametersUntouched) {
  const auto& s = tiny();
  TtsModel model(s.cfg.model);
  TtsModel before(s.cfg.model);
  auto cfg = s.cfg.train;
  cfg.weights = {1.0, 0.0};
  nn::AdamState opt;
  const std::vector<std::size_t> batch = {0, 5};
  train_step(s.data, batch, model, opt, 1e-2, cfg, 1);
  std::size_t nar_params = 0;
  std::size_t moved = 0;
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    const auto& p = model.parameters()[i];
    const bool changed = values_of(p.value) != values_of(before.parameters()[i].value);
    if (is_nar_parameter(p.name)) {
      ++nar_params;
      EXPECT_FALSE(changed) << p.name;
    } else if (changed) {
      ++moved;
    }
  }
  EXPECT_GT(nar_params, 0u);
  EXPECT_GT(moved, 0u);
}

TEST(TrainStep, LossIsLinearInWeights) {
  const auto& s = tiny();
  const std::vector<std::size_t> batch = {1, 9};
  auto run = [&](double w_ar) {
    TtsModel model(s.cfg.model);
    nn::AdamState opt;
    auto cfg = s.cfg.train;
    cfg.weights = {w_ar, 1.0};
    return train_step(s.data, batch, model, opt, 1e-3, cfg, 4);
  };
  const auto one = run(1.0);
  const auto two = run(2.0);
  EXPECT_DOUBLE_EQ(one.loss_ar, two.loss_ar);
  EXPECT_DOUBLE_EQ(one.loss_nar, two.loss_nar);
  EXPECT_DOUBLE_EQ(one.loss_total, one.loss_ar + one.loss_nar);
  EXPECT_DOUBLE_EQ(two.loss_total - two.loss_nar, 2.0 * (one.loss_total - one.loss_nar));
}

TEST(TrainStep, GradientsReachEncoderArAndNarTogether) {
  const auto& s = tiny();
  TtsModel model(s.cfg.model);
  const auto draw = draw_for_step(s.data, 2, s.cfg.train, 1);
  const auto losses = sample_losses(model, s.data.samples[2], draw.style.latents, draw.nar);
  model.parameters().zero_grad();
  nn::backward(nn::add(losses.ar, losses.nar));
  std::map<std::string, double> norm;
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    const auto& p = model.parameters()[i];
    std::string group = p.name.rfind("encoder.", 0) == 0 ? "encoder"
                        : is_nar_parameter(p.name)        ? "nar"
                        : p.name.rfind("decoder.ar_", 0) == 0 ? "ar"
                                                              : "shared";
    for (double g : values_of(p.grad)) norm[group] += g * g;
  }
  EXPECT_GT(norm["encoder"], 0.0);
  EXPECT_GT(norm["ar"], 0.0);
  EXPECT_GT(norm["nar"], 0.0);
}

TEST(TrainStep, NonFiniteLossNamesTheBatch) {
  const auto& s = tiny();
  TtsModel model(s.cfg.model);
  model.parameters().at("decoder.ar_head.bias").value[0] = std::nan("");
  const auto snapshot = values_of(model.parameters().at("decoder.ar_head.weight").value);
  nn::AdamState opt;
  const std::vector<std::size_t> batch = {4, 7};
  try {
    train_step(s.data, batch, model, opt, 1e-3, s.cfg.train, 1);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("[4,7]"), std::string::npos) << e.what();
  }
  EXPECT_EQ(values_of(model.parameters().at("decoder.ar_head.weight").value), snapshot);
}

TEST(Batching, EpochsArePermutations) {
  const std::size_t n = 10;
  const std::size_t b = 3;
  std::vector<std::size_t> seen;
  for (std::uint64_t step = 1; step <= 10; ++step) {
    const auto batch = batch_for_step(n, b, 5, step);
    ASSERT_EQ(batch.size(), b);
    seen.insert(seen.end(), batch.begin(), batch.end());
  }
  for (std::size_t epoch = 0; epoch < 3; ++epoch) {
    std::set<std::size_t> ids(seen.begin() + epoch * n, seen.begin() + (epoch + 1) * n);
    EXPECT_EQ(ids.size(), n);
  }
  EXPECT_EQ(batch_for_step(n, b, 5, 7), batch_for_step(n, b, 5, 7));
  EXPECT_THROW(batch_for_step(n, b, 5, 0), ContractError);
}

TEST(Train, LossTrendsDownAndMetricsLogHasOneRowPerStep) {
  const auto& s = tiny();
  auto cfg = s.cfg;
  cfg.train.steps = 60;
  cfg.train.peak_lr = 3e-3;
  TtsModel model(cfg.model);
  const auto dir = scratch_dir("trend");
  TrainOptions opt;
  opt.out_dir = dir.string();
  const auto result = train::train(cfg, s.data, model, opt);
  ASSERT_EQ(result.records.size(), 60u);
  double first = 0.0;
  double last = 0.0;
  for (std::size_t i = 0; i < 15; ++i) {
    first += result.records[i].loss_ar + result.records[i].loss_nar;
    last += result.records[45 + i].loss_ar + result.records[45 + i].loss_nar;
  }
  for (const auto& r : result.records) {
    EXPECT_TRUE(std::isfinite(r.loss_ar));
    EXPECT_TRUE(std::isfinite(r.loss_nar));
  }
  EXPECT_LT(last, first);

  std::ifstream is(dir / "metrics.csv");
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "step,loss_ar,loss_nar,lr");
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    std::stringstream ss(line);
    std::string step;
    std::getline(ss, step, ',');
    EXPECT_EQ(std::stoul(step), rows);
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 3);
  }
  EXPECT_EQ(rows, 60u);
  EXPECT_TRUE(fs::exists(dir / "latest.msve"));
  fs::remove_all(dir);
}

TEST(Train, ResumeIsStepExact) {
  const auto& s = tiny();
  auto cfg = s.cfg;
  cfg.train.steps = 8;
  cfg.train.checkpoint_every = 4;

  TtsModel straight(cfg.model);
  const auto full = train::train(cfg, s.data, straight, {});

  const auto dir = scratch_dir("resume");
  TtsModel first(cfg.model);
  TrainOptions a;
  a.out_dir = dir.string();
  a.stop_after = 4;
  train::train(cfg, s.data, first, a);

  TtsModel resumed(cfg.model);
  // Perturb so that only the checkpoint can restore the values.
  resumed.parameters()[0].value[0] += 1.0;
  TrainOptions b;
  b.out_dir = dir.string();
  b.resume_from = (dir / "step_4.msve").string();
  const auto rest = train::train(cfg, s.data, resumed, b);
  ASSERT_EQ(rest.records.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(rest.records[i].step, full.records[4 + i].step);
    EXPECT_EQ(rest.records[i].loss_ar, full.records[4 + i].loss_ar);
    EXPECT_EQ(rest.records[i].loss_nar, full.records[4 + i].loss_nar);
  }
  EXPECT_TRUE(same_parameters(straight, resumed));

  // Appended rows continue the log.
  std::ifstream is(dir / "metrics.csv");
  std::size_t lines = 0;
  for (std::string line; std::getline(is, line);) ++lines;
  EXPECT_EQ(lines, 9u);
  fs::remove_all(dir);
}

TEST(Checkpoint, RoundTripAndErrors) {
  const auto& s = tiny();
  TtsModel model(s.cfg.model);
  nn::AdamState adam;
  adam.init(model.parameters());
  adam.step_count = 12;
  const auto dir = scratch_dir("ckpt");
  const auto path = (dir / "m.msve").string();
  save_checkpoint(path, model, {to_ini(s.cfg), 12, adam});

  TtsModel other(s.cfg.model);
  other.parameters()[0].value[0] += 2.0;
  const auto ck = load_checkpoint(path, other);
  EXPECT_EQ(ck.step, 12u);
  EXPECT_EQ(ck.adam.step_count, 12u);
  EXPECT_TRUE(same_parameters(model, other));
  EXPECT_EQ(read_checkpoint_config(path), to_ini(s.cfg));

  EXPECT_THROW(load_checkpoint((dir / "missing.msve").string(), other), IoError);

  std::string bytes;
  {
    std::ifstream is(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(is), {});
  }
  const auto bad = (dir / "bad.msve").string();
  {
    std::ofstream os(bad, std::ios::binary);
    os << "XXXXX" << bytes.substr(5);
  }
  EXPECT_THROW(load_checkpoint(bad, other), CorruptDataError);
  {
    std::ofstream os(bad, std::ios::binary | std::ios::trunc);
    os << bytes.substr(0, bytes.size() / 2);
  }
  EXPECT_THROW(load_checkpoint(bad, other), CorruptDataError);

  auto wider = s.cfg;
  wider.model.encoder.model_dim = 48;
  wider.finalize();
  TtsModel mismatched(wider.model);
  EXPECT_THROW(load_checkpoint(path, mismatched), Error);
  fs::remove_all(dir);
}

TEST(Config, IniRoundTrip) {
  auto cfg = tiny_config();
  cfg.train.peak_lr = 7.5e-4;
  cfg.train.weights.nar = 0.5;
  cfg.codebook_seed = 42;
  const auto back = parse_config(to_ini(cfg));
  EXPECT_EQ(to_ini(back), to_ini(cfg));
  EXPECT_DOUBLE_EQ(back.train.peak_lr, 7.5e-4);
  EXPECT_DOUBLE_EQ(back.train.weights.nar, 0.5);
  EXPECT_EQ(back.codebook_seed, 42u);
  EXPECT_EQ(back.model.decoder.codebook_size, 16u);
  EXPECT_EQ(back.model.decoder.model_dim, 32u);
}

TEST(Config, RejectsUnknownAndInvalidEntries) {
  EXPECT_THROW(parse_config("[model]\ndim = 64\nwidth = 3\n"), ConfigError);
  EXPECT_THROW(parse_config("[optimizer]\nlr = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("[train]\nsteps = many\n"), ConfigError);
  EXPECT_THROW(parse_config("[train]\nw_ar = 0\nw_nar = 0\n"), ConfigError);
  EXPECT_THROW(parse_config("[model]\ndim = 30\nheads = 4\n"), ConfigError);
  EXPECT_THROW(parse_config("[corpus]\nn_speakers = 1\ntrain_speakers = 1\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/desk.ini"), IoError);
  EXPECT_NO_THROW(parse_config(""));
}

TEST(Config, ShippedPresetsParse) {
  const auto desk = load_config(std::string(MSP_DATA_DIR) + "/configs/desk.ini");
  EXPECT_EQ(desk.model.decoder.codebook_size, desk.codec.codebook_size);
  EXPECT_LE(desk.corpus.train_speakers + 2, desk.corpus.n_speakers);
  const auto full = load_config(std::string(MSP_DATA_DIR) + "/configs/full_scale.ini");
  EXPECT_EQ(full.model.encoder.phoneme_blocks, 6u);
  EXPECT_EQ(full.model.decoder.ar_blocks, 6u);
  EXPECT_EQ(full.model.decoder.nar_blocks, 6u);
  EXPECT_EQ(full.codec.codebook_size, 1024u);
  EXPECT_EQ(full.train.steps, 300000u);
  EXPECT_EQ(full.train.batch_size, 32u);
  EXPECT_EQ(full.codec.sample_rate, 24000);
  EXPECT_EQ(full.corpus.train_speakers, 2306u);
  EXPECT_EQ(full.corpus.n_speakers - full.corpus.train_speakers, 128u);
  EXPECT_EQ(full.model.decoder.model_dim, full.model.encoder.model_dim);
}

TEST(Encoding, RefreshesOnlyWhenCodecChanges) {
  const auto& s = tiny();
  auto cache = s.data;
  EXPECT_EQ(cache.codec_fingerprint, codec_fingerprint(s.codec, s.cb));
  EXPECT_FALSE(refresh_encoding(cache, s.corpus, s.codec, s.cb, true));
  auto cb = s.cb;
  cb.stages[7][cb.dim] += 0.25;
  EXPECT_TRUE(refresh_encoding(cache, s.corpus, s.codec, cb, true));
  EXPECT_EQ(cache.codec_fingerprint, codec_fingerprint(s.codec, cb));
  auto codec_cfg = s.cfg.codec;
  codec_cfg.magnitude_floor *= 2.0;
  const codec::Codec other(codec_cfg);
  EXPECT_NE(codec_fingerprint(other, cb), cache.codec_fingerprint);
  for (const auto& sample : cache.samples) EXPECT_TRUE(s.corpus.is_train_speaker(sample.speaker_id));
}
