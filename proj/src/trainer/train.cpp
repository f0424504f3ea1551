#include "msp/trainer/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <spdlog/spdlog.h>

#include "msp/common/errors.hpp"

namespace msp::train {
namespace {

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
std::uint64_t fnv1a(std::uint64_t h, const T& v) {
  return fnv1a(h, &v, sizeof(T));
}

constexpr std::uint64_t kStyleStream = 0x57;
constexpr std::uint64_t kNarStream = 0x4e;

}  // namespace

std::vector<std::size_t> EncodedCorpus::of_speaker(int speaker_id) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].speaker_id == speaker_id) out.push_back(i);
  }
  return out;
}

std::uint64_t codec_fingerprint(const codec::Codec& codec, const codec::Codebooks& cb) {
  const auto& c = codec.config();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = fnv1a(h, c.sample_rate);
  h = fnv1a(h, c.frame_hop);
  h = fnv1a(h, c.latent_dim);
  h = fnv1a(h, c.magnitude_floor);
  h = fnv1a(h, cb.codebook_size);
  h = fnv1a(h, cb.dim);
  for (const auto& stage : cb.stages) h = fnv1a(h, stage.data(), stage.size() * sizeof(double));
  return h;
}

EncodedCorpus encode_corpus(const Corpus& corpus, const codec::Codec& codec, const codec::Codebooks& cb,
                            bool train_speakers_only) {
  EncodedCorpus out;
  out.codec_fingerprint = codec_fingerprint(codec, cb);
  for (const auto& u : corpus.utterances) {
    if (train_speakers_only && !corpus.is_train_speaker(u.speaker_id)) continue;
    TrainSample s;
    s.speaker_id = u.speaker_id;
    s.utterance_index = u.index;
    s.transcript = u.transcript;
    s.phonemes = text::g2p(text::Transcript(u.transcript));
    s.latents = codec.analyze(u.wave);
    s.codes = codec::rvq_encode(s.latents, cb);
    out.samples.push_back(std::move(s));
  }
  return out;
}

bool refresh_encoding(EncodedCorpus& cache, const Corpus& corpus, const codec::Codec& codec,
                      const codec::Codebooks& cb, bool train_speakers_only) {
  if (cache.codec_fingerprint == codec_fingerprint(codec, cb) && !cache.samples.empty()) return false;
  cache = encode_corpus(corpus, codec, cb, train_speakers_only);
  return true;
}

codec::Codebooks fit_codebooks(const Corpus& corpus, const codec::Codec& codec, const ExperimentConfig& cfg) {
  std::vector<codec::LatentFrames> latents;
  for (const auto& u : corpus.utterances) {
    if (corpus.is_train_speaker(u.speaker_id)) latents.push_back(codec.analyze(u.wave));
  }
  return codec::train_codebooks(latents, cfg.codec.codebook_size, cfg.codebook_seed, cfg.codec.kmeans_iterations,
                                cfg.codec.kmeans_max_frames);
}

StylePrompt sample_style_prompt(std::span<const codec::LatentFrames* const> pool, std::optional<std::size_t> exclude,
                                Rng& rng, std::size_t min_count, std::size_t max_count) {
  if (min_count == 0 || min_count > max_count) {
    throw ContractError("sample_style_prompt: invalid count range");
  }
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (!exclude || i != *exclude) candidates.push_back(i);
  }
  if (candidates.empty()) {
    throw EmptyInputError("sample_style_prompt: no utterance available besides the target");
  }
  const auto count = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(min_count), static_cast<std::int64_t>(max_count)));
  StylePrompt out;
  if (candidates.size() >= count) {
    // Partial Fisher-Yates: the first `count` entries are a uniform draw in order.
    for (std::size_t i = 0; i < count; ++i) {
      const auto j = static_cast<std::size_t>(
          rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(candidates.size()) - 1));
      std::swap(candidates[i], candidates[j]);
      out.chosen.push_back(candidates[i]);
    }
  } else {
    spdlog::warn("sample_style_prompt: only {} utterances for {} draws, sampling with replacement",
                 candidates.size(), count);
    out.with_replacement = true;
    for (std::size_t i = 0; i < count; ++i) {
      out.chosen.push_back(
          candidates[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(candidates.size()) - 1))]);
    }
  }
  std::vector<codec::LatentFrames> parts;
  for (auto i : out.chosen) parts.push_back(*pool[i]);
  out.latents = codec::concatenate(parts);
  return out;
}

NarDraw sample_nar_stage(std::size_t frames, Rng& rng) {
  if (frames < 4) {
    throw ContractError("sample_nar_stage: need at least 4 frames, got " + std::to_string(frames));
  }
  NarDraw d;
  d.stage = static_cast<std::size_t>(rng.uniform_int(2, static_cast<std::int64_t>(codec::kStages)));
  d.prefix_len = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(frames / 2)));
  return d;
}

SampleLosses sample_losses(const TtsModel& model, const TrainSample& sample, const codec::LatentFrames& style,
                           const NarDraw& draw) {
  const auto& codes = sample.codes;
  text::TextPrompt prompt{sample.phonemes, 0};
  const auto cond = model.encoder().encode(prompt, &style);

  std::vector<int> ar_tokens = codes.layers[0];
  ar_tokens.push_back(model.decoder().config().eos());
  const nn::Var ar_loss = nn::cross_entropy(model.decoder().ar_forward(cond.rows, ar_tokens), ar_tokens);

  const std::size_t p = draw.prefix_len;
  const auto prefix = codes.slice(0, p);
  const auto target = codes.slice(p, codes.frames);
  const std::vector<std::vector<int>> lower(target.layers.begin(),
                                            target.layers.begin() + static_cast<std::ptrdiff_t>(draw.stage - 1));
  const nn::Var logits = model.decoder().nar_forward(cond.rows, prefix, lower, draw.stage);
  const nn::Var nar_loss = nn::cross_entropy(logits, target.layers[draw.stage - 1]);
  return {ar_loss, nar_loss};
}

Rng step_rng(std::uint64_t seed, std::uint64_t step, std::size_t sample_id) {
  return Rng(mix_seed(mix_seed(seed, step), sample_id));
}

std::vector<std::size_t> batch_for_step(std::size_t corpus_size, std::size_t batch_size, std::uint64_t seed,
                                        std::uint64_t step) {
  if (corpus_size == 0) throw EmptyInputError("batch_for_step: empty corpus");
  if (step == 0) throw ContractError("batch_for_step: steps are 1-based");
  std::vector<std::size_t> batch;
  std::uint64_t cached_epoch = UINT64_MAX;
  std::vector<std::size_t> perm(corpus_size);
  for (std::size_t j = 0; j < batch_size; ++j) {
    const std::uint64_t g = (step - 1) * batch_size + j;
    const std::uint64_t epoch = g / corpus_size;
    if (epoch != cached_epoch) {
      std::iota(perm.begin(), perm.end(), 0);
      Rng rng(mix_seed(seed ^ 0xE90C4ULL, epoch));
      rng.shuffle(perm);
      cached_epoch = epoch;
    }
    batch.push_back(perm[g % corpus_size]);
  }
  return batch;
}

SampleDraw draw_for_step(const EncodedCorpus& data, std::size_t id, const TrainConfig& cfg, std::uint64_t step) {
  const auto& sample = data.samples.at(id);
  // Style pool: the speaker's other training utterances.
  const auto same = data.of_speaker(sample.speaker_id);
  std::vector<const codec::LatentFrames*> pool;
  std::optional<std::size_t> exclude;
  for (std::size_t k = 0; k < same.size(); ++k) {
    if (same[k] == id) exclude = k;
    pool.push_back(&data.samples[same[k]].latents);
  }
  Rng rng = step_rng(cfg.seed, step, id);
  Rng style_rng(mix_seed(rng.next_u64(), kStyleStream));
  Rng nar_rng(mix_seed(rng.next_u64(), kNarStream));
  SampleDraw out;
  out.style = sample_style_prompt(pool, exclude, style_rng, cfg.min_style, cfg.max_style);
  for (auto& c : out.style.chosen) c = same[c];
  out.nar = sample_nar_stage(sample.codes.frames, nar_rng);
  return out;
}

StepLosses train_step(const EncodedCorpus& data, std::span<const std::size_t> batch, TtsModel& model,
                      nn::AdamState& opt, double lr, const TrainConfig& cfg, std::uint64_t step) {
  if (batch.empty()) throw EmptyInputError("train_step: empty batch");
  auto& store = model.parameters();
  if (opt.first_moment.size() != store.size()) opt.init(store);
  store.zero_grad();
  StepLosses out;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t id : batch) {
    const auto& sample = data.samples.at(id);
    const auto draw = draw_for_step(data, id, cfg, step);
    const auto losses = sample_losses(model, sample, draw.style.latents, draw.nar);
    const double ar = losses.ar->value()[0];
    const double nar = losses.nar->value()[0];
    if (!std::isfinite(ar) || !std::isfinite(nar)) {
      store.zero_grad();
      std::string ids;
      for (auto b : batch) ids += (ids.empty() ? "" : ",") + std::to_string(b);
      throw NonFiniteError("train_step " + std::to_string(step) + ": non-finite loss in batch [" + ids + "]");
    }
    const nn::Var total =
        nn::add(nn::scale(losses.ar, cfg.weights.ar * inv), nn::scale(losses.nar, cfg.weights.nar * inv));
    nn::backward(total);
    out.loss_ar += ar * inv;
    out.loss_nar += nar * inv;
  }
  out.loss_total = cfg.weights.ar * out.loss_ar + cfg.weights.nar * out.loss_nar;
  if (cfg.grad_clip > 0.0) nn::clip_grad_norm(store, cfg.grad_clip);
  nn::adam_step(store, opt, lr);
  return out;
}

TrainResult train(const ExperimentConfig& cfg, const EncodedCorpus& data, TtsModel& model,
                  const TrainOptions& options) {
  namespace fs = std::filesystem;
  cfg.train.validate();
  if (data.samples.empty()) throw EmptyInputError("train: no training samples");
  TrainResult result;
  std::uint64_t start = 0;
  if (!options.resume_from.empty()) {
    auto ckpt = load_checkpoint(options.resume_from, model);
    start = ckpt.step;
    result.adam = std::move(ckpt.adam);
    spdlog::info("resuming from step {}", start);
  }
  if (result.adam.first_moment.size() != model.parameters().size()) result.adam.init(model.parameters());
  const std::uint64_t last = options.stop_after.value_or(cfg.train.steps);
  const nn::WarmupInverseSqrt schedule{cfg.train.peak_lr, cfg.train.warmup};
  const std::string config_text = to_ini(cfg);

  std::ofstream metrics;
  fs::path dir;
  if (!options.out_dir.empty()) {
    dir = options.out_dir;
    fs::create_directories(dir);
    const auto path = dir / "metrics.csv";
    const bool fresh = start == 0 || !fs::exists(path);
    metrics.open(path, fresh ? std::ios::trunc : std::ios::app);
    if (!metrics) throw IoError("train: cannot open " + path.string());
    if (fresh) metrics << "step,loss_ar,loss_nar,lr\n";
    metrics.precision(10);
  }
  auto checkpoint = [&](std::uint64_t step) {
    if (dir.empty()) return;
    Checkpoint ck{config_text, step, result.adam};
    save_checkpoint((dir / ("step_" + std::to_string(step) + ".msve")).string(), model, ck);
    save_checkpoint((dir / "latest.msve").string(), model, ck);
  };

  for (std::uint64_t step = start + 1; step <= last; ++step) {
    const auto batch = batch_for_step(data.samples.size(), cfg.train.batch_size, cfg.train.seed, step);
    const double lr = schedule.at(step);
    const auto losses = train_step(data, batch, model, result.adam, lr, cfg.train, step);
    const StepRecord rec{step, losses.loss_ar, losses.loss_nar, lr};
    result.records.push_back(rec);
    result.last_step = step;
    if (metrics.is_open()) {
      metrics << rec.step << ',' << rec.loss_ar << ',' << rec.loss_nar << ',' << rec.lr << '\n';
      metrics.flush();
    }
    if (options.on_step) options.on_step(rec);
    if (cfg.train.checkpoint_every > 0 && step % cfg.train.checkpoint_every == 0) checkpoint(step);
  }
  if (result.last_step > 0 && (cfg.train.checkpoint_every == 0 || result.last_step % cfg.train.checkpoint_every != 0)) {
    checkpoint(result.last_step);
  }
  return result;
}

}  // namespace msp::train
