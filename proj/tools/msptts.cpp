// Command-line front end: corpus, codec-fit, train, synth, eval, sweep.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "msp/common/errors.hpp"
#include "msp/pipeline/pipeline.hpp"
#include "msp/trainer/train.hpp"

using namespace msp;
namespace fs = std::filesystem;

namespace {

train::ExperimentConfig config_or_default(const std::string& path) {
  if (path.empty()) {
    train::ExperimentConfig cfg;
    cfg.finalize();
    return cfg;
  }
  return train::load_config(path);
}

struct LoadedModel {
  train::ExperimentConfig cfg;
  std::unique_ptr<train::TtsModel> model;
  std::unique_ptr<codec::Codec> codec;
  codec::Codebooks cb;
};

LoadedModel load_model(const std::string& checkpoint, const std::string& codebooks) {
  LoadedModel m;
  m.cfg = train::parse_config(train::read_checkpoint_config(checkpoint));
  m.model = std::make_unique<train::TtsModel>(m.cfg.model);
  train::load_checkpoint(checkpoint, *m.model);
  m.codec = std::make_unique<codec::Codec>(m.cfg.codec);
  m.cb = codec::load_codebooks(codebooks);
  if (m.cb.codebook_size != m.cfg.codec.codebook_size || m.cb.dim != m.cfg.codec.latent_dim) {
    throw ConfigError("codebooks do not match the checkpoint's codec configuration");
  }
  return m;
}

void print_report(const char* label, const pipeline::EvalReport& r) {
  std::printf("%s: SECS %.4f +- %.4f (distractor %.4f), target wins %.1f%%, MCD %.3f +- %.3f dB over %zu trials\n",
              label, r.secs.mean, r.secs.ci95, r.secs_distractor.mean, 100.0 * r.target_win_rate, r.mcd.mean,
              r.mcd.ci95, r.trials.size());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot TTS with style and timbre prompts (desk scale)"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error");

  // corpus
  auto* corpus_cmd = app.add_subcommand("corpus", "Generate the synthetic multi-speaker corpus");
  std::string config_path;
  std::string corpus_dir;
  corpus_cmd->add_option("--config", config_path, "Experiment INI file");
  corpus_cmd->add_option("--out", corpus_dir, "Output directory")->required();

  // codec-fit
  auto* fit_cmd = app.add_subcommand("codec-fit", "Fit RVQ codebooks on the training speakers");
  std::string codebooks_path;
  fit_cmd->add_option("--config", config_path, "Experiment INI file");
  fit_cmd->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  fit_cmd->add_option("--out", codebooks_path, "Codebook file")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Joint AR + NAR training");
  std::string run_dir;
  std::string resume;
  std::size_t stop_after = 0;
  train_cmd->add_option("--config", config_path, "Experiment INI file");
  train_cmd->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  train_cmd->add_option("--codebooks", codebooks_path, "Codebook file")->required();
  train_cmd->add_option("--out", run_dir, "Run directory (metrics.csv, checkpoints)")->required();
  train_cmd->add_option("--resume", resume, "Checkpoint to continue from");
  train_cmd->add_option("--stop-after", stop_after, "Last step to run (default: config steps)");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Zero-shot synthesis from prompts");
  std::string checkpoint;
  std::string text;
  std::vector<std::string> style_wavs;
  std::string timbre_wav;
  std::string timbre_text;
  std::uint64_t seed = 0;
  bool greedy = false;
  bool no_style = false;
  bool no_timbre_prefix = false;
  bool style_equals_timbre = false;
  std::string out_wav;
  std::size_t top_k = 8;
  double temperature = 1.0;
  synth_cmd->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  synth_cmd->add_option("--codebooks", codebooks_path, "Codebook file")->required();
  synth_cmd->add_option("--text", text, "Target text")->required();
  synth_cmd->add_option("--style-wavs", style_wavs, "Style prompt WAVs")->delimiter(',');
  synth_cmd->add_option("--timbre-wav", timbre_wav, "Timbre prompt WAV");
  synth_cmd->add_option("--timbre-text", timbre_text, "Transcript of the timbre prompt");
  synth_cmd->add_option("--seed", seed, "Sampling seed");
  synth_cmd->add_flag("--greedy", greedy, "Argmax decoding instead of top-k sampling");
  synth_cmd->add_option("--top-k", top_k, "Top-k cutoff for sampling");
  synth_cmd->add_option("--temperature", temperature, "Sampling temperature");
  synth_cmd->add_flag("--no-style", no_style, "Bypass the style prompt (text-only encoder)");
  synth_cmd->add_flag("--no-timbre-prefix", no_timbre_prefix, "No timbre prompt in the decoders");
  synth_cmd->add_flag("--style-equals-timbre", style_equals_timbre, "Use the timbre WAV as the only style prompt");
  synth_cmd->add_option("--out", out_wav, "Output WAV (16-bit mono)")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "SECS / MCD evaluation on held-out speakers");
  std::size_t trials = 40;
  std::size_t style_count = 3;
  std::string report_csv;
  eval_cmd->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  eval_cmd->add_option("--codebooks", codebooks_path, "Codebook file")->required();
  eval_cmd->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  eval_cmd->add_option("--trials", trials, "Number of trials");
  eval_cmd->add_option("--style-count", style_count, "Style sentences per trial");
  eval_cmd->add_option("--seed", seed, "Trial-planning seed");
  eval_cmd->add_flag("--greedy", greedy, "Argmax decoding");
  eval_cmd->add_flag("--no-style", no_style, "Text-only encoder ablation");
  eval_cmd->add_flag("--no-timbre-prefix", no_timbre_prefix, "No timbre prompt ablation");
  eval_cmd->add_option("--out", report_csv, "Per-trial CSV");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Style-prompt length sweep");
  std::vector<std::size_t> counts = {1, 5, 10, 20};
  sweep_cmd->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  sweep_cmd->add_option("--codebooks", codebooks_path, "Codebook file")->required();
  sweep_cmd->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  sweep_cmd->add_option("--counts", counts, "Style sentence counts")->delimiter(',');
  sweep_cmd->add_option("--trials", trials, "Trials per count");
  sweep_cmd->add_option("--seed", seed, "Trial-planning seed");
  sweep_cmd->add_flag("--greedy", greedy, "Argmax decoding");
  sweep_cmd->add_option("--out", report_csv, "Sweep CSV")->required();

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*corpus_cmd) {
      const auto cfg = config_or_default(config_path);
      const auto corpus = train::synth_corpus(cfg.corpus);
      train::save_corpus(corpus, corpus_dir);
      std::printf("wrote %zu utterances of %zu speakers to %s\n", corpus.utterances.size(), corpus.speakers.size(),
                  corpus_dir.c_str());
    } else if (*fit_cmd) {
      const auto cfg = config_or_default(config_path);
      const auto corpus = train::load_corpus(corpus_dir);
      const codec::Codec codec(cfg.codec);
      const auto cb = train::fit_codebooks(corpus, codec, cfg);
      codec::save_codebooks(codebooks_path, cb);
      std::printf("wrote %zu-entry codebooks (8 stages, dim %zu) to %s\n", cb.codebook_size, cb.dim,
                  codebooks_path.c_str());
    } else if (*train_cmd) {
      const auto cfg = resume.empty() ? config_or_default(config_path)
                                      : train::parse_config(train::read_checkpoint_config(resume));
      const auto corpus = train::load_corpus(corpus_dir);
      const codec::Codec codec(cfg.codec);
      const auto cb = codec::load_codebooks(codebooks_path);
      const auto data = train::encode_corpus(corpus, codec, cb, true);
      train::TtsModel model(cfg.model);
      spdlog::info("{} training utterances, {} parameters", data.samples.size(),
                   model.parameters().scalar_count());
      train::TrainOptions opt;
      opt.out_dir = run_dir;
      opt.resume_from = resume;
      if (stop_after > 0) opt.stop_after = stop_after;
      opt.on_step = [](const train::StepRecord& r) {
        if (r.step % 50 == 0) {
          spdlog::info("step {} loss_ar {:.4f} loss_nar {:.4f} lr {:.2e}", r.step, r.loss_ar, r.loss_nar, r.lr);
        }
      };
      const auto result = train::train(cfg, data, model, opt);
      std::printf("trained to step %llu; checkpoint %s\n", static_cast<unsigned long long>(result.last_step),
                  (fs::path(run_dir) / "latest.msve").c_str());
    } else if (*synth_cmd) {
      const auto m = load_model(checkpoint, codebooks_path);
      pipeline::ZeroShotRequest req;
      req.target_text = text::Transcript(text);
      req.timbre_transcript = text::Transcript(timbre_text);
      req.no_style = no_style;
      req.no_timbre_prefix = no_timbre_prefix;
      req.sampling.mode = greedy ? decoder::SamplingConfig::Mode::kGreedy : decoder::SamplingConfig::Mode::kTopK;
      req.sampling.top_k = top_k;
      req.sampling.temperature = temperature;
      req.sampling.seed = seed;
      if (!timbre_wav.empty()) req.timbre_utterance = codec::read_wav(timbre_wav);
      if (!no_timbre_prefix && timbre_wav.empty()) {
        throw ConfigError("--timbre-wav is required unless --no-timbre-prefix is given");
      }
      for (const auto& p : style_wavs) req.style_utterances.push_back(codec::read_wav(p));
      if (style_equals_timbre) {
        if (timbre_wav.empty()) throw ConfigError("--style-equals-timbre needs --timbre-wav");
        req = pipeline::style_equals_timbre(std::move(req));
      }
      const auto res = pipeline::synthesize_zero_shot(req, *m.model, *m.codec, m.cb);
      codec::write_wav(out_wav, res.wave);
      std::printf("wrote %.2f s (%zu frames%s) to %s\n", res.wave.duration_seconds(), res.codes.frames,
                  res.hit_eos ? "" : ", frame budget reached", out_wav.c_str());
    } else if (*eval_cmd) {
      const auto m = load_model(checkpoint, codebooks_path);
      const auto corpus = train::load_corpus(corpus_dir);
      pipeline::EvalOptions eo;
      eo.no_style = no_style;
      eo.no_timbre_prefix = no_timbre_prefix;
      if (greedy) eo.sampling.mode = decoder::SamplingConfig::Mode::kGreedy;
      const auto specs = pipeline::plan_trials(corpus, trials, style_count, seed);
      const auto report = pipeline::evaluate(specs, corpus, *m.model, *m.codec, m.cb, eo);
      print_report(no_style ? "no-style" : (no_timbre_prefix ? "no-timbre-prefix" : "full"), report);
      if (!report_csv.empty()) report.write_csv(report_csv);
    } else if (*sweep_cmd) {
      const auto m = load_model(checkpoint, codebooks_path);
      const auto corpus = train::load_corpus(corpus_dir);
      pipeline::EvalOptions eo;
      if (greedy) eo.sampling.mode = decoder::SamplingConfig::Mode::kGreedy;
      const auto sweep = pipeline::prompt_length_sweep(corpus, *m.model, *m.codec, m.cb, counts, trials, seed, eo);
      std::printf("n_sentences  mean_secs  mean_mcd  n_trials\n");
      for (const auto& r : sweep.rows) {
        std::printf("%11zu  %9.4f  %8.3f  %8zu\n", r.n_sentences, r.mean_secs, r.mean_mcd, r.n_trials);
      }
      sweep.write_csv(report_csv);
    }
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
