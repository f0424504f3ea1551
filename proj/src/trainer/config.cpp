#include "msp/trainer/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "msp/common/errors.hpp"
#include "msp/textfront/textfront.hpp"

namespace msp::train {
namespace {

namespace pt = boost::property_tree;

template <typename T>
T parse_value(const std::string& section, const std::string& key, const std::string& raw) {
  std::istringstream is(raw);
  T value{};
  is >> value;
  if (is.fail() || !is.eof()) {
    throw ConfigError("config: [" + section + "] " + key + " = '" + raw + "' is not a valid value");
  }
  return value;
}

using Setter = std::function<void(const std::string&)>;

// One table of key -> setter per section keeps parse and print in sync.
std::map<std::string, std::map<std::string, Setter>> setters(ExperimentConfig& c) {
  auto sz = [](const char* sec, const char* key, std::size_t& dst) {
    return std::pair<std::string, Setter>{key, [=, &dst](const std::string& v) {
                                            dst = parse_value<std::size_t>(sec, key, v);
                                          }};
  };
  auto u64 = [](const char* sec, const char* key, std::uint64_t& dst) {
    return std::pair<std::string, Setter>{key, [=, &dst](const std::string& v) {
                                            dst = parse_value<std::uint64_t>(sec, key, v);
                                          }};
  };
  auto f64 = [](const char* sec, const char* key, double& dst) {
    return std::pair<std::string, Setter>{key, [=, &dst](const std::string& v) {
                                            dst = parse_value<double>(sec, key, v);
                                          }};
  };
  auto i32 = [](const char* sec, const char* key, int& dst) {
    return std::pair<std::string, Setter>{key, [=, &dst](const std::string& v) {
                                            dst = parse_value<int>(sec, key, v);
                                          }};
  };
  return {
      {"model",
       {sz("model", "dim", c.model.encoder.model_dim), sz("model", "heads", c.model.encoder.heads),
        sz("model", "ffn_dim", c.model.encoder.ffn_dim), sz("model", "phoneme_blocks", c.model.encoder.phoneme_blocks),
        sz("model", "encoder_ffn_kernel", c.model.encoder.ffn_kernel),
        sz("model", "acoustic_kernel", c.model.encoder.acoustic_kernel), sz("model", "ar_blocks", c.model.decoder.ar_blocks),
        sz("model", "nar_blocks", c.model.decoder.nar_blocks),
        sz("model", "max_generation_frames", c.model.decoder.max_generation_frames),
        u64("model", "init_seed", c.model.init_seed)}},
      {"codec",
       {i32("codec", "sample_rate", c.codec.sample_rate), sz("codec", "frame_hop", c.codec.frame_hop),
        sz("codec", "latent_dim", c.codec.latent_dim), sz("codec", "codebook_size", c.codec.codebook_size),
        f64("codec", "magnitude_floor", c.codec.magnitude_floor),
        sz("codec", "kmeans_iterations", c.codec.kmeans_iterations),
        sz("codec", "kmeans_max_frames", c.codec.kmeans_max_frames), u64("codec", "codebook_seed", c.codebook_seed)}},
      {"corpus",
       {sz("corpus", "n_speakers", c.corpus.n_speakers),
        sz("corpus", "utterances_per_speaker", c.corpus.utterances_per_speaker),
        sz("corpus", "train_speakers", c.corpus.train_speakers), sz("corpus", "min_words", c.corpus.min_words),
        sz("corpus", "max_words", c.corpus.max_words), u64("corpus", "seed", c.corpus.seed)}},
      {"train",
       {sz("train", "steps", c.train.steps), sz("train", "batch_size", c.train.batch_size),
        f64("train", "peak_lr", c.train.peak_lr), u64("train", "warmup", c.train.warmup),
        u64("train", "seed", c.train.seed), sz("train", "checkpoint_every", c.train.checkpoint_every),
        f64("train", "w_ar", c.train.weights.ar), f64("train", "w_nar", c.train.weights.nar),
        f64("train", "grad_clip", c.train.grad_clip), sz("train", "min_style", c.train.min_style),
        sz("train", "max_style", c.train.max_style)}},
  };
}

}  // namespace

void LossWeights::validate() const {
  if (!(ar >= 0.0) || !(nar >= 0.0) || (ar == 0.0 && nar == 0.0)) {
    throw ConfigError("loss weights must be non-negative and not both zero");
  }
}

void TrainConfig::validate() const {
  weights.validate();
  if (steps == 0 || batch_size == 0) throw ConfigError("train: steps and batch_size must be positive");
  if (!(peak_lr > 0.0)) throw ConfigError("train: peak_lr must be positive");
  if (min_style < 1 || min_style > max_style) throw ConfigError("train: invalid style-prompt count range");
  if (!(grad_clip >= 0.0)) throw ConfigError("train: grad_clip must be >= 0 (0 disables clipping)");
}

void ExperimentConfig::finalize() {
  model.encoder.vocabulary_size = static_cast<std::size_t>(text::RuleTable::builtin().vocabulary_size());
  model.encoder.latent_dim = codec.latent_dim;
  model.decoder.model_dim = model.encoder.model_dim;
  model.decoder.heads = model.encoder.heads;
  model.decoder.ffn_dim = model.encoder.ffn_dim;
  model.decoder.codebook_size = codec.codebook_size;
  codec.validate();
  model.validate();
  corpus.validate();
  train.validate();
}

ExperimentConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ExperimentConfig cfg;
  auto table = setters(cfg);
  for (const auto& [section, entries] : tree) {
    auto sec = table.find(section);
    if (sec == table.end()) throw ConfigError("config: unknown section [" + section + "]");
    for (const auto& [key, node] : entries) {
      auto it = sec->second.find(key);
      if (it == sec->second.end()) throw ConfigError("config: unknown key '" + key + "' in [" + section + "]");
      it->second(node.data());
    }
  }
  cfg.finalize();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string to_ini(const ExperimentConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "[model]\n"
     << "dim = " << c.model.encoder.model_dim << "\nheads = " << c.model.encoder.heads
     << "\nffn_dim = " << c.model.encoder.ffn_dim << "\nphoneme_blocks = " << c.model.encoder.phoneme_blocks
     << "\nencoder_ffn_kernel = " << c.model.encoder.ffn_kernel
     << "\nacoustic_kernel = " << c.model.encoder.acoustic_kernel << "\nar_blocks = " << c.model.decoder.ar_blocks
     << "\nnar_blocks = " << c.model.decoder.nar_blocks
     << "\nmax_generation_frames = " << c.model.decoder.max_generation_frames
     << "\ninit_seed = " << c.model.init_seed << "\n\n";
  os << "[codec]\n"
     << "sample_rate = " << c.codec.sample_rate << "\nframe_hop = " << c.codec.frame_hop
     << "\nlatent_dim = " << c.codec.latent_dim << "\ncodebook_size = " << c.codec.codebook_size
     << "\nmagnitude_floor = " << c.codec.magnitude_floor << "\nkmeans_iterations = " << c.codec.kmeans_iterations
     << "\nkmeans_max_frames = " << c.codec.kmeans_max_frames << "\ncodebook_seed = " << c.codebook_seed << "\n\n";
  os << "[corpus]\n"
     << "n_speakers = " << c.corpus.n_speakers << "\nutterances_per_speaker = " << c.corpus.utterances_per_speaker
     << "\ntrain_speakers = " << c.corpus.train_speakers << "\nmin_words = " << c.corpus.min_words
     << "\nmax_words = " << c.corpus.max_words << "\nseed = " << c.corpus.seed << "\n\n";
  os << "[train]\n"
     << "steps = " << c.train.steps << "\nbatch_size = " << c.train.batch_size << "\npeak_lr = " << c.train.peak_lr
     << "\nwarmup = " << c.train.warmup << "\nseed = " << c.train.seed
     << "\ncheckpoint_every = " << c.train.checkpoint_every << "\nw_ar = " << c.train.weights.ar
     << "\nw_nar = " << c.train.weights.nar << "\ngrad_clip = " << c.train.grad_clip
     << "\nmin_style = " << c.train.min_style << "\nmax_style = " << c.train.max_style << "\n";
  return os.str();
}

}  // namespace msp::train
