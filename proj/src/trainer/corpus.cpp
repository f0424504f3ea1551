#include "msp/trainer/corpus.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "msp/common/errors.hpp"
#include "msp/common/rng.hpp"

namespace msp::train {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Formants {
  double f1;
  double f2;
};

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y'; }

bool is_voiced_consonant(char c) {
  static const std::string voiced = "bdgjlmnrvwz";
  return voiced.find(c) != std::string::npos;
}

Formants vowel_formants(char c) {
  switch (c) {
    case 'a': return {730, 1090};
    case 'e': return {530, 1840};
    case 'i': return {270, 2290};
    case 'o': return {570, 840};
    case 'u': return {300, 870};
    default: return {400, 2000};  // y
  }
}

// Centre of the frication band for each consonant / digit.
double consonant_band(char c) {
  const int k = std::isdigit(static_cast<unsigned char>(c)) ? 26 + (c - '0') : c - 'a';
  return 900.0 + 97.0 * ((k * 7) % 29);
}

double resonance(double f, double centre, double bandwidth) {
  const double x = (f - centre) / bandwidth;
  return 1.0 / (1.0 + x * x);
}

// Spectral envelope of voiced sounds: tilt plus two resonances.
double envelope(const SynthSpeaker& s, const Formants& base, double f) {
  const double octaves = std::log2(std::max(f, 50.0) / 100.0);
  const double tilt = std::pow(10.0, s.tilt_db_per_octave * octaves / 20.0);
  const double f1 = base.f1 + s.formant1_offset;
  const double f2 = base.f2 + s.formant2_offset;
  return tilt * (0.05 + resonance(f, f1, 90.0) + 0.7 * resonance(f, f2, 140.0));
}

struct Segment {
  char symbol;  // ' ' for a pause
  std::size_t samples;
};

std::vector<Segment> plan_segments(const SynthSpeaker& s, const std::string& transcript, int sr, Rng& rng) {
  std::vector<Segment> out;
  for (char c : text::Transcript::normalize(transcript)) {
    double seconds = 0.0;
    if (c == ' ') {
      seconds = 0.045;
    } else if (is_vowel(c)) {
      seconds = 0.085 * s.vowel_duration_bias;
    } else {
      seconds = 0.055 * s.consonant_duration_bias;
    }
    seconds *= rng.uniform(0.92, 1.08) / s.rate;
    out.push_back({c, static_cast<std::size_t>(seconds * sr)});
  }
  return out;
}

// Two-pole resonator used to colour noise for unvoiced consonants.
class Resonator {
 public:
  Resonator(double centre, double bandwidth, int sr) {
    const double r = std::exp(-std::numbers::pi * bandwidth / sr);
    a1_ = 2.0 * r * std::cos(kTwoPi * centre / sr);
    a2_ = -r * r;
    gain_ = 1.0 - r;
  }
  double operator()(double x) {
    const double y = gain_ * x + a1_ * y1_ + a2_ * y2_;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double a1_ = 0.0, a2_ = 0.0, gain_ = 1.0, y1_ = 0.0, y2_ = 0.0;
};

std::string csv_escape_free(const std::string& s) {
  if (s.find_first_of(",\"\n") != std::string::npos) {
    throw ContractError("corpus: transcript contains a CSV delimiter: " + s);
  }
  return s;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

SynthSpeaker SynthSpeaker::draw(std::uint64_t corpus_seed, int id) {
  Rng rng(mix_seed(corpus_seed, static_cast<std::uint64_t>(id)));
  SynthSpeaker s;
  s.id = id;
  s.f0_base = rng.uniform(90.0, 240.0);
  s.tilt_db_per_octave = rng.uniform(-12.0, -3.0);
  s.formant1_offset = rng.uniform(-150.0, 150.0);
  s.formant2_offset = rng.uniform(-300.0, 300.0);
  s.rate = rng.uniform(0.75, 1.35);
  s.pitch_slope = rng.uniform(-4.0, 4.0);
  s.vowel_duration_bias = rng.uniform(0.8, 1.25);
  s.consonant_duration_bias = rng.uniform(0.8, 1.25);
  return s;
}

void CorpusConfig::validate() const {
  if (n_speakers < 2) throw ConfigError("corpus: need at least 2 speakers");
  if (train_speakers == 0 || train_speakers > n_speakers) {
    throw ConfigError("corpus: train_speakers must be in [1, n_speakers]");
  }
  if (utterances_per_speaker < 1) throw ConfigError("corpus: need at least one utterance per speaker");
  if (min_words < 1 || min_words > max_words) throw ConfigError("corpus: invalid word-count range");
}

std::vector<std::size_t> Corpus::utterances_of(int speaker_id) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    if (utterances[i].speaker_id == speaker_id) out.push_back(i);
  }
  return out;
}

const SynthSpeaker& Corpus::speaker(int id) const {
  for (const auto& s : speakers) {
    if (s.id == id) return s;
  }
  throw ContractError("corpus: unknown speaker " + std::to_string(id));
}

const std::vector<std::string>& word_list() {
  static const std::vector<std::string> words = {
      "amber", "bold",  "cinder", "dawn",   "eager",  "fable", "garden", "harbor", "idle",   "jolly",
      "kettle", "lemon", "meadow", "noble",  "olive",  "pepper", "quiet", "river",  "silver", "timber",
      "under", "velvet", "willow", "yellow", "zephyr", "apple", "bright", "candle", "delta",  "echo",
      "forest", "golden", "honey", "island", "jasper", "lantern", "marble", "north", "ocean", "pillow",
      "ruby",  "summer", "tunnel", "violet", "winter", "seven", "nine",  "three"};
  return words;
}

codec::Waveform render_utterance(const SynthSpeaker& s, const std::string& transcript, Rng& rng, int sr) {
  const auto segments = plan_segments(s, transcript, sr, rng);
  std::size_t total = 0;
  for (const auto& seg : segments) total += seg.samples;
  codec::Waveform w;
  w.sample_rate = sr;
  w.samples.assign(total, 0.0);

  const double nyquist_guard = 0.5 * sr - 150.0;
  const double duration = static_cast<double>(total) / sr;
  const std::size_t ramp = static_cast<std::size_t>(0.006 * sr);
  double phase = rng.uniform(0.0, kTwoPi);
  std::size_t pos = 0;
  for (const auto& seg : segments) {
    const char c = seg.symbol;
    const bool vowel = is_vowel(c);
    const bool voiced = vowel || is_voiced_consonant(c);
    const Formants base = vowel ? vowel_formants(c) : Formants{350.0, 1500.0};
    const double voiced_gain = vowel ? 1.0 : 0.35;
    Resonator noise_filter(consonant_band(c) + 0.5 * s.formant2_offset, 350.0, sr);
    for (std::size_t i = 0; i < seg.samples; ++i, ++pos) {
      const double t = static_cast<double>(pos) / sr;
      // Declination around the speaker's base pitch plus the style slope.
      const double semis = s.pitch_slope * (t - 0.5 * duration) - 1.5 * t / std::max(duration, 1e-3);
      const double f0 = s.f0_base * std::pow(2.0, semis / 12.0);
      phase = std::fmod(phase + kTwoPi * f0 / sr, kTwoPi);
      if (c == ' ') continue;
      double x = 0.0;
      if (voiced) {
        for (int h = 1; h * f0 < nyquist_guard; ++h) {
          x += envelope(s, base, h * f0) * std::sin(h * phase);
        }
        x *= voiced_gain;
      }
      if (!vowel) {
        x += 2.5 * noise_filter(rng.uniform(-1.0, 1.0)) * (voiced ? 0.4 : 1.0);
      }
      const std::size_t edge = std::min(i, seg.samples - 1 - i);
      const double fade = edge < ramp ? 0.5 - 0.5 * std::cos(std::numbers::pi * edge / ramp) : 1.0;
      w.samples[pos] = x * fade;
    }
  }
  double energy = 0.0;
  for (double v : w.samples) energy += v * v;
  const double rms = std::sqrt(energy / std::max<std::size_t>(total, 1));
  if (rms > 0.0) {
    for (auto& v : w.samples) v *= 0.1 / rms;
  }
  return w;
}

Corpus synth_corpus(const CorpusConfig& cfg) {
  cfg.validate();
  Corpus corpus;
  corpus.config = cfg;
  const auto& words = word_list();
  for (std::size_t sid = 0; sid < cfg.n_speakers; ++sid) {
    const auto speaker = SynthSpeaker::draw(cfg.seed, static_cast<int>(sid));
    corpus.speakers.push_back(speaker);
    for (std::size_t u = 0; u < cfg.utterances_per_speaker; ++u) {
      Rng rng(mix_seed(mix_seed(cfg.seed, sid), 1000 + u));
      const auto n_words = static_cast<std::size_t>(
          rng.uniform_int(static_cast<std::int64_t>(cfg.min_words), static_cast<std::int64_t>(cfg.max_words)));
      std::string transcript;
      for (std::size_t k = 0; k < n_words; ++k) {
        if (k > 0) transcript += ' ';
        transcript += words[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(words.size()) - 1))];
      }
      Utterance utt;
      utt.speaker_id = speaker.id;
      utt.index = static_cast<int>(u);
      utt.transcript = transcript;
      utt.wave = render_utterance(speaker, transcript, rng);
      corpus.utterances.push_back(std::move(utt));
    }
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "wav");
  std::ofstream cfg(fs::path(dir) / "corpus.ini");
  cfg << "n_speakers=" << corpus.config.n_speakers << "\nutterances_per_speaker="
      << corpus.config.utterances_per_speaker << "\ntrain_speakers=" << corpus.config.train_speakers
      << "\nmin_words=" << corpus.config.min_words << "\nmax_words=" << corpus.config.max_words
      << "\nseed=" << corpus.config.seed << "\n";
  std::ofstream spk(fs::path(dir) / "speakers.csv");
  spk.precision(17);
  spk << "id,f0_base,tilt_db_per_octave,formant1_offset,formant2_offset,rate,pitch_slope,vowel_duration_bias,"
         "consonant_duration_bias\n";
  for (const auto& s : corpus.speakers) {
    spk << s.id << ',' << s.f0_base << ',' << s.tilt_db_per_octave << ',' << s.formant1_offset << ','
        << s.formant2_offset << ',' << s.rate << ',' << s.pitch_slope << ',' << s.vowel_duration_bias << ','
        << s.consonant_duration_bias << '\n';
  }
  std::ofstream manifest(fs::path(dir) / "manifest.csv");
  manifest << "speaker,index,split,transcript,wav\n";
  for (const auto& u : corpus.utterances) {
    char name[64];
    std::snprintf(name, sizeof(name), "wav/s%02d_u%03d.wav", u.speaker_id, u.index);
    codec::write_wav((fs::path(dir) / name).string(), u.wave);
    manifest << u.speaker_id << ',' << u.index << ',' << (corpus.is_train_speaker(u.speaker_id) ? "train" : "test")
             << ',' << csv_escape_free(u.transcript) << ',' << name << '\n';
  }
  if (!manifest || !spk || !cfg) throw IoError("corpus: failed writing to " + dir);
}

Corpus load_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  Corpus corpus;
  std::ifstream cfg(fs::path(dir) / "corpus.ini");
  if (!cfg) throw IoError("corpus: missing corpus.ini in " + dir);
  std::string line;
  while (std::getline(cfg, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const auto key = line.substr(0, eq);
    const auto value = std::stoull(line.substr(eq + 1));
    if (key == "n_speakers") corpus.config.n_speakers = value;
    else if (key == "utterances_per_speaker") corpus.config.utterances_per_speaker = value;
    else if (key == "train_speakers") corpus.config.train_speakers = value;
    else if (key == "min_words") corpus.config.min_words = value;
    else if (key == "max_words") corpus.config.max_words = value;
    else if (key == "seed") corpus.config.seed = value;
  }
  std::ifstream spk(fs::path(dir) / "speakers.csv");
  if (!spk) throw IoError("corpus: missing speakers.csv in " + dir);
  std::getline(spk, line);
  while (std::getline(spk, line)) {
    const auto f = split_csv(line);
    if (f.size() != 9) throw CorruptDataError("corpus: bad speakers.csv row: " + line);
    SynthSpeaker s;
    s.id = std::stoi(f[0]);
    s.f0_base = std::stod(f[1]);
    s.tilt_db_per_octave = std::stod(f[2]);
    s.formant1_offset = std::stod(f[3]);
    s.formant2_offset = std::stod(f[4]);
    s.rate = std::stod(f[5]);
    s.pitch_slope = std::stod(f[6]);
    s.vowel_duration_bias = std::stod(f[7]);
    s.consonant_duration_bias = std::stod(f[8]);
    corpus.speakers.push_back(s);
  }
  std::ifstream manifest(fs::path(dir) / "manifest.csv");
  if (!manifest) throw IoError("corpus: missing manifest.csv in " + dir);
  std::getline(manifest, line);
  while (std::getline(manifest, line)) {
    const auto f = split_csv(line);
    if (f.size() != 5) throw CorruptDataError("corpus: bad manifest row: " + line);
    Utterance u;
    u.speaker_id = std::stoi(f[0]);
    u.index = std::stoi(f[1]);
    u.transcript = f[3];
    u.wave = codec::read_wav((fs::path(dir) / f[4]).string());
    corpus.utterances.push_back(std::move(u));
  }
  return corpus;
}

}  // namespace msp::train
