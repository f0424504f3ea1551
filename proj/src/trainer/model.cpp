#include "msp/trainer/model.hpp"

#include <filesystem>
#include <fstream>

#include "msp/common/binary_io.hpp"
#include "msp/common/errors.hpp"

namespace msp::train {
namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void write_tensor(std::ostream& os, const nn::Tensor& t) {
  binio::write_u32(os, static_cast<std::uint32_t>(t.shape().size()));
  for (auto d : t.shape()) binio::write_u64(os, d);
  for (double v : t.values()) binio::write_f64(os, v);
}

nn::Tensor read_tensor(std::istream& is) {
  const auto rank = binio::read_u32(is);
  if (rank > 4) throw CorruptDataError("checkpoint: tensor rank " + std::to_string(rank));
  nn::Shape shape(rank);
  std::size_t n = 1;
  for (auto& d : shape) {
    d = binio::read_u64(is);
    if (d > (1u << 24)) throw CorruptDataError("checkpoint: implausible tensor dimension");
    n *= d;
  }
  nn::Tensor t(shape);
  if (t.size() != n) throw CorruptDataError("checkpoint: tensor size mismatch");
  for (auto& v : t.values()) v = binio::read_f64(is);
  return t;
}

void read_header(std::istream& is, Checkpoint& out) {
  binio::expect_magic(is, "MSVE1", "checkpoint");
  const auto version = binio::read_u32(is);
  if (version != kCheckpointVersion) {
    throw CorruptDataError("checkpoint: unsupported version " + std::to_string(version));
  }
  out.config_text = binio::read_string(is);
  out.step = binio::read_u64(is);
}

}  // namespace

void ModelConfig::validate() const {
  encoder.validate();
  decoder.validate();
  if (encoder.model_dim != decoder.model_dim) {
    throw ConfigError("model: encoder width " + std::to_string(encoder.model_dim) + " differs from decoder width " +
                      std::to_string(decoder.model_dim));
  }
}

TtsModel::TtsModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.init_seed);
  encoder_ = std::make_unique<encoder::SpeakerAwareEncoder>(store_, "encoder.", cfg_.encoder, rng);
  decoder_ = std::make_unique<decoder::AcousticDecoder>(store_, "decoder.", cfg_.decoder, rng);
}

void save_checkpoint(const std::string& path, const TtsModel& model, const Checkpoint& state) {
  // Write to a sibling file first so a failed write never clobbers the last good checkpoint.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("checkpoint: cannot open '" + tmp + "' for writing");
    binio::write_magic(os, "MSVE1");
    binio::write_u32(os, kCheckpointVersion);
    binio::write_string(os, state.config_text);
    binio::write_u64(os, state.step);
    const auto& store = model.parameters();
    binio::write_u32(os, static_cast<std::uint32_t>(store.size()));
    for (std::size_t i = 0; i < store.size(); ++i) {
      binio::write_string(os, store[i].name);
      write_tensor(os, store[i].value);
    }
    const bool has_moments = state.adam.first_moment.size() == store.size();
    binio::write_f64(os, state.adam.beta1);
    binio::write_f64(os, state.adam.beta2);
    binio::write_f64(os, state.adam.epsilon);
    binio::write_u64(os, state.adam.step_count);
    binio::write_u32(os, has_moments ? 1 : 0);
    if (has_moments) {
      for (std::size_t i = 0; i < store.size(); ++i) {
        write_tensor(os, state.adam.first_moment[i]);
        write_tensor(os, state.adam.second_moment[i]);
      }
    }
    os.flush();
    if (!os) throw IoError("checkpoint: write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("checkpoint: cannot move '" + tmp + "' to '" + path + "': " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path, TtsModel& model) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open '" + path + "'");
  Checkpoint out;
  read_header(is, out);
  auto& store = model.parameters();
  const auto count = binio::read_u32(is);
  if (count != store.size()) {
    throw CorruptDataError("checkpoint: " + std::to_string(count) + " parameters, model has " +
                           std::to_string(store.size()));
  }
  std::vector<nn::Tensor> values;
  for (std::size_t i = 0; i < count; ++i) {
    const auto name = binio::read_string(is);
    if (name != store[i].name) {
      throw CorruptDataError("checkpoint: parameter " + std::to_string(i) + " is '" + name + "', model expects '" +
                             store[i].name + "'");
    }
    auto t = read_tensor(is);
    if (t.shape() != store[i].value.shape()) {
      throw CorruptDataError("checkpoint: shape of '" + name + "' is " + nn::shape_string(t.shape()) +
                             ", model expects " + nn::shape_string(store[i].value.shape()));
    }
    values.push_back(std::move(t));
  }
  out.adam.beta1 = binio::read_f64(is);
  out.adam.beta2 = binio::read_f64(is);
  out.adam.epsilon = binio::read_f64(is);
  out.adam.step_count = binio::read_u64(is);
  if (binio::read_u32(is) == 1) {
    for (std::size_t i = 0; i < count; ++i) {
      out.adam.first_moment.push_back(read_tensor(is));
      out.adam.second_moment.push_back(read_tensor(is));
    }
  }
  for (std::size_t i = 0; i < count; ++i) store[i].value = std::move(values[i]);
  store.zero_grad();
  return out;
}

std::string read_checkpoint_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open '" + path + "'");
  Checkpoint out;
  read_header(is, out);
  return out.config_text;
}

}  // namespace msp::train
