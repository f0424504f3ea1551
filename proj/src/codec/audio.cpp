#include "msp/codec/audio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "msp/common/binary_io.hpp"
#include "msp/common/errors.hpp"

namespace msp::codec {

void Waveform::validate() const {
  if (samples.empty()) {
    throw EmptyInputError("waveform has no samples");
  }
  if (sample_rate <= 0) {
    throw ContractError("waveform sample rate must be positive");
  }
  for (double s : samples) {
    if (!std::isfinite(s)) throw NonFiniteError("waveform contains non-finite samples");
  }
}

void write_wav(const std::string& path, const Waveform& w) {
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw IoError("cannot write " + path);
  }
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  binio::write_magic(os, "RIFF");
  binio::write_u32(os, 36 + data_bytes);
  binio::write_magic(os, "WAVEfmt ");
  binio::write_u32(os, 16);
  binio::write_u16(os, 1);  // PCM
  binio::write_u16(os, 1);  // mono
  binio::write_u32(os, static_cast<std::uint32_t>(w.sample_rate));
  binio::write_u32(os, static_cast<std::uint32_t>(w.sample_rate) * 2);
  binio::write_u16(os, 2);
  binio::write_u16(os, 16);
  binio::write_magic(os, "data");
  binio::write_u32(os, data_bytes);
  for (double s : w.samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    const auto q = static_cast<std::int16_t>(std::lround(c * 32767.0));
    binio::write_u16(os, static_cast<std::uint16_t>(q));
  }
}

Waveform read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw IoError("cannot open " + path);
  }
  binio::expect_magic(is, "RIFF", path);
  binio::read_u32(is);
  binio::expect_magic(is, "WAVE", path);
  Waveform w;
  bool have_fmt = false;
  while (true) {
    std::string id(4, '\0');
    is.read(id.data(), 4);
    if (is.gcount() != 4) {
      throw CorruptDataError(path + ": no data chunk");
    }
    const std::uint32_t size = binio::read_u32(is);
    if (id == "fmt ") {
      const auto format = binio::read_u16(is);
      const auto channels = binio::read_u16(is);
      w.sample_rate = static_cast<int>(binio::read_u32(is));
      binio::read_u32(is);
      binio::read_u16(is);
      const auto bits = binio::read_u16(is);
      if (format != 1 || channels != 1 || bits != 16) {
        throw CorruptDataError(path + ": only 16-bit PCM mono is supported");
      }
      is.ignore(size - 16);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) {
        throw CorruptDataError(path + ": data chunk before fmt chunk");
      }
      w.samples.resize(size / 2);
      for (auto& s : w.samples) {
        s = static_cast<double>(static_cast<std::int16_t>(binio::read_u16(is))) / 32767.0;
      }
      return w;
    } else {
      is.ignore(size + (size & 1u));
    }
  }
}

Waveform concatenate(const std::vector<Waveform>& parts) {
  Waveform out;
  if (parts.empty()) return out;
  out.sample_rate = parts.front().sample_rate;
  for (const auto& p : parts) {
    if (p.sample_rate != out.sample_rate) {
      throw ContractError("concatenate: mixed sample rates");
    }
    out.samples.insert(out.samples.end(), p.samples.begin(), p.samples.end());
  }
  return out;
}

}  // namespace msp::codec
