#include <fstream>

#include "msp/codec/codec.hpp"
#include "msp/common/binary_io.hpp"
#include "msp/common/errors.hpp"

namespace msp::codec {
namespace {

constexpr std::uint32_t kMaxCodebookSize = 65536;
constexpr std::uint32_t kMaxDim = 4096;
constexpr std::uint32_t kMaxFrames = 1u << 24;

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "' for reading");
  return is;
}

}  // namespace

void write_codebooks(std::ostream& os, const Codebooks& cb) {
  binio::write_magic(os, "MSPC1");
  binio::write_u32(os, static_cast<std::uint32_t>(cb.codebook_size));
  binio::write_u32(os, static_cast<std::uint32_t>(cb.dim));
  for (const auto& stage : cb.stages) {
    if (stage.size() != cb.codebook_size * cb.dim) {
      throw DimensionError("codebook stage has " + std::to_string(stage.size()) + " values, expected K*D");
    }
    for (double v : stage) binio::write_f64(os, v);
  }
}

Codebooks read_codebooks(std::istream& is) {
  binio::expect_magic(is, "MSPC1", "codebook file");
  Codebooks cb;
  const auto k = binio::read_u32(is);
  const auto d = binio::read_u32(is);
  if (k < 2 || k > kMaxCodebookSize || d == 0 || d > kMaxDim) {
    throw CorruptDataError("codebook file: implausible K=" + std::to_string(k) + " D=" + std::to_string(d));
  }
  cb.codebook_size = k;
  cb.dim = d;
  for (auto& stage : cb.stages) {
    stage.resize(static_cast<std::size_t>(k) * d);
    for (auto& v : stage) v = binio::read_f64(is);
  }
  return cb;
}

void write_code_grid(std::ostream& os, const CodeGrid& grid) {
  grid.validate();
  if (grid.codebook_size > kMaxCodebookSize) {
    throw ContractError("code grid: K too large for 16-bit ids");
  }
  binio::write_magic(os, "MSPG1");
  binio::write_u32(os, static_cast<std::uint32_t>(grid.frames));
  binio::write_u32(os, static_cast<std::uint32_t>(grid.codebook_size));
  for (const auto& layer : grid.layers) {
    for (int id : layer) binio::write_u16(os, static_cast<std::uint16_t>(id));
  }
}

CodeGrid read_code_grid(std::istream& is) {
  binio::expect_magic(is, "MSPG1", "code grid file");
  const auto t = binio::read_u32(is);
  const auto k = binio::read_u32(is);
  if (t > kMaxFrames || k == 0 || k > kMaxCodebookSize) {
    throw CorruptDataError("code grid file: implausible T=" + std::to_string(t) + " K=" + std::to_string(k));
  }
  CodeGrid grid(t, k);
  for (auto& layer : grid.layers) {
    for (auto& id : layer) id = binio::read_u16(is);
  }
  grid.validate();
  return grid;
}

void save_codebooks(const std::string& path, const Codebooks& cb) {
  auto os = open_out(path);
  write_codebooks(os, cb);
  if (!os) throw IoError("write failed for '" + path + "'");
}

Codebooks load_codebooks(const std::string& path) {
  auto is = open_in(path);
  return read_codebooks(is);
}

void save_code_grid(const std::string& path, const CodeGrid& grid) {
  auto os = open_out(path);
  write_code_grid(os, grid);
  if (!os) throw IoError("write failed for '" + path + "'");
}

CodeGrid load_code_grid(const std::string& path) {
  auto is = open_in(path);
  return read_code_grid(is);
}

}  // namespace msp::codec
