#include "msp/common/binary_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

#include "msp/common/errors.hpp"

namespace msp::binio {
namespace {

template <typename U>
void put_le(std::ostream& os, U v) {
  std::array<char, sizeof(U)> buf{};
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  }
  os.write(buf.data(), buf.size());
  if (!os) {
    throw IoError("write failed");
  }
}

template <typename U>
U get_le(std::istream& is) {
  std::array<unsigned char, sizeof(U)> buf{};
  is.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (is.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw CorruptDataError("unexpected end of stream");
  }
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<U>(buf[i]) << (8 * i);
  }
  return v;
}

}  // namespace

void write_magic(std::ostream& os, std::string_view magic) {
  os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (!os) {
    throw IoError("write failed");
  }
}

void expect_magic(std::istream& is, std::string_view magic, std::string_view what) {
  std::string got(magic.size(), '\0');
  is.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (is.gcount() != static_cast<std::streamsize>(got.size()) || got != magic) {
    throw CorruptDataError(std::string(what) + ": bad magic, expected \"" + std::string(magic) + "\"");
  }
}

void write_u16(std::ostream& os, std::uint16_t v) { put_le(os, v); }
void write_u32(std::ostream& os, std::uint32_t v) { put_le(os, v); }
void write_u64(std::ostream& os, std::uint64_t v) { put_le(os, v); }
void write_f64(std::ostream& os, double v) { put_le(os, std::bit_cast<std::uint64_t>(v)); }

void write_string(std::ostream& os, std::string_view s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint16_t read_u16(std::istream& is) { return get_le<std::uint16_t>(is); }
std::uint32_t read_u32(std::istream& is) { return get_le<std::uint32_t>(is); }
std::uint64_t read_u64(std::istream& is) { return get_le<std::uint64_t>(is); }
double read_f64(std::istream& is) { return std::bit_cast<double>(get_le<std::uint64_t>(is)); }

std::string read_string(std::istream& is, std::size_t max_len) {
  const auto n = read_u32(is);
  if (n > max_len) {
    throw CorruptDataError("string length " + std::to_string(n) + " exceeds limit");
  }
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (is.gcount() != static_cast<std::streamsize>(n)) {
    throw CorruptDataError("unexpected end of stream in string");
  }
  return s;
}

}  // namespace msp::binio
