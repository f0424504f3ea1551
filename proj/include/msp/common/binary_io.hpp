#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

// Little-endian primitive readers/writers shared by the on-disk containers.
namespace msp::binio {

void write_magic(std::ostream& os, std::string_view magic);
/// Reads and checks a magic tag; throws CorruptDataError on mismatch.
void expect_magic(std::istream& is, std::string_view magic, std::string_view what);

void write_u16(std::ostream& os, std::uint16_t v);
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_f64(std::ostream& os, double v);
void write_string(std::ostream& os, std::string_view s);  // u32 length + bytes

std::uint16_t read_u16(std::istream& is);
std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
double read_f64(std::istream& is);
std::string read_string(std::istream& is, std::size_t max_len = 1u << 24);

}  // namespace msp::binio
