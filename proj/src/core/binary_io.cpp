#include "wmrl/core/binary_io.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "wmrl/core/error.hpp"

namespace wmrl {

void BinaryWriter::put_bytes(std::string_view bytes) { buffer_.append(bytes); }

void BinaryWriter::put_u8(std::uint8_t v) { buffer_.push_back(static_cast<char>(v)); }

void BinaryWriter::put_u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buffer_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void BinaryWriter::put_u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buffer_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void BinaryWriter::put_f32(float v) { put_u32(std::bit_cast<std::uint32_t>(v)); }

void BinaryWriter::put_f64(double v) { put_u64(std::bit_cast<std::uint64_t>(v)); }

void BinaryWriter::put_string(std::string_view s) {
  put_u32(static_cast<std::uint32_t>(s.size()));
  put_bytes(s);
}

BinaryReader::BinaryReader(std::string_view bytes, std::string context)
    : bytes_(bytes), context_(std::move(context)) {}

void BinaryReader::fail(const std::string& what) const {
  std::ostringstream os;
  os << context_ << ": " << what << " at offset " << offset_;
  throw_error(ErrorKind::format, os.str());
}

std::string_view BinaryReader::get_bytes(std::size_t n) {
  if (n > remaining()) {
    fail("truncated data (need " + std::to_string(n) + " bytes, have " +
         std::to_string(remaining()) + ")");
  }
  auto out = bytes_.substr(offset_, n);
  offset_ += n;
  return out;
}

std::uint8_t BinaryReader::get_u8() { return static_cast<std::uint8_t>(get_bytes(1)[0]); }

std::uint32_t BinaryReader::get_u32() {
  auto b = get_bytes(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
  return v;
}

std::uint64_t BinaryReader::get_u64() {
  auto b = get_bytes(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
  return v;
}

float BinaryReader::get_f32() { return std::bit_cast<float>(get_u32()); }

double BinaryReader::get_f64() { return std::bit_cast<double>(get_u64()); }

std::string BinaryReader::get_string() {
  const auto n = get_u32();
  return std::string(get_bytes(n));
}

void BinaryReader::expect_magic(std::string_view magic) {
  const auto start = offset_;
  if (remaining() < magic.size() || bytes_.substr(offset_, magic.size()) != magic) {
    offset_ = start;
    fail("bad magic (expected \"" + std::string(magic) + "\")");
  }
  offset_ += magic.size();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_error(ErrorKind::io, "cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  if (in.bad()) throw_error(ErrorKind::io, "read failed for " + path.string());
  return os.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw_error(ErrorKind::io, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw_error(ErrorKind::io, "write failed for " + path.string());
}

}  // namespace wmrl
