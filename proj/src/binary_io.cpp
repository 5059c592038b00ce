#include "htdn/binary_io.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

#include <unistd.h>

namespace htdn {

void ByteWriter::short_string(std::string_view s) {
  if (s.size() > 0xFFFF) throw ContractError("string too long for u16 length prefix");
  u16(static_cast<std::uint16_t>(s.size()));
  raw(s);
}

void ByteWriter::long_string(std::string_view s) {
  u64(s.size());
  raw(s);
}

std::uint64_t ByteReader::get_le(int n) {
  if (remaining() < static_cast<std::size_t>(n)) {
    throw DataError("truncated binary data at offset " + std::to_string(pos_));
  }
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
  pos_ += n;
  return v;
}

std::span<const std::uint8_t> ByteReader::raw(std::size_t n) {
  if (remaining() < n) throw DataError("truncated binary data at offset " + std::to_string(pos_));
  auto out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::string ByteReader::short_string() {
  const auto n = u16();
  auto bytes = raw(n);
  return {bytes.begin(), bytes.end()};
}

std::string ByteReader::long_string() {
  const auto n = u64();
  auto bytes = raw(n);
  return {bytes.begin(), bytes.end()};
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_file_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw DataError("write failed for " + path.string());
    }
  }
  fs::rename(tmp, path);
}

}  // namespace htdn
