#include "decan/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace decan {

namespace {

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

}  // namespace

void append_f32_le(std::string& out, std::span<const double> values) {
  const std::size_t base = out.size();
  out.resize(base + values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = to_le(std::bit_cast<std::uint32_t>(static_cast<float>(values[i])));
    std::memcpy(out.data() + base + i * 4, &bits, 4);
  }
}

void read_f32_le(std::span<const char> bytes, std::span<double> out) {
  if (bytes.size() != out.size() * 4) {
    throw std::invalid_argument("read_f32_le: byte count does not match value count");
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, bytes.data() + i * 4, 4);
    out[i] = static_cast<double>(std::bit_cast<float>(to_le(bits)));
  }
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string encode_framed(std::string_view magic, const FramedFile& file) {
  if (magic.size() != 8) throw std::invalid_argument("framed magic must be 8 bytes");
  std::string out(magic);
  std::uint64_t len = file.header_json.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
  out += file.header_json;
  out += file.payload;
  return out;
}

FramedFile decode_framed(std::string_view magic, const std::string& bytes, const std::string& what) {
  if (bytes.size() < 16 || std::string_view(bytes).substr(0, 8) != magic) {
    throw std::runtime_error("bad magic in " + what);
  }
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) {
    len |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
  }
  if (len > bytes.size() - 16) throw std::runtime_error("truncated header in " + what);
  FramedFile f;
  f.header_json = bytes.substr(16, len);
  f.payload = bytes.substr(16 + len);
  return f;
}

std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace decan
