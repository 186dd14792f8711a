#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace decan {

// Little-endian float32 payload helpers. Values are narrowed from/widened to
// double at the boundary.
void append_f32_le(std::string& out, std::span<const double> values);
void read_f32_le(std::span<const char> bytes, std::span<double> out);

std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::string& bytes);

// Container used by feature tensors and checkpoints:
//   8-byte magic | uint64 LE header length | JSON header | float32 LE payload
struct FramedFile {
  std::string header_json;
  std::string payload;
};

std::string encode_framed(std::string_view magic, const FramedFile& file);
FramedFile decode_framed(std::string_view magic, const std::string& bytes, const std::string& what);

// 64-bit FNV-1a as lowercase hex; stable across platforms.
std::string fnv1a_hex(std::string_view data);

}  // namespace decan
