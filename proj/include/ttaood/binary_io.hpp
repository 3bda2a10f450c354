#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ttaood::binio {

// Raw little-endian real arrays, no header. Byte order is fixed regardless of host.

std::vector<char> encode_f32_le(std::span<const float> values);
std::vector<char> encode_f64_le(std::span<const double> values);

std::vector<float> decode_f32_le(std::span<const char> bytes);
std::vector<double> decode_f64_le(std::span<const char> bytes);

void write_file(const std::filesystem::path& path, std::span<const char> bytes);
std::vector<char> read_file(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace ttaood::binio
