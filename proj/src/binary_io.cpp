#include "ttaood/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ttaood/error.hpp"

namespace ttaood::binio {
namespace {

template <typename Real, typename Word>
std::vector<char> encode_le(std::span<const Real> values) {
  static_assert(sizeof(Real) == sizeof(Word));
  std::vector<char> out(values.size() * sizeof(Word));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const Word word = std::bit_cast<Word>(values[i]);
    for (std::size_t b = 0; b < sizeof(Word); ++b) {
      out[i * sizeof(Word) + b] = static_cast<char>((word >> (8 * b)) & 0xFFu);
    }
  }
  return out;
}

template <typename Real, typename Word>
std::vector<Real> decode_le(std::span<const char> bytes) {
  if (bytes.size() % sizeof(Word) != 0) {
    throw DataError("byte length " + std::to_string(bytes.size()) + " is not a multiple of " +
                    std::to_string(sizeof(Word)));
  }
  std::vector<Real> out(bytes.size() / sizeof(Word));
  for (std::size_t i = 0; i < out.size(); ++i) {
    Word word = 0;
    for (std::size_t b = 0; b < sizeof(Word); ++b) {
      word |= static_cast<Word>(static_cast<unsigned char>(bytes[i * sizeof(Word) + b])) << (8 * b);
    }
    out[i] = std::bit_cast<Real>(word);
  }
  return out;
}

}  // namespace

std::vector<char> encode_f32_le(std::span<const float> values) {
  return encode_le<float, std::uint32_t>(values);
}

std::vector<char> encode_f64_le(std::span<const double> values) {
  return encode_le<double, std::uint64_t>(values);
}

std::vector<float> decode_f32_le(std::span<const char> bytes) {
  return decode_le<float, std::uint32_t>(bytes);
}

std::vector<double> decode_f64_le(std::span<const char> bytes) {
  return decode_le<double, std::uint64_t>(bytes);
}

void write_file(const std::filesystem::path& path, std::span<const char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing file: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span<const char>(text.data(), text.size()));
}

}  // namespace ttaood::binio
