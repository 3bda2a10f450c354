#pragma once

// Deterministic pixel-space augmentations on 8-bit RGB images and their
// sequential composition.
//
// Spec grammar (render_spec/parse_spec):
//   spec   := "none" | op ("+" op)*
//   op     := "hflip" | "vflip" | "equalize" | "invert" | "jitter" [ "(" params ")" ]
//   params := key "=" value ("," key "=" value)*      keys: b c s h seed
//   value  := real | real ":" real                    a range is sampled per image
//
// Jitter keys left out take the default ranges b,c,s in [0.6, 1.4], h in [-10, 10]
// degrees. A missing seed falls back to the run seed passed to apply().

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ttaood {

struct ImageBuffer {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // height x width x 3, row-major, RGB

  ImageBuffer() = default;
  ImageBuffer(int w, int h);
  ImageBuffer(int w, int h, std::vector<std::uint8_t> data);

  std::size_t index(int x, int y, int channel) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
            static_cast<std::size_t>(x)) * 3 + static_cast<std::size_t>(channel);
  }
  std::uint8_t at(int x, int y, int channel) const { return pixels[index(x, y, channel)]; }
  std::uint8_t& at(int x, int y, int channel) { return pixels[index(x, y, channel)]; }

  void validate() const;

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;
};

// Closed interval; lo == hi means a fixed value that bypasses the RNG.
struct JitterRange {
  double lo = 1.0;
  double hi = 1.0;

  static JitterRange fixed(double v) { return {v, v}; }
  bool is_fixed() const { return lo == hi; }

  friend bool operator==(const JitterRange&, const JitterRange&) = default;
};

struct HFlip {
  friend bool operator==(const HFlip&, const HFlip&) = default;
};
struct VFlip {
  friend bool operator==(const VFlip&, const VFlip&) = default;
};
struct Equalize {
  friend bool operator==(const Equalize&, const Equalize&) = default;
};
struct Invert {
  friend bool operator==(const Invert&, const Invert&) = default;
};

struct ColorJitter {
  JitterRange brightness{0.6, 1.4};
  JitterRange contrast{0.6, 1.4};
  JitterRange saturation{0.6, 1.4};
  JitterRange hue_degrees{-10.0, 10.0};
  std::optional<std::uint64_t> seed;

  static ColorJitter fixed(double b, double c, double s, double h,
                           std::optional<std::uint64_t> seed = std::nullopt);

  friend bool operator==(const ColorJitter&, const ColorJitter&) = default;
};

// Concrete factors after sampling any ranges.
struct JitterFactors {
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
  double hue_degrees = 0.0;
};

using AugmentOp = std::variant<HFlip, VFlip, ColorJitter, Equalize, Invert>;

struct AugmentationSpec {
  std::vector<AugmentOp> ops;  // applied left to right; empty is the identity view

  bool is_identity() const { return ops.empty(); }
  void validate() const;

  friend bool operator==(const AugmentationSpec&, const AugmentationSpec&) = default;
};

AugmentationSpec parse_spec(std::string_view text);
std::string render_spec(const AugmentationSpec& spec);

ImageBuffer hflip(const ImageBuffer& img);
ImageBuffer vflip(const ImageBuffer& img);
ImageBuffer invert(const ImageBuffer& img);
ImageBuffer equalize(const ImageBuffer& img);

// Fixed application order brightness -> contrast -> saturation -> hue, all in
// double precision, clamped to [0, 255] after each stage and rounded half-up once.
ImageBuffer color_jitter(const ImageBuffer& img, const JitterFactors& factors);

// Draws any ranged parameters from a generator seeded with `seed`.
JitterFactors sample_jitter(const ColorJitter& jitter, std::uint64_t seed);

ImageBuffer color_jitter(const ImageBuffer& img, const ColorJitter& jitter, std::uint64_t seed);

// Applies every op in order. Ranged jitter parameters are drawn from
// mix_seed(op seed or run_seed, stream) so callers can give each image its
// own stream while keeping the result independent of processing order.
ImageBuffer apply(const AugmentationSpec& spec, const ImageBuffer& img, std::uint64_t run_seed = 0,
                  std::uint64_t stream = 0);

}  // namespace ttaood
