#include "ttaood/augment.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>

#include "ttaood/error.hpp"
#include "ttaood/rng.hpp"

namespace ttaood {
namespace {

constexpr double kRedWeight = 0.299;
constexpr double kGreenWeight = 0.587;
constexpr double kBlueWeight = 0.114;

std::uint8_t round_half_up(double v) {
  const double r = std::floor(std::clamp(v, 0.0, 255.0) + 0.5);
  return static_cast<std::uint8_t>(std::min(r, 255.0));
}

double clamp_channel(double v) { return std::clamp(v, 0.0, 255.0); }

double luma(double r, double g, double b) {
  return kRedWeight * r + kGreenWeight * g + kBlueWeight * b;
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  v = mx;
  s = mx > 0.0 ? delta / mx : 0.0;
  if (delta <= 0.0) {
    h = 0.0;
  } else if (mx == r) {
    h = 60.0 * ((g - b) / delta);
  } else if (mx == g) {
    h = 60.0 * ((b - r) / delta + 2.0);
  } else {
    h = 60.0 * ((r - g) / delta + 4.0);
  }
  if (h < 0.0) h += 360.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double chroma = v * s;
  const double hp = h / 60.0;
  const double x = chroma * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r1 = 0, g1 = 0, b1 = 0;
  switch (std::min(static_cast<int>(hp), 5)) {
    case 0: r1 = chroma; g1 = x; break;
    case 1: r1 = x; g1 = chroma; break;
    case 2: g1 = chroma; b1 = x; break;
    case 3: g1 = x; b1 = chroma; break;
    case 4: r1 = x; b1 = chroma; break;
    default: r1 = chroma; b1 = x; break;
  }
  const double m = v - chroma;
  r = r1 + m;
  g = g1 + m;
  b = b1 + m;
}

std::string format_real(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return {buf.data(), res.ptr};
}

std::string format_range(const JitterRange& r) {
  if (r.is_fixed()) return format_real(r.lo);
  return format_real(r.lo) + ":" + format_real(r.hi);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

double parse_real(std::string_view token, std::string_view context) {
  token = trim(token);
  double v = 0.0;
  const auto* first = token.data();
  const auto* last = token.data() + token.size();
  if (!token.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (token.empty() || res.ec != std::errc() || res.ptr != last || !std::isfinite(v)) {
    throw UsageError("malformed parameter value '" + std::string(token) + "' in '" +
                     std::string(context) + "'");
  }
  return v;
}

JitterRange parse_range(std::string_view value, std::string_view context) {
  const auto colon = value.find(':');
  if (colon == std::string_view::npos) return JitterRange::fixed(parse_real(value, context));
  JitterRange r{parse_real(value.substr(0, colon), context),
                parse_real(value.substr(colon + 1), context)};
  if (r.lo > r.hi) {
    throw UsageError("empty range '" + std::string(value) + "' in '" + std::string(context) + "'");
  }
  return r;
}

ColorJitter parse_jitter(std::string_view params, std::string_view context) {
  ColorJitter jitter;
  if (trim(params).empty()) return jitter;
  std::size_t start = 0;
  while (start <= params.size()) {
    const auto comma = params.find(',', start);
    const auto item = trim(params.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                              : comma - start));
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) {
      throw UsageError("malformed parameter '" + std::string(item) + "' in '" +
                       std::string(context) + "', expected key=value");
    }
    const auto key = trim(item.substr(0, eq));
    const auto value = trim(item.substr(eq + 1));
    if (key == "b") {
      jitter.brightness = parse_range(value, context);
    } else if (key == "c") {
      jitter.contrast = parse_range(value, context);
    } else if (key == "s") {
      jitter.saturation = parse_range(value, context);
    } else if (key == "h") {
      jitter.hue_degrees = parse_range(value, context);
    } else if (key == "seed") {
      std::uint64_t seed = 0;
      const auto res = std::from_chars(value.data(), value.data() + value.size(), seed);
      if (value.empty() || res.ec != std::errc() || res.ptr != value.data() + value.size()) {
        throw UsageError("malformed seed '" + std::string(value) + "' in '" +
                         std::string(context) + "'");
      }
      jitter.seed = seed;
    } else {
      throw UsageError("unknown jitter parameter '" + std::string(key) + "' in '" +
                       std::string(context) + "'");
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return jitter;
}

AugmentOp parse_op(std::string_view token) {
  token = trim(token);
  if (token == "hflip") return HFlip{};
  if (token == "vflip") return VFlip{};
  if (token == "equalize") return Equalize{};
  if (token == "invert") return Invert{};
  if (token == "jitter") return ColorJitter{};
  if (token.starts_with("jitter(") && token.ends_with(")")) {
    return parse_jitter(token.substr(7, token.size() - 8), token);
  }
  throw UsageError("unknown augmentation op '" + std::string(token) + "'");
}

void validate_jitter(const ColorJitter& j) {
  for (const auto* r : {&j.brightness, &j.contrast, &j.saturation}) {
    if (r->lo < 0.0) throw UsageError("jitter factor must be >= 0, got " + format_real(r->lo));
    if (r->lo > r->hi) throw UsageError("jitter range lower bound exceeds upper bound");
  }
  if (j.hue_degrees.lo > j.hue_degrees.hi) {
    throw UsageError("jitter hue range lower bound exceeds upper bound");
  }
  if (std::fabs(j.hue_degrees.lo) > 180.0 || std::fabs(j.hue_degrees.hi) > 180.0) {
    throw UsageError("jitter hue shift must lie in [-180, 180] degrees");
  }
}

}  // namespace

ImageBuffer::ImageBuffer(int w, int h)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3, 0) {
  validate();
}

ImageBuffer::ImageBuffer(int w, int h, std::vector<std::uint8_t> data)
    : width(w), height(h), pixels(std::move(data)) {
  validate();
}

void ImageBuffer::validate() const {
  if (width <= 0 || height <= 0) {
    throw DataError("image dimensions must be positive, got " + std::to_string(width) + "x" +
                    std::to_string(height));
  }
  const auto expected = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3;
  if (pixels.size() != expected) {
    throw DataError("pixel buffer has " + std::to_string(pixels.size()) + " bytes, expected " +
                    std::to_string(expected));
  }
}

ColorJitter ColorJitter::fixed(double b, double c, double s, double h,
                               std::optional<std::uint64_t> seed) {
  ColorJitter j;
  j.brightness = JitterRange::fixed(b);
  j.contrast = JitterRange::fixed(c);
  j.saturation = JitterRange::fixed(s);
  j.hue_degrees = JitterRange::fixed(h);
  j.seed = seed;
  return j;
}

void AugmentationSpec::validate() const {
  for (const auto& op : ops) {
    if (const auto* j = std::get_if<ColorJitter>(&op)) validate_jitter(*j);
  }
}

AugmentationSpec parse_spec(std::string_view text) {
  text = trim(text);
  if (text.empty()) throw UsageError("empty augmentation spec; use 'none' for the identity view");
  AugmentationSpec spec;
  if (text == "none") return spec;

  // '+' never appears inside parameters except as a sign, so split at depth 0 only.
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i < text.size()) {
      if (text[i] == '(') ++depth;
      if (text[i] == ')') --depth;
      if (depth < 0) throw UsageError("unbalanced parentheses in '" + std::string(text) + "'");
    }
    if (i == text.size() || (text[i] == '+' && depth == 0)) {
      const auto token = trim(text.substr(start, i - start));
      if (token.empty()) throw UsageError("empty op in '" + std::string(text) + "'");
      if (token == "none") throw UsageError("'none' cannot be combined with other ops");
      spec.ops.push_back(parse_op(token));
      start = i + 1;
    }
  }
  if (depth != 0) throw UsageError("unbalanced parentheses in '" + std::string(text) + "'");
  spec.validate();
  return spec;
}

std::string render_spec(const AugmentationSpec& spec) {
  if (spec.ops.empty()) return "none";
  std::string out;
  for (const auto& op : spec.ops) {
    if (!out.empty()) out += '+';
    std::visit(
        [&out](const auto& o) {
          using T = std::decay_t<decltype(o)>;
          if constexpr (std::is_same_v<T, HFlip>) {
            out += "hflip";
          } else if constexpr (std::is_same_v<T, VFlip>) {
            out += "vflip";
          } else if constexpr (std::is_same_v<T, Equalize>) {
            out += "equalize";
          } else if constexpr (std::is_same_v<T, Invert>) {
            out += "invert";
          } else {
            out += "jitter(b=" + format_range(o.brightness) + ",c=" + format_range(o.contrast) +
                   ",s=" + format_range(o.saturation) + ",h=" + format_range(o.hue_degrees);
            if (o.seed) out += ",seed=" + std::to_string(*o.seed);
            out += ')';
          }
        },
        op);
  }
  return out;
}

ImageBuffer hflip(const ImageBuffer& img) {
  img.validate();
  ImageBuffer out = img;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int ch = 0; ch < 3; ++ch) out.at(x, y, ch) = img.at(img.width - 1 - x, y, ch);
    }
  }
  return out;
}

ImageBuffer vflip(const ImageBuffer& img) {
  img.validate();
  ImageBuffer out = img;
  const auto row_bytes = static_cast<std::size_t>(img.width) * 3;
  for (int y = 0; y < img.height; ++y) {
    const auto src = img.pixels.begin() + static_cast<std::ptrdiff_t>(img.index(0, img.height - 1 - y, 0));
    std::copy(src, src + static_cast<std::ptrdiff_t>(row_bytes),
              out.pixels.begin() + static_cast<std::ptrdiff_t>(out.index(0, y, 0)));
  }
  return out;
}

ImageBuffer invert(const ImageBuffer& img) {
  img.validate();
  ImageBuffer out = img;
  for (auto& p : out.pixels) p = static_cast<std::uint8_t>(255 - p);
  return out;
}

ImageBuffer equalize(const ImageBuffer& img) {
  img.validate();
  ImageBuffer out = img;
  const std::size_t total = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height);
  for (int ch = 0; ch < 3; ++ch) {
    std::array<std::size_t, 256> hist{};
    for (std::size_t i = 0; i < total; ++i) ++hist[img.pixels[i * 3 + static_cast<std::size_t>(ch)]];

    std::array<std::size_t, 256> cdf{};
    std::size_t running = 0;
    std::size_t cdf_min = 0;
    for (int v = 0; v < 256; ++v) {
      running += hist[static_cast<std::size_t>(v)];
      cdf[static_cast<std::size_t>(v)] = running;
      if (cdf_min == 0 && running > 0) cdf_min = running;
    }
    if (cdf_min == total) continue;  // constant channel

    std::array<std::uint8_t, 256> lut{};
    const double scale = 255.0 / static_cast<double>(total - cdf_min);
    for (std::size_t v = 0; v < 256; ++v) {
      const double mapped = cdf[v] >= cdf_min ? static_cast<double>(cdf[v] - cdf_min) * scale : 0.0;
      lut[v] = round_half_up(mapped);
    }
    for (std::size_t i = 0; i < total; ++i) {
      auto& p = out.pixels[i * 3 + static_cast<std::size_t>(ch)];
      p = lut[p];
    }
  }
  return out;
}

ImageBuffer color_jitter(const ImageBuffer& img, const JitterFactors& f) {
  img.validate();
  if (f.brightness < 0.0 || f.contrast < 0.0 || f.saturation < 0.0) {
    throw UsageError("jitter factors must be >= 0");
  }
  if (std::fabs(f.hue_degrees) > 180.0) {
    throw UsageError("jitter hue shift must lie in [-180, 180] degrees");
  }
  const std::size_t total = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height);
  std::vector<double> px(img.pixels.begin(), img.pixels.end());

  if (f.brightness != 1.0) {
    for (auto& v : px) v = clamp_channel(v * f.brightness);
  }
  if (f.contrast != 1.0) {
    double gray_sum = 0.0;
    for (std::size_t i = 0; i < total; ++i) {
      gray_sum += std::floor(luma(px[3 * i], px[3 * i + 1], px[3 * i + 2]) + 0.5);
    }
    const double mean_gray = gray_sum / static_cast<double>(total);
    for (auto& v : px) v = clamp_channel((v - mean_gray) * f.contrast + mean_gray);
  }
  if (f.saturation != 1.0) {
    for (std::size_t i = 0; i < total; ++i) {
      const double gray = luma(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
      for (std::size_t ch = 0; ch < 3; ++ch) {
        px[3 * i + ch] = clamp_channel(gray + (px[3 * i + ch] - gray) * f.saturation);
      }
    }
  }
  if (f.hue_degrees != 0.0) {
    for (std::size_t i = 0; i < total; ++i) {
      double h, s, v;
      rgb_to_hsv(px[3 * i], px[3 * i + 1], px[3 * i + 2], h, s, v);
      h = std::fmod(h + f.hue_degrees, 360.0);
      if (h < 0.0) h += 360.0;
      hsv_to_rgb(h, s, v, px[3 * i], px[3 * i + 1], px[3 * i + 2]);
    }
  }

  ImageBuffer out = img;
  for (std::size_t i = 0; i < px.size(); ++i) out.pixels[i] = round_half_up(px[i]);
  return out;
}

JitterFactors sample_jitter(const ColorJitter& jitter, std::uint64_t seed) {
  validate_jitter(jitter);
  Rng rng(seed);
  auto draw = [&rng](const JitterRange& r) { return r.is_fixed() ? r.lo : rng.uniform(r.lo, r.hi); };
  JitterFactors f;
  f.brightness = draw(jitter.brightness);
  f.contrast = draw(jitter.contrast);
  f.saturation = draw(jitter.saturation);
  f.hue_degrees = draw(jitter.hue_degrees);
  return f;
}

ImageBuffer color_jitter(const ImageBuffer& img, const ColorJitter& jitter, std::uint64_t seed) {
  return color_jitter(img, sample_jitter(jitter, seed));
}

ImageBuffer apply(const AugmentationSpec& spec, const ImageBuffer& img, std::uint64_t run_seed,
                  std::uint64_t stream) {
  spec.validate();
  img.validate();
  ImageBuffer out = img;
  for (std::size_t i = 0; i < spec.ops.size(); ++i) {
    out = std::visit(
        [&](const auto& op) -> ImageBuffer {
          using T = std::decay_t<decltype(op)>;
          if constexpr (std::is_same_v<T, HFlip>) {
            return hflip(out);
          } else if constexpr (std::is_same_v<T, VFlip>) {
            return vflip(out);
          } else if constexpr (std::is_same_v<T, Equalize>) {
            return equalize(out);
          } else if constexpr (std::is_same_v<T, Invert>) {
            return invert(out);
          } else {
            const auto seed = mix_seed(mix_seed(op.seed.value_or(run_seed), stream), i);
            return color_jitter(out, op, seed);
          }
        },
        spec.ops[i]);
  }
  return out;
}

}  // namespace ttaood
