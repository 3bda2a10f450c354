#include "ttaood/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>
#include <string>

// jpeglib.h needs FILE and size_t declared first.
#include <jpeglib.h>

#include "ttaood/binary_io.hpp"
#include "ttaood/error.hpp"

namespace ttaood {
namespace fs = std::filesystem;
namespace {

bool has_png_signature(const std::vector<char>& bytes) {
  static constexpr unsigned char kSig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  return bytes.size() >= 8 && std::memcmp(bytes.data(), kSig, 8) == 0;
}

bool has_jpeg_signature(const std::vector<char>& bytes) {
  return bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
         static_cast<unsigned char>(bytes[1]) == 0xD8 && static_cast<unsigned char>(bytes[2]) == 0xFF;
}

ImageBuffer decode_png(const std::vector<char>& bytes, const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw DataError("unreadable PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  ImageBuffer out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  // Opaque black background for any alpha channel.
  png_color background{0, 0, 0};
  if (!png_image_finish_read(&image, &background, out.pixels.data(), 0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    throw DataError("unreadable PNG " + path.string() + ": " + message);
  }
  out.validate();
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

// Kept free of C++ objects with destructors because of the longjmp.
bool decode_jpeg_raw(const std::vector<char>& bytes, std::vector<std::uint8_t>& pixels, int& width,
                     int& height, char* message) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    std::memcpy(message, err.message, JMSG_LENGTH_MAX);
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, reinterpret_cast<const unsigned char*>(bytes.data()),
               static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  width = static_cast<int>(cinfo.output_width);
  height = static_cast<int>(cinfo.output_height);
  const std::size_t stride = static_cast<std::size_t>(width) * 3;
  pixels.resize(stride * static_cast<std::size_t>(height));
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = pixels.data() + stride * cinfo.output_scanline;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

ImageBuffer decode_jpeg(const std::vector<char>& bytes, const fs::path& path) {
  ImageBuffer out;
  char message[JMSG_LENGTH_MAX] = {};
  if (!decode_jpeg_raw(bytes, out.pixels, out.width, out.height, message)) {
    throw DataError("unreadable JPEG " + path.string() + ": " + message);
  }
  out.validate();
  return out;
}

}  // namespace

ImageBuffer read_image(const fs::path& path) {
  const auto bytes = binio::read_file(path);
  if (has_png_signature(bytes)) return decode_png(bytes, path);
  if (has_jpeg_signature(bytes)) return decode_jpeg(bytes, path);
  throw DataError("unsupported image format: " + path.string());
}

void write_png(const fs::path& path, const ImageBuffer& img) {
  img.validate();
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(image, size, 0, img.pixels.data(), 0, nullptr)) {
    throw DataError("PNG encode failed for " + path.string() + ": " + image.message);
  }
  std::vector<char> buffer(size);
  if (!png_image_write_to_memory(&image, buffer.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
    throw DataError("PNG encode failed for " + path.string() + ": " + image.message);
  }
  buffer.resize(size);
  binio::write_file(path, buffer);
}

bool is_image_file(const fs::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace ttaood
