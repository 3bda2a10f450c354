#pragma once

#include <filesystem>

#include "ttaood/augment.hpp"

namespace ttaood {

// Decodes PNG or JPEG (detected from the file signature) into 8-bit RGB.
// Alpha is dropped, grayscale is expanded, 16-bit PNG is reduced to 8 bits.
ImageBuffer read_image(const std::filesystem::path& path);

// Always lossless PNG, 8-bit RGB.
void write_png(const std::filesystem::path& path, const ImageBuffer& img);

bool is_image_file(const std::filesystem::path& path);

}  // namespace ttaood
