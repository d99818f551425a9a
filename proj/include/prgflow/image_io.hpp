#pragma once

#include <filesystem>

#include "prgflow/image.hpp"

namespace prgflow {

// PNG (8/16-bit gray, gray+alpha, RGB, RGBA) and JPEG. Alpha is dropped; 8-bit
// channels map to k / 255.
ImagePlane read_image(const std::filesystem::path& path);

// Writes 1- or 3-channel 8-bit PNG; intensities are rounded to k / 255.
void write_png(const std::filesystem::path& path, const ImagePlane& img);

}  // namespace prgflow
