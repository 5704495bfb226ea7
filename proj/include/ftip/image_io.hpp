#pragma once

#include "ftip/geometry.hpp"

#include <filesystem>

namespace ftip {

// 8-bit RGB PNG. Values are quantized as round(v * 255).
void write_png(const std::filesystem::path& path, const geometry::Image& img);
geometry::Image read_png(const std::filesystem::path& path);

// The same quantization write_png applies, without touching disk.
geometry::Image quantize8(const geometry::Image& img);

}  // namespace ftip
