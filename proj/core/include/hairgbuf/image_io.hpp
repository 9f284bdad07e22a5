#pragma once

#include <filesystem>

#include "hairgbuf/tensor_image.hpp"

namespace hairgbuf {

/// Writes a little-endian PFM (scale -1.0), rows stored bottom to top.
///
/// One channel uses the "Pf" magic and three channels use "PF". Any other
/// channel count uses the "PX" extension, whose dimension line carries a third
/// integer with the channel count.
void write_pfm(const std::filesystem::path& path, const TensorImage& image);
TensorImage read_pfm(const std::filesystem::path& path);

/// 8-bit PNG for visualization. Values are clamped to [0,1]; 1, 3 or 4 channels.
void write_png(const std::filesystem::path& path, const TensorImage& image);

}  // namespace hairgbuf
