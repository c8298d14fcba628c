#pragma once

#include <string>

#include "gridpv/image.hpp"

namespace gridpv {

/// Reads an 8-bit PNG with 1 or 3 channels. Anything else (16-bit, palette,
/// alpha) is rejected with an Error naming the offending property.
ImageU8 read_png(const std::string& path);

/// Writes an 8-bit PNG; image must have 1 or 3 channels.
void write_png(const std::string& path, const ImageU8& image);

}  // namespace gridpv
