#pragma once

#include <cstdint>
#include <vector>

namespace gridpv {

/// 8-bit raster patch, row-major, channel-interleaved.
struct ImageU8 {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;

    ImageU8() = default;
    ImageU8(int w, int h, int c, std::uint8_t fill = 0)
        : width(w), height(h), channels(c),
          pixels(std::size_t(w) * std::size_t(h) * std::size_t(c), fill) {}

    std::uint8_t& at(int x, int y, int c) {
        return pixels[(std::size_t(y) * width + x) * channels + c];
    }
    std::uint8_t at(int x, int y, int c) const {
        return pixels[(std::size_t(y) * width + x) * channels + c];
    }

    bool same_shape(const ImageU8& other) const {
        return width == other.width && height == other.height && channels == other.channels;
    }

    bool operator==(const ImageU8& other) const {
        return same_shape(other) && pixels == other.pixels;
    }
};

/// Per-pixel validity mask, one byte per pixel, 255 = valid (the on-disk
/// convention); any nonzero byte counts as set in memory.
using MaskU8 = std::vector<std::uint8_t>;

inline std::size_t mask_count(const MaskU8& mask) {
    std::size_t n = 0;
    for (auto b : mask) n += (b != 0);
    return n;
}

}  // namespace gridpv
