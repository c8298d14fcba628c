#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gridpv/image.hpp"

namespace gridpv {

enum class Label { NoPV = 0, WithPV = 1 };

inline const char* label_name(Label l) { return l == Label::WithPV ? "with_pv" : "no_pv"; }
Label parse_label(const std::string& s);

/// Affine pixel->world transform: x' = a*col + b*row + c, y' = d*col + e*row + f.
struct GeoTransform {
    double a = 1, b = 0, c = 0;
    double d = 0, e = 1, f = 0;

    void apply(double col, double row, double& x, double& y) const {
        x = a * col + b * row + c;
        y = d * col + e * row + f;
    }

    double det() const { return a * e - b * d; }

    /// Maps world (x, y) back to pixel (col, row). Transform must be invertible.
    void invert(double x, double y, double& col, double& row) const;
};

struct GeoRaster {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<std::uint8_t> pixels;  // row-major, channel-interleaved
    GeoTransform transform;

    std::uint8_t at(int col, int row, int ch) const {
        return pixels[(std::size_t(row) * width + col) * channels + ch];
    }
};

struct Point {
    double x = 0, y = 0;
};

/// One ring per entry; first ring is the exterior, the rest are holes.
/// Rings are closed (first vertex repeated last).
using Ring = std::vector<Point>;

struct FootprintEntry {
    std::string rooftop_id;
    std::vector<Ring> rings;
};

struct FootprintSet {
    std::vector<FootprintEntry> entries;
};

struct RooftopImage {
    std::string rooftop_id;
    std::string city_id;
    ImageU8 pixels;  // cropped to the polygon's pixel bounding box, 3 channels
    MaskU8 valid_mask;
    std::optional<Label> label;
    // Crop origin within the source raster; kept for diagnostics.
    int col0 = 0;
    int row0 = 0;
};

/// Loads an 8-bit 1- or 3-channel PNG plus its world file (<stem>.wld, falling
/// back to <stem>.pgw). World file lines are A, D, B, E, C, F. Grayscale input
/// is replicated to 3 channels.
GeoRaster load_raster(const std::string& path);

/// Parses a GeoJSON FeatureCollection of (Multi)Polygons. Ids come from the
/// feature property "rooftop_id" (fallback: top-level "id"); MultiPolygon
/// parts become separate entries with "#<part>" suffixes.
FootprintSet load_footprints(const std::string& path);

/// Even-odd test over all rings, with points exactly on an edge counting as
/// inside.
bool point_in_polygon(const std::vector<Ring>& rings, double x, double y);

/// Clips the raster to the footprint's pixel bounding box and rasterizes the
/// validity mask by testing pixel centers against the polygon.
RooftopImage clip_rooftop(const GeoRaster& raster, const FootprintEntry& footprint);

}  // namespace gridpv
