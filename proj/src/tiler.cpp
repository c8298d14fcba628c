#include "gridpv/tiler.hpp"

#include <algorithm>

#include "gridpv/common.hpp"

namespace gridpv {

std::vector<GridTile> tile(const RooftopImage& rooftop, int g, double min_coverage) {
    if (g < 8) throw Error("tiler.tile", "grid size must be >= 8, got " + std::to_string(g));
    if (!(min_coverage > 0.0 && min_coverage <= 1.0))
        throw Error("tiler.tile", "min_coverage must be in (0, 1]");
    const int w = rooftop.pixels.width;
    const int h = rooftop.pixels.height;
    if (w < 1 || h < 1)
        throw Error("tiler.tile", "rooftop '" + rooftop.rooftop_id + "' smaller than 1x1");
    if (rooftop.valid_mask.size() != std::size_t(w) * h)
        throw Error("tiler.tile", "mask/pixel shape mismatch for '" + rooftop.rooftop_id + "'");

    const int rows = (h + g - 1) / g;
    const int cols = (w + g - 1) / g;
    const double cell_area = double(g) * double(g);

    std::vector<GridTile> tiles;
    for (int tr = 0; tr < rows; ++tr) {
        for (int tc = 0; tc < cols; ++tc) {
            const int y0 = tr * g;
            const int x0 = tc * g;

            std::size_t valid = 0;
            for (int y = y0; y < std::min(y0 + g, h); ++y)
                for (int x = x0; x < std::min(x0 + g, w); ++x)
                    valid += (rooftop.valid_mask[std::size_t(y) * w + x] != 0);
            const double coverage = double(valid) / cell_area;
            if (coverage < min_coverage) continue;

            GridTile out;
            out.rooftop_id = rooftop.rooftop_id;
            out.row = tr;
            out.col = tc;
            out.coverage = coverage;
            out.pixels = ImageU8(g, g, 3);
            for (int y = 0; y < g; ++y) {
                const int sy = std::min(y0 + y, h - 1);
                for (int x = 0; x < g; ++x) {
                    const int sx = std::min(x0 + x, w - 1);
                    const bool keep = rooftop.valid_mask[std::size_t(sy) * w + sx] != 0;
                    for (int ch = 0; ch < 3; ++ch)
                        out.pixels.at(x, y, ch) = keep ? rooftop.pixels.at(sx, sy, ch) : 0;
                }
            }
            tiles.push_back(std::move(out));
        }
    }
    if (tiles.empty())
        throw Error("tiler.tile", "no usable grids for rooftop '" + rooftop.rooftop_id +
                                      "' at g=" + std::to_string(g));
    return tiles;
}

}  // namespace gridpv
