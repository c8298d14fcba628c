#pragma once

#include <string>
#include <vector>

#include "gridpv/geodata.hpp"

namespace gridpv {

/// One g x g cell of the non-overlapping tiling lattice over a rooftop crop.
struct GridTile {
    std::string rooftop_id;
    int row = 0;  // lattice index, not pixels
    int col = 0;
    ImageU8 pixels;   // g x g x 3
    double coverage = 0;  // valid-mask fraction of the cell before padding
};

/// Tiles the rooftop crop with a lattice anchored at the crop origin and
/// stride g. Edge cells are padded to g x g by replicating the last valid
/// row/column; cells with coverage below min_coverage are dropped; masked-out
/// pixels in surviving tiles are zeroed. Tiles come back in row-major order.
/// Throws when no tile survives the coverage filter.
std::vector<GridTile> tile(const RooftopImage& rooftop, int g, double min_coverage);

}  // namespace gridpv
