#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gridpv/common.hpp"
#include "gridpv/dataset.hpp"
#include "gridpv/geodata.hpp"
#include "gridpv/image.hpp"

namespace gridpv {

/// Style knobs for one synthetic city. Hue/texture/panel geometry differ per
/// city to stand in for real-world appearance shift between regions.
struct CitySpec {
    std::string name;
    int n_with_pv = 0;
    int n_no_pv = 0;
    double hue_min = 15;          // roof hue range, degrees
    double hue_max = 40;
    double texture_scale = 16;    // pixels per texture noise cell
    int panel_count_min = 1;
    int panel_count_max = 3;
    int panel_cell = 6;           // panel cell-grid pitch, pixels
    double noise_sigma = 4;
    int size_min = 96;
    int size_max = 160;
    double train_fraction = 0.7;
    std::uint64_t seed = 0;

    void validate() const;
};

struct RenderedRooftop {
    ImageU8 image;
    MaskU8 mask;
    // x, y, w, h of every rendered panel, in pixels
    std::vector<std::array<int, 4>> panel_rects;
};

/// Renders rooftop `index` of the city. The roof itself (size, footprint,
/// colors, texture, clutter, pixel noise) depends only on (spec, index); the
/// panel pass draws from a separate seed stream, so a with_pv render and a
/// no_pv render of the same index differ exactly inside the panel rectangles.
RenderedRooftop render_rooftop(const CitySpec& spec, std::size_t index, bool with_pv);

/// Writes the prepared-dataset layout (images/, masks/, labels.csv,
/// splits.csv with a seeded stratified split) under out_dir/<name> and
/// returns the same dataset in memory.
CityDataset generate_city(const CitySpec& spec, const std::string& out_dir);

struct AugmentationOp {
    enum class Kind { HFlip, VFlip, RandomCrop, GammaContrast, GaussianBlur,
                      Brightness, Rotate, Shear };
    Kind kind = Kind::HFlip;
    // gamma | sigma | brightness delta | degrees | shear degrees | kept area fraction
    double amount = 0;
    std::uint64_t seed = 0;  // crop placement

    void validate() const;
};

struct MaskedImage {
    ImageU8 image;
    MaskU8 mask;
};

MaskedImage augment(const MaskedImage& input, const AugmentationOp& op);
MaskedImage augment_chain(const MaskedImage& input, const std::vector<AugmentationOp>& ops);

/// Draws a random augmentation chain (1..3 ops, parameters within the
/// documented ranges) from rng.
std::vector<AugmentationOp> random_augmentation_chain(Rng& rng);

/// Duplicates minority-class training rooftops with random augmentation
/// chains until both classes have equal training counts. Copies get ids
/// "<base>_augN" and never touch the test split. If an augmented mask comes
/// out empty the draw is retried once, then falls back to a horizontal flip.
void balance_minority(CityDataset& city, std::uint64_t seed);

/// One channel blurred with the truncated Gaussian kernel (radius = ceil(3
/// sigma), edge-clamped), kept in doubles; the image op quantizes this.
std::vector<double> blur_plane(const std::vector<double>& values, int width, int height,
                               double sigma);

}  // namespace gridpv
