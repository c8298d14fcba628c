#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "gridpv/geodata.hpp"
#include "gridpv/image.hpp"

namespace gridpv {

/// Local features are stored as 32-bit floats; all downstream math runs in
/// 64-bit.
using FeatureVector = std::vector<float>;

struct LocalFeatureSet {
    std::string rooftop_id;
    std::string city_id;
    std::vector<FeatureVector> vectors;  // one per kept tile, tile order
    std::optional<Label> label;
};

enum class ExtractorKind { Baseline, PrecomputedFile, ExternalModel };

struct ExtractorSpec {
    ExtractorKind kind = ExtractorKind::Baseline;
    /// Side length images are resized to before extraction; 0 = keep native
    /// size (Baseline accepts any size).
    int input_size = 0;
    std::string model_path;
    /// Per-channel (value * scale + offset) applied before external inference.
    std::array<double, 3> norm_scale{1.0 / 255.0, 1.0 / 255.0, 1.0 / 255.0};
    std::array<double, 3> norm_offset{0.0, 0.0, 0.0};

    std::string id() const;
};

/// Bilinear resize with half-pixel-center alignment; bytes are rounded to
/// nearest and clamped to [0, 255].
ImageU8 resize_bilinear(const ImageU8& image, int out_w, int out_h);

constexpr int kBaselineDim = 22;

/// Built-in 22-dim tile descriptor over pixels scaled to [0, 1]:
/// per-channel mean (3), per-channel population std (3), 8-bin
/// gradient-orientation histogram of luminance over [0, pi) weighted by
/// magnitude, and an 8-bin luminance intensity histogram. Both histograms are
/// L1-normalized; an all-zero histogram stays zero.
FeatureVector extract_baseline(const ImageU8& tile);

/// Feature file: one JSON header line
///   {"version":1,"city":...,"extractor":...,"dim":D,
///    "rooftops":[{"id":...,"label":...,"count":n},...]}
/// followed by sum(n_i)*D little-endian 32-bit floats in rooftop order,
/// tile order within each rooftop.
void save_features(const std::vector<LocalFeatureSet>& sets, const std::string& path,
                   const std::string& city, const std::string& extractor_id);
std::vector<LocalFeatureSet> load_features(const std::string& path);

}  // namespace gridpv
