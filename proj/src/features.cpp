#include "gridpv/features.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "gridpv/common.hpp"

namespace gridpv {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "feature payloads are little-endian; big-endian hosts need byte swaps");

std::string ExtractorSpec::id() const {
    switch (kind) {
        case ExtractorKind::Baseline:
            return "baseline";
        case ExtractorKind::PrecomputedFile:
            return "precomputed";
        case ExtractorKind::ExternalModel:
            return "onnx:" + model_path;
    }
    return "unknown";
}

ImageU8 resize_bilinear(const ImageU8& image, int out_w, int out_h) {
    if (image.width < 1 || image.height < 1 || out_w < 1 || out_h < 1)
        throw Error("features.resize_bilinear", "dimensions must be >= 1");
    if (out_w == image.width && out_h == image.height) return image;

    ImageU8 out(out_w, out_h, image.channels);
    const double sx = double(image.width) / out_w;
    const double sy = double(image.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        double src_y = (y + 0.5) * sy - 0.5;
        src_y = std::clamp(src_y, 0.0, double(image.height - 1));
        const int y0 = int(src_y);
        const int y1 = std::min(y0 + 1, image.height - 1);
        const double wy = src_y - y0;
        for (int x = 0; x < out_w; ++x) {
            double src_x = (x + 0.5) * sx - 0.5;
            src_x = std::clamp(src_x, 0.0, double(image.width - 1));
            const int x0 = int(src_x);
            const int x1 = std::min(x0 + 1, image.width - 1);
            const double wx = src_x - x0;
            for (int c = 0; c < image.channels; ++c) {
                const double v = (1 - wy) * ((1 - wx) * image.at(x0, y0, c) + wx * image.at(x1, y0, c)) +
                                 wy * ((1 - wx) * image.at(x0, y1, c) + wx * image.at(x1, y1, c));
                out.at(x, y, c) = std::uint8_t(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    }
    return out;
}

namespace {

constexpr double kPi = 3.14159265358979323846;

inline double luminance(const ImageU8& img, int x, int y) {
    return (0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2)) / 255.0;
}

}  // namespace

FeatureVector extract_baseline(const ImageU8& tile) {
    if (tile.channels != 3) throw Error("features.extract_baseline", "tile must have 3 channels");
    const int w = tile.width, h = tile.height;
    if (w < 1 || h < 1) throw Error("features.extract_baseline", "empty tile");
    const double n = double(w) * h;

    std::array<double, 3> mean{}, var{};
    for (int c = 0; c < 3; ++c) {
        double s = 0, s2 = 0;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double v = tile.at(x, y, c) / 255.0;
                s += v;
                s2 += v * v;
            }
        }
        mean[c] = s / n;
        var[c] = std::max(0.0, s2 / n - mean[c] * mean[c]);
    }

    // Luminance plane once; gradients via central differences with clamped
    // borders.
    std::vector<double> lum(std::size_t(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) lum[std::size_t(y) * w + x] = luminance(tile, x, y);
    auto L = [&](int x, int y) {
        return lum[std::size_t(std::clamp(y, 0, h - 1)) * w + std::clamp(x, 0, w - 1)];
    };

    std::array<double, 8> orient_hist{};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double gx = (L(x + 1, y) - L(x - 1, y)) / 2.0;
            const double gy = (L(x, y + 1) - L(x, y - 1)) / 2.0;
            const double mag = std::sqrt(gx * gx + gy * gy);
            if (mag == 0.0) continue;
            double theta = std::atan2(gy, gx);
            if (theta < 0) theta += kPi;
            if (theta >= kPi) theta -= kPi;
            int bin = std::min(7, int(theta / kPi * 8.0));
            orient_hist[bin] += mag;
        }
    }
    double orient_total = 0;
    for (double v : orient_hist) orient_total += v;
    if (orient_total > 0)
        for (double& v : orient_hist) v /= orient_total;

    std::array<double, 8> intensity_hist{};
    for (double v : lum) intensity_hist[std::min(7, int(v * 8.0))] += 1.0;
    for (double& v : intensity_hist) v /= n;

    FeatureVector out;
    out.reserve(kBaselineDim);
    for (int c = 0; c < 3; ++c) out.push_back(float(mean[c]));
    for (int c = 0; c < 3; ++c) out.push_back(float(std::sqrt(var[c])));
    for (double v : orient_hist) out.push_back(float(v));
    for (double v : intensity_hist) out.push_back(float(v));
    return out;
}

void save_features(const std::vector<LocalFeatureSet>& sets, const std::string& path,
                   const std::string& city, const std::string& extractor_id) {
    std::size_t dim = 0;
    for (const auto& set : sets) {
        if (set.vectors.empty())
            throw Error("features.save_features", "rooftop '" + set.rooftop_id + "' has no vectors");
        for (const auto& v : set.vectors) {
            if (dim == 0) dim = v.size();
            if (v.size() != dim)
                throw Error("features.save_features",
                            "non-uniform dimension in rooftop '" + set.rooftop_id + "'");
        }
    }

    json header;
    header["version"] = 1;
    header["city"] = city;
    header["extractor"] = extractor_id;
    header["dim"] = dim;
    json rooftops = json::array();
    for (const auto& set : sets) {
        json r;
        r["id"] = set.rooftop_id;
        r["label"] = set.label ? json(label_name(*set.label)) : json(nullptr);
        r["count"] = set.vectors.size();
        rooftops.push_back(std::move(r));
    }
    header["rooftops"] = std::move(rooftops);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("features.save_features", "cannot open " + path);
    out << header.dump() << '\n';
    for (const auto& set : sets)
        for (const auto& v : set.vectors)
            out.write(reinterpret_cast<const char*>(v.data()),
                      std::streamsize(v.size() * sizeof(float)));
    if (!out) throw Error("features.save_features", "write failed: " + path);
}

std::vector<LocalFeatureSet> load_features(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("features.load_features", "cannot open " + path);
    std::string header_line;
    if (!std::getline(in, header_line))
        throw Error("features.load_features", "missing header: " + path);

    json header;
    try {
        header = json::parse(header_line);
    } catch (const json::exception&) {
        throw Error("features.load_features", "invalid header (bad magic bytes?): " + path);
    }
    if (!header.is_object() || header.value("version", -1) != 1)
        throw Error("features.load_features", "unsupported feature file version in " + path);

    const std::size_t dim = header.at("dim").get<std::size_t>();
    const std::string city = header.value("city", "");

    std::vector<LocalFeatureSet> sets;
    for (const auto& r : header.at("rooftops")) {
        LocalFeatureSet set;
        set.rooftop_id = r.at("id").get<std::string>();
        set.city_id = city;
        if (!r.at("label").is_null()) set.label = parse_label(r.at("label").get<std::string>());
        const std::size_t count = r.at("count").get<std::size_t>();
        if (count == 0)
            throw Error("features.load_features",
                        "rooftop '" + set.rooftop_id + "' declares zero vectors");
        set.vectors.assign(count, FeatureVector(dim));
        for (auto& v : set.vectors) {
            in.read(reinterpret_cast<char*>(v.data()), std::streamsize(dim * sizeof(float)));
            if (std::size_t(in.gcount()) != dim * sizeof(float))
                throw Error("features.load_features", "truncated payload in " + path);
        }
        sets.push_back(std::move(set));
    }
    // Index must account for the whole payload.
    char extra;
    if (in.read(&extra, 1))
        throw Error("features.load_features", "payload longer than index in " + path);
    return sets;
}

}  // namespace gridpv
