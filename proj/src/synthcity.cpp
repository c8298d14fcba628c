#include "gridpv/synthcity.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

#include "gridpv/features.hpp"
#include "gridpv/png_io.hpp"

namespace gridpv {

void CitySpec::validate() const {
    if (name.empty()) throw Error("CitySpec", "city name is empty");
    if (n_with_pv < 0 || n_no_pv < 0) throw Error("CitySpec", "negative rooftop count");
    if (hue_max < hue_min) throw Error("CitySpec", "empty hue range");
    if (texture_scale <= 0) throw Error("CitySpec", "texture_scale must be positive");
    if (panel_count_min < 1 || panel_count_max < panel_count_min)
        throw Error("CitySpec", "empty panel count range");
    if (panel_cell < 2) throw Error("CitySpec", "panel_cell must be at least 2");
    if (noise_sigma < 0) throw Error("CitySpec", "negative noise_sigma");
    if (size_min < 32 || size_max < size_min) throw Error("CitySpec", "empty size range");
    if (train_fraction <= 0 || train_fraction >= 1)
        throw Error("CitySpec", "train_fraction must be in (0,1)");
}

// ---------------------------------------------------------------------------
// rendering

namespace {

struct Rgb {
    double r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
    h = std::fmod(h, 360.0);
    if (h < 0) h += 360.0;
    double c = v * s;
    double hp = h / 60.0;
    double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (int(hp)) {
        case 0: r = c; g = x; break;
        case 1: r = x; g = c; break;
        case 2: g = c; b = x; break;
        case 3: g = x; b = c; break;
        case 4: r = x; b = c; break;
        default: r = c; b = x; break;
    }
    double m = v - c;
    return {r + m, g + m, b + m};
}

std::uint8_t clamp_u8(double v) {
    return std::uint8_t(std::clamp(std::lround(v), 0L, 255L));
}

// smooth bilinear value noise on a lattice of `scale`-pixel cells
struct ValueNoise {
    int nodes_x, nodes_y;
    double scale;
    std::vector<double> nodes;

    ValueNoise(int width, int height, double scale_, Rng& rng) : scale(scale_) {
        nodes_x = int(std::ceil(width / scale)) + 2;
        nodes_y = int(std::ceil(height / scale)) + 2;
        nodes.resize(std::size_t(nodes_x) * std::size_t(nodes_y));
        for (double& n : nodes) n = rng.uniform(-1.0, 1.0);
    }

    double at(double x, double y) const {
        double gx = x / scale, gy = y / scale;
        int ix = int(gx), iy = int(gy);
        double fx = gx - ix, fy = gy - iy;
        fx = fx * fx * (3 - 2 * fx);
        fy = fy * fy * (3 - 2 * fy);
        auto node = [&](int nx, int ny) {
            nx = std::clamp(nx, 0, nodes_x - 1);
            ny = std::clamp(ny, 0, nodes_y - 1);
            return nodes[std::size_t(ny) * std::size_t(nodes_x) + std::size_t(nx)];
        };
        double top = node(ix, iy) * (1 - fx) + node(ix + 1, iy) * fx;
        double bot = node(ix, iy + 1) * (1 - fx) + node(ix + 1, iy + 1) * fx;
        return top * (1 - fy) + bot * fy;
    }
};

void fill_rect(ImageU8& img, int x0, int y0, int w, int h, Rgb color) {
    for (int y = y0; y < y0 + h; ++y)
        for (int x = x0; x < x0 + w; ++x) {
            std::size_t at = (std::size_t(y) * std::size_t(img.width) + std::size_t(x)) * 3;
            img.pixels[at] = clamp_u8(color.r * 255);
            img.pixels[at + 1] = clamp_u8(color.g * 255);
            img.pixels[at + 2] = clamp_u8(color.b * 255);
        }
}

// convex pentagon: margin-inset rectangle with one corner cut off
Ring make_footprint(int width, int height, Rng& rng) {
    double m = 2.0 + rng.uniform(0.0, 3.0);
    double x0 = m, y0 = m, x1 = width - m, y1 = height - m;
    int corner = int(rng.uniform_int(4));
    double cx = rng.uniform(0.15, 0.35) * (x1 - x0);
    double cy = rng.uniform(0.15, 0.35) * (y1 - y0);

    Ring ring;
    switch (corner) {
        case 0:  // top-left
            ring = {{x0 + cx, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0 + cy}, {x0 + cx, y0}};
            break;
        case 1:  // top-right
            ring = {{x0, y0}, {x1 - cx, y0}, {x1, y0 + cy}, {x1, y1}, {x0, y1}, {x0, y0}};
            break;
        case 2:  // bottom-right
            ring = {{x0, y0}, {x1, y0}, {x1, y1 - cy}, {x1 - cx, y1}, {x0, y1}, {x0, y0}};
            break;
        default:  // bottom-left
            ring = {{x0, y0}, {x1, y0}, {x1, y1}, {x0 + cx, y1}, {x0, y1 - cy}, {x0, y0}};
            break;
    }
    return ring;
}

}  // namespace

RenderedRooftop render_rooftop(const CitySpec& spec, std::size_t index, bool with_pv) {
    spec.validate();
    // Everything the roof shares between the two labels comes from this
    // stream; panels use their own so the shared pixels match exactly.
    Rng rng(derive_seed(spec.seed, index * 2));
    Rng panel_rng(derive_seed(spec.seed, index * 2 + 1));

    int width = rng.uniform_int(spec.size_min, spec.size_max);
    int height = rng.uniform_int(spec.size_min, spec.size_max);

    RenderedRooftop out;
    out.image.width = width;
    out.image.height = height;
    out.image.channels = 3;
    out.image.pixels.assign(std::size_t(width) * std::size_t(height) * 3, 24);

    std::vector<Ring> footprint{make_footprint(width, height, rng)};
    out.mask.assign(std::size_t(width) * std::size_t(height), 0);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            if (point_in_polygon(footprint, x + 0.5, y + 0.5))
                out.mask[std::size_t(y) * std::size_t(width) + std::size_t(x)] = 255;

    double hue = rng.uniform(spec.hue_min, spec.hue_max);
    double sat = rng.uniform(0.18, 0.45);
    double val = rng.uniform(0.45, 0.78);
    ValueNoise texture(width, height, spec.texture_scale, rng);

    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            if (!out.mask[std::size_t(y) * std::size_t(width) + std::size_t(x)]) continue;
            double v = std::clamp(val + 0.12 * texture.at(x, y), 0.05, 1.0);
            Rgb c = hsv_to_rgb(hue, sat, v);
            std::size_t at = (std::size_t(y) * std::size_t(width) + std::size_t(x)) * 3;
            out.image.pixels[at] = clamp_u8(c.r * 255);
            out.image.pixels[at + 1] = clamp_u8(c.g * 255);
            out.image.pixels[at + 2] = clamp_u8(c.b * 255);
        }

    // roof clutter (vents, shadows) in both classes, so "dark rectangle
    // present" alone is not the label
    int n_clutter = int(rng.uniform_int(0, 2));
    for (int i = 0; i < n_clutter; ++i) {
        int cw = int(rng.uniform_int(4, 10));
        int ch = int(rng.uniform_int(4, 10));
        int cx = int(rng.uniform_int(4, std::max(5, width - cw - 4)));
        int cy = int(rng.uniform_int(4, std::max(5, height - ch - 4)));
        double dark = rng.uniform(0.12, 0.3);
        fill_rect(out.image, cx, cy, cw, ch, {dark, dark, dark * 1.1});
    }

    // correlated per-pixel grain over the roof
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            double n = rng.normal() * spec.noise_sigma;
            if (!out.mask[std::size_t(y) * std::size_t(width) + std::size_t(x)]) continue;
            std::size_t at = (std::size_t(y) * std::size_t(width) + std::size_t(x)) * 3;
            for (int c = 0; c < 3; ++c)
                out.image.pixels[at + std::size_t(c)] =
                    clamp_u8(double(out.image.pixels[at + std::size_t(c)]) + n);
        }

    if (!with_pv) return out;

    // Panels: homogeneous dark modules with a light cell grid, placed with
    // all four corners inside the (convex) footprint.
    int count = panel_rng.uniform_int(spec.panel_count_min, spec.panel_count_max);
    for (int p = 0; p < count; ++p) {
        int cols = panel_rng.uniform_int(2, 4);
        int rows = panel_rng.uniform_int(1, 3);
        double base_b = panel_rng.uniform(0.32, 0.44);
        double base_g = panel_rng.uniform(0.16, 0.24);
        double base_r = panel_rng.uniform(0.08, 0.14);

        for (int attempt = 0; attempt < 24; ++attempt) {
            int pw = cols * spec.panel_cell + 1;
            int ph = rows * spec.panel_cell + 1;
            if (pw >= width - 8 || ph >= height - 8) {
                if (cols > 1) --cols;
                if (rows > 1) --rows;
                continue;
            }
            int px = panel_rng.uniform_int(4, width - pw - 4);
            int py = panel_rng.uniform_int(4, height - ph - 4);
            bool inside = point_in_polygon(footprint, px + 0.5, py + 0.5) &&
                          point_in_polygon(footprint, px + pw - 0.5, py + 0.5) &&
                          point_in_polygon(footprint, px + 0.5, py + ph - 0.5) &&
                          point_in_polygon(footprint, px + pw - 0.5, py + ph - 0.5);
            if (!inside) {
                // shrink every few failures so cramped footprints still fit one
                if (attempt % 6 == 5 && (cols > 1 || rows > 1)) {
                    if (cols > 1) --cols;
                    else if (rows > 1) --rows;
                }
                continue;
            }

            fill_rect(out.image, px, py, pw, ph, {base_r, base_g, base_b});
            Rgb grid{base_r + 0.25, base_g + 0.25, base_b + 0.25};
            for (int gx = 0; gx <= cols; ++gx)
                fill_rect(out.image, px + gx * spec.panel_cell, py, 1, ph, grid);
            for (int gy = 0; gy <= rows; ++gy)
                fill_rect(out.image, px, py + gy * spec.panel_cell, pw, 1, grid);
            out.panel_rects.push_back({px, py, pw, ph});
            break;
        }
    }
    if (out.panel_rects.empty()) {
        // guaranteed fallback: one cell in the middle of the footprint
        int pw = spec.panel_cell + 1, ph = spec.panel_cell + 1;
        int px = width / 2 - pw / 2, py = height / 2 - ph / 2;
        fill_rect(out.image, px, py, pw, ph, {0.1, 0.2, 0.38});
        out.panel_rects.push_back({px, py, pw, ph});
    }
    return out;
}

CityDataset generate_city(const CitySpec& spec, const std::string& out_dir) {
    spec.validate();
    namespace fs = std::filesystem;
    fs::path root = fs::path(out_dir) / spec.name;
    std::error_code ec;
    fs::create_directories(root / "images", ec);
    fs::create_directories(root / "masks", ec);
    if (!fs::is_directory(root / "images") || !fs::is_directory(root / "masks"))
        throw Error("generate_city", "cannot create output directory '" + root.string() + "'");

    const int total = spec.n_with_pv + spec.n_no_pv;
    std::vector<RooftopImage> rooftops;
    std::vector<Label> labels;
    for (int i = 0; i < total; ++i) {
        bool with_pv = i < spec.n_with_pv;
        RenderedRooftop rendered = render_rooftop(spec, std::size_t(i), with_pv);
        char id[64];
        std::snprintf(id, sizeof(id), "%s_r%03d", spec.name.c_str(), i);

        RooftopImage roof;
        roof.rooftop_id = id;
        roof.city_id = spec.name;
        roof.pixels = std::move(rendered.image);
        roof.valid_mask = std::move(rendered.mask);
        roof.label = with_pv ? Label::WithPV : Label::NoPV;
        rooftops.push_back(std::move(roof));
        labels.push_back(with_pv ? Label::WithPV : Label::NoPV);
    }

    std::vector<Split> splits =
        stratified_split(labels, spec.train_fraction, derive_seed(spec.seed, 0x5011));

    std::vector<std::string> ids;
    for (const RooftopImage& roof : rooftops) ids.push_back(roof.rooftop_id);
    write_city_index(out_dir, spec.name, ids, labels, splits);

    CityDataset city;
    city.city_id = spec.name;
    for (int i = 0; i < total; ++i) {
        write_rooftop(out_dir, spec.name, rooftops[std::size_t(i)]);
        (splits[std::size_t(i)] == Split::Train ? city.train : city.test)
            .push_back(std::move(rooftops[std::size_t(i)]));
    }
    return city;
}

// ---------------------------------------------------------------------------
// augmentation

void AugmentationOp::validate() const {
    switch (kind) {
        case Kind::GammaContrast:
            if (amount <= 0) throw Error("AugmentationOp", "gamma must be positive");
            break;
        case Kind::GaussianBlur:
            if (amount < 0) throw Error("AugmentationOp", "blur sigma must be >= 0");
            break;
        case Kind::Rotate:
            if (std::abs(amount) > 45) throw Error("AugmentationOp", "rotation beyond 45 degrees");
            break;
        case Kind::Shear:
            if (std::abs(amount) > 20) throw Error("AugmentationOp", "shear beyond 20 degrees");
            break;
        case Kind::RandomCrop:
            if (amount < 0.7 || amount > 1.0)
                throw Error("AugmentationOp", "crop must keep at least 70% area");
            break;
        default:
            break;
    }
}

namespace {

MaskedImage flip(const MaskedImage& in, bool horizontal) {
    MaskedImage out = in;
    int w = in.image.width, h = in.image.height;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int sx = horizontal ? w - 1 - x : x;
            int sy = horizontal ? y : h - 1 - y;
            std::size_t dst = std::size_t(y) * std::size_t(w) + std::size_t(x);
            std::size_t src = std::size_t(sy) * std::size_t(w) + std::size_t(sx);
            for (int c = 0; c < 3; ++c) out.image.pixels[dst * 3 + std::size_t(c)] =
                in.image.pixels[src * 3 + std::size_t(c)];
            out.mask[dst] = in.mask[src];
        }
    return out;
}

double sample_clamped(const std::vector<double>& plane, int w, int h, double x, double y) {
    x = std::clamp(x, 0.0, double(w - 1));
    y = std::clamp(y, 0.0, double(h - 1));
    int x0 = int(x), y0 = int(y);
    int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
    double fx = x - x0, fy = y - y0;
    double top = plane[std::size_t(y0) * std::size_t(w) + std::size_t(x0)] * (1 - fx) +
                 plane[std::size_t(y0) * std::size_t(w) + std::size_t(x1)] * fx;
    double bot = plane[std::size_t(y1) * std::size_t(w) + std::size_t(x0)] * (1 - fx) +
                 plane[std::size_t(y1) * std::size_t(w) + std::size_t(x1)] * fx;
    return top * (1 - fy) + bot * fy;
}

// Bilinear warp with edge padding; `map` takes destination (x, y) pixel
// centers to source coordinates.
template <typename MapFn>
MaskedImage warp(const MaskedImage& in, MapFn map) {
    int w = in.image.width, h = in.image.height;
    std::vector<double> planes[4];
    for (int c = 0; c < 3; ++c) {
        planes[c].resize(std::size_t(w) * std::size_t(h));
        for (std::size_t i = 0; i < planes[c].size(); ++i)
            planes[c][i] = in.image.pixels[i * 3 + std::size_t(c)];
    }
    planes[3].resize(std::size_t(w) * std::size_t(h));
    for (std::size_t i = 0; i < planes[3].size(); ++i) planes[3][i] = in.mask[i] ? 255.0 : 0.0;

    MaskedImage out = in;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            auto [sx, sy] = map(double(x), double(y));
            std::size_t at = std::size_t(y) * std::size_t(w) + std::size_t(x);
            for (int c = 0; c < 3; ++c)
                out.image.pixels[at * 3 + std::size_t(c)] =
                    clamp_u8(sample_clamped(planes[c], w, h, sx, sy));
            out.mask[at] = sample_clamped(planes[3], w, h, sx, sy) >= 128.0 ? 255 : 0;
        }
    return out;
}

}  // namespace

std::vector<double> blur_plane(const std::vector<double>& values, int width, int height,
                               double sigma) {
    if (sigma <= 0) return values;
    int radius = int(std::ceil(3.0 * sigma));
    std::vector<double> kernel(std::size_t(2 * radius + 1));
    double total = 0;
    for (int i = -radius; i <= radius; ++i) {
        double v = std::exp(-0.5 * double(i) * double(i) / (sigma * sigma));
        kernel[std::size_t(i + radius)] = v;
        total += v;
    }
    for (double& v : kernel) v /= total;

    auto pass = [&](const std::vector<double>& src, bool horizontal) {
        std::vector<double> dst(src.size());
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                double acc = 0;
                for (int i = -radius; i <= radius; ++i) {
                    int sx = horizontal ? std::clamp(x + i, 0, width - 1) : x;
                    int sy = horizontal ? y : std::clamp(y + i, 0, height - 1);
                    acc += kernel[std::size_t(i + radius)] *
                           src[std::size_t(sy) * std::size_t(width) + std::size_t(sx)];
                }
                dst[std::size_t(y) * std::size_t(width) + std::size_t(x)] = acc;
            }
        return dst;
    };
    return pass(pass(values, true), false);
}

MaskedImage augment(const MaskedImage& input, const AugmentationOp& op) {
    op.validate();
    if (input.image.channels != 3 || input.mask.size() != std::size_t(input.image.width) *
                                                              std::size_t(input.image.height))
        throw Error("augment", "malformed masked image");

    int w = input.image.width, h = input.image.height;
    using Kind = AugmentationOp::Kind;
    switch (op.kind) {
        case Kind::HFlip:
            return flip(input, true);
        case Kind::VFlip:
            return flip(input, false);
        case Kind::GammaContrast: {
            if (op.amount == 1.0) return input;
            MaskedImage out = input;
            std::array<std::uint8_t, 256> lut;
            for (int v = 0; v < 256; ++v)
                lut[std::size_t(v)] = clamp_u8(255.0 * std::pow(v / 255.0, op.amount));
            for (std::uint8_t& p : out.image.pixels) p = lut[p];
            return out;
        }
        case Kind::Brightness: {
            if (op.amount == 0.0) return input;
            MaskedImage out = input;
            for (std::uint8_t& p : out.image.pixels) p = clamp_u8(double(p) + op.amount);
            return out;
        }
        case Kind::GaussianBlur: {
            if (op.amount == 0.0) return input;
            MaskedImage out = input;
            std::vector<double> plane(std::size_t(w) * std::size_t(h));
            for (int c = 0; c < 3; ++c) {
                for (std::size_t i = 0; i < plane.size(); ++i)
                    plane[i] = input.image.pixels[i * 3 + std::size_t(c)];
                std::vector<double> blurred = blur_plane(plane, w, h, op.amount);
                for (std::size_t i = 0; i < plane.size(); ++i)
                    out.image.pixels[i * 3 + std::size_t(c)] = clamp_u8(blurred[i]);
            }
            return out;
        }
        case Kind::RandomCrop: {
            double side = std::sqrt(op.amount);
            int cw = std::max(1, int(std::lround(side * w)));
            int ch = std::max(1, int(std::lround(side * h)));
            Rng rng(op.seed);
            int x0 = int(rng.uniform_int(std::uint64_t(w - cw + 1)));
            int y0 = int(rng.uniform_int(std::uint64_t(h - ch + 1)));
            MaskedImage cropped;
            cropped.image.width = cw;
            cropped.image.height = ch;
            cropped.image.channels = 3;
            cropped.image.pixels.resize(std::size_t(cw) * std::size_t(ch) * 3);
            cropped.mask.resize(std::size_t(cw) * std::size_t(ch));
            for (int y = 0; y < ch; ++y)
                for (int x = 0; x < cw; ++x) {
                    std::size_t dst = std::size_t(y) * std::size_t(cw) + std::size_t(x);
                    std::size_t src =
                        std::size_t(y + y0) * std::size_t(w) + std::size_t(x + x0);
                    for (int c = 0; c < 3; ++c)
                        cropped.image.pixels[dst * 3 + std::size_t(c)] =
                            input.image.pixels[src * 3 + std::size_t(c)];
                    cropped.mask[dst] = input.mask[src];
                }
            MaskedImage out;
            out.image = resize_bilinear(cropped.image, w, h);
            ImageU8 mask_img;
            mask_img.width = cw;
            mask_img.height = ch;
            mask_img.channels = 1;
            mask_img.pixels.assign(cropped.mask.begin(), cropped.mask.end());
            ImageU8 mask_resized = resize_bilinear(mask_img, w, h);
            out.mask.resize(mask_resized.pixels.size());
            for (std::size_t i = 0; i < out.mask.size(); ++i)
                out.mask[i] = mask_resized.pixels[i] >= 128 ? 255 : 0;
            return out;
        }
        case Kind::Rotate: {
            if (op.amount == 0.0) return input;
            double theta = op.amount * M_PI / 180.0;
            double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
            double c = std::cos(theta), s = std::sin(theta);
            return warp(input, [&](double x, double y) {
                double dx = x - cx, dy = y - cy;
                return std::pair{cx + c * dx + s * dy, cy - s * dx + c * dy};
            });
        }
        case Kind::Shear: {
            if (op.amount == 0.0) return input;
            double t = std::tan(op.amount * M_PI / 180.0);
            double cy = (h - 1) / 2.0;
            return warp(input, [&](double x, double y) {
                return std::pair{x - t * (y - cy), y};
            });
        }
    }
    throw Error("augment", "unhandled augmentation kind");
}

MaskedImage augment_chain(const MaskedImage& input, const std::vector<AugmentationOp>& ops) {
    MaskedImage current = input;
    for (const AugmentationOp& op : ops) current = augment(current, op);
    return current;
}

std::vector<AugmentationOp> random_augmentation_chain(Rng& rng) {
    using Kind = AugmentationOp::Kind;
    static constexpr Kind kinds[] = {Kind::HFlip,        Kind::VFlip,  Kind::RandomCrop,
                                     Kind::GammaContrast, Kind::GaussianBlur,
                                     Kind::Brightness,   Kind::Rotate, Kind::Shear};
    int length = int(rng.uniform_int(1, 3));
    std::vector<AugmentationOp> chain;
    for (int i = 0; i < length; ++i) {
        AugmentationOp op;
        op.kind = kinds[rng.uniform_int(8)];
        switch (op.kind) {
            case Kind::RandomCrop:
                op.amount = rng.uniform(0.7, 1.0);
                op.seed = rng.next_u64();
                break;
            case Kind::GammaContrast: op.amount = rng.uniform(0.7, 1.4); break;
            case Kind::GaussianBlur: op.amount = rng.uniform(0.3, 1.5); break;
            case Kind::Brightness: op.amount = rng.uniform(-30.0, 30.0); break;
            case Kind::Rotate: op.amount = rng.uniform(-45.0, 45.0); break;
            case Kind::Shear: op.amount = rng.uniform(-20.0, 20.0); break;
            default: break;
        }
        chain.push_back(op);
    }
    return chain;
}

void balance_minority(CityDataset& city, std::uint64_t seed) {
    long n_with = 0, n_without = 0;
    for (const RooftopImage& roof : city.train)
        (roof.label == Label::WithPV ? n_with : n_without) += 1;
    if (n_with == 0 || n_without == 0)
        throw Error("balance_minority", "training split is missing a class");
    if (n_with == n_without) return;

    Label minority = n_with < n_without ? Label::WithPV : Label::NoPV;
    long deficit = std::abs(n_with - n_without);

    std::vector<const RooftopImage*> sources;
    for (const RooftopImage& roof : city.train)
        if (roof.label == minority) sources.push_back(&roof);
    std::sort(sources.begin(), sources.end(),
              [](const RooftopImage* a, const RooftopImage* b) {
                  return a->rooftop_id < b->rooftop_id;
              });

    Rng rng(derive_seed(seed, 0xba1a));
    std::map<std::string, int> copy_counter;
    std::vector<RooftopImage> copies;
    for (long i = 0; i < deficit; ++i) {
        const RooftopImage& src = *sources[std::size_t(i) % sources.size()];
        MaskedImage base{src.pixels, src.valid_mask};

        MaskedImage made;
        bool ok = false;
        for (int attempt = 0; attempt < 2 && !ok; ++attempt) {
            made = augment_chain(base, random_augmentation_chain(rng));
            ok = mask_count(made.mask) > 0;
        }
        if (!ok) made = augment(base, {AugmentationOp::Kind::HFlip, 0, 0});

        RooftopImage copy;
        int n = ++copy_counter[src.rooftop_id];
        copy.rooftop_id = src.rooftop_id + "_aug" + std::to_string(n);
        copy.city_id = src.city_id;
        copy.pixels = std::move(made.image);
        copy.valid_mask = std::move(made.mask);
        copy.label = src.label;
        copies.push_back(std::move(copy));
    }
    for (RooftopImage& copy : copies) city.train.push_back(std::move(copy));
}

}  // namespace gridpv
